import numpy as np
import pytest

from convlabel import corpus
from convlabel.corpus import (
    PAD_ID,
    UNK_ID,
    CorpusError,
    Document,
    EmbeddingFormatError,
    LabelSpace,
    Vocabulary,
    load_corpus,
    load_embeddings,
    make_batches,
    parse_embedding_file,
)


def write_tsv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


@pytest.fixture
def small_corpus(tmp_path):
    return write_tsv(
        tmp_path / "train.tsv",
        [
            "d1\tA\tthe cat sat",
            "d2\tA;B\tthe dog ran fast",
            "d3\tB\tcat dog",
        ],
    )


class TestLoadCorpus:
    def test_counts(self, small_corpus):
        docs, vocab, labels = load_corpus(small_corpus)
        assert len(docs) == 3
        assert len(labels) == 2
        assert labels.names == ["A", "B"]

    def test_first_seen_token_ids(self, small_corpus):
        docs, vocab, _ = load_corpus(small_corpus)
        assert vocab.id_for("the") == 2
        assert vocab.id_for("cat") == 3
        assert np.array_equal(docs[0].tokens, [2, 3, 4])

    def test_truncation(self, tmp_path):
        path = write_tsv(tmp_path / "long.tsv", ["d1\tA\t" + " ".join(["w"] * 3000)])
        docs, _, _ = load_corpus(path, max_tokens=2500)
        assert len(docs[0].tokens) == 2500
        # all tokens identical, so the kept prefix is exactly the first 2500
        assert np.all(docs[0].tokens == 2)

    def test_reload_with_own_vocab_is_identity(self, small_corpus):
        docs, vocab, labels = load_corpus(small_corpus)
        again, _, _ = load_corpus(small_corpus, vocab=vocab, label_space=labels)
        for a, b in zip(docs, again):
            assert np.array_equal(a.tokens, b.tokens)
            assert a.labels == b.labels

    def test_unknown_token_maps_to_unk(self, small_corpus, tmp_path):
        _, vocab, labels = load_corpus(small_corpus)
        other = write_tsv(tmp_path / "test.tsv", ["t1\tA\tthe wombat"])
        docs, _, _ = load_corpus(other, vocab=vocab, label_space=labels)
        assert docs[0].tokens[1] == UNK_ID

    def test_unknown_label_rejected(self, small_corpus, tmp_path):
        _, vocab, labels = load_corpus(small_corpus)
        other = write_tsv(tmp_path / "test.tsv", ["t1\tZ\tthe cat"])
        with pytest.raises(CorpusError, match="'Z'"):
            load_corpus(other, vocab=vocab, label_space=labels)

    def test_malformed_line_reports_number(self, tmp_path):
        path = write_tsv(tmp_path / "bad.tsv", ["d1\tA\tok tokens", "only one field"])
        with pytest.raises(CorpusError, match=":2"):
            load_corpus(path)

    def test_empty_token_field_rejected(self, tmp_path):
        path = write_tsv(tmp_path / "bad.tsv", ["d1\tA\t"])
        with pytest.raises(CorpusError, match="no tokens"):
            load_corpus(path)

    def test_empty_label_field_allowed(self, tmp_path):
        path = write_tsv(tmp_path / "nolabel.tsv", ["d1\t\tsome tokens"])
        docs, _, labels = load_corpus(path)
        assert docs[0].labels == frozenset()
        assert len(labels) == 0

    def test_truncation_idempotent(self, tmp_path):
        path = write_tsv(tmp_path / "t.tsv", ["d1\tA\t" + " ".join(f"w{i}" for i in range(30))])
        docs, vocab, labels = load_corpus(path, max_tokens=10)
        write_tsv(
            tmp_path / "again.tsv",
            ["d1\tA\t" + " ".join(vocab.token_for(i) for i in docs[0].tokens)],
        )
        again, _, _ = load_corpus(
            tmp_path / "again.tsv", vocab=vocab, label_space=labels, max_tokens=10
        )
        assert np.array_equal(again[0].tokens, docs[0].tokens)


class TestVocabulary:
    def test_reserved_ids(self):
        vocab = Vocabulary(["a", "b"])
        assert vocab.id_for(corpus.PAD_TOKEN) == PAD_ID
        assert vocab.id_for(corpus.UNK_TOKEN) == UNK_ID
        assert vocab.id_for("a") == 2

    def test_round_trip(self):
        vocab = Vocabulary([f"w{i}" for i in range(50)])
        for i in range(2, len(vocab)):
            assert vocab.id_for(vocab.token_for(i)) == i

    def test_save_load(self, tmp_path):
        vocab = Vocabulary(["alpha", "beta"])
        vocab.save(tmp_path / "vocab.tsv")
        loaded = Vocabulary.load(tmp_path / "vocab.tsv")
        assert loaded.itos == vocab.itos


class TestEmbeddings:
    def make_file(self, tmp_path, words, d=4, rng_seed=0):
        rng = np.random.default_rng(rng_seed)
        lines = [f"{len(words)} {d}"]
        vectors = {}
        for w in words:
            vec = rng.normal(size=d)
            vectors[w] = vec
            lines.append(w + " " + " ".join(str(x) for x in vec))
        path = tmp_path / "emb.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path, vectors

    def test_exact_rows(self, tmp_path):
        vocab = Vocabulary(["a", "b", "c"])
        path, vectors = self.make_file(tmp_path, ["a", "b", "c", corpus.UNK_TOKEN])
        weights = load_embeddings(path, vocab, np.random.default_rng(1))
        assert weights.shape == (5, 4)
        np.testing.assert_allclose(weights[2], vectors["a"])
        np.testing.assert_allclose(weights[4], vectors["c"])

    def test_pad_row_zero(self, tmp_path):
        vocab = Vocabulary(["a"])
        path, _ = self.make_file(tmp_path, ["a"])
        weights = load_embeddings(path, vocab, np.random.default_rng(2))
        assert np.array_equal(weights[PAD_ID], np.zeros(4))

    def test_missing_word_reproducible(self, tmp_path):
        vocab = Vocabulary(["a", "zzz"])
        path, _ = self.make_file(tmp_path, ["a"])
        w1 = load_embeddings(path, vocab, np.random.default_rng(3))
        w2 = load_embeddings(path, vocab, np.random.default_rng(3))
        assert np.array_equal(w1, w2)
        row = w1[vocab.id_for("zzz")]
        assert np.all(np.abs(row) < 0.25 / 4)
        assert np.any(row != 0.0)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\na 1 2 3\nb 1 2\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError, match=":3"):
            parse_embedding_file(path)

    def test_non_numeric_entry(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("1 2\na 1 oops\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError, match="non-numeric"):
            parse_embedding_file(path)


def doc(doc_id, length, labels=()):
    return Document(doc_id, np.arange(2, 2 + length, dtype=np.int64), frozenset(labels))


class TestMakeBatches:
    def test_sort_and_chunk(self):
        docs = [doc("a", 5), doc("b", 2), doc("c", 9)]
        batches = make_batches(docs, 2, n_labels=1)
        assert [b.doc_ids for b in batches] == [["b", "a"], ["c"]]
        assert batches[0].token_ids.shape[1] == 5
        assert batches[1].token_ids.shape[1] == 9

    def test_batch_size_one_no_padding(self):
        docs = [doc("a", 5), doc("b", 2)]
        for b in make_batches(docs, 1, n_labels=1):
            assert b.token_ids.shape[1] == b.lengths[0]
            assert np.all(b.token_ids != PAD_ID)

    def test_deterministic(self):
        docs = [doc("a", 5), doc("b", 5), doc("c", 2)]
        first = make_batches(docs, 2, n_labels=1)
        second = make_batches(docs, 2, n_labels=1)
        for x, y in zip(first, second):
            assert x.doc_ids == y.doc_ids
            assert np.array_equal(x.token_ids, y.token_ids)

    def test_stable_tie_break(self):
        docs = [doc("first", 4), doc("second", 4), doc("third", 4)]
        (batch,) = make_batches(docs, 3, n_labels=1)
        assert batch.doc_ids == ["first", "second", "third"]

    def test_padding_invariant(self):
        rng = np.random.default_rng(5)
        docs = [doc(f"d{i}", int(rng.integers(1, 12)), {0}) for i in range(17)]
        for batch in make_batches(docs, 4, n_labels=2):
            assert batch.token_ids.shape[1] == batch.lengths.max()
            for i in range(len(batch.doc_ids)):
                assert np.all(batch.token_ids[i, batch.lengths[i] :] == PAD_ID)
                assert np.all(batch.token_ids[i, : batch.lengths[i]] != PAD_ID)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            make_batches([], 2)

    def test_label_matrix(self):
        docs = [doc("a", 3, {0, 2}), doc("b", 2, {1})]
        mat = corpus.label_matrix(docs, 3)
        assert np.array_equal(mat, [[1, 0, 1], [0, 1, 0]])


class TestLabelSpace:
    def test_save_load(self, tmp_path):
        labels = LabelSpace(["X", "Y", "Z"])
        labels.save(tmp_path / "labels.tsv")
        loaded = LabelSpace.load(tmp_path / "labels.tsv")
        assert loaded.names == labels.names
        assert loaded.index == labels.index
