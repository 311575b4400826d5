"""Corpus ingestion: documents, vocabulary, embeddings, and length-sorted batches.

File format is a plain TSV, one record per line:

    id<TAB>label;label;...<TAB>token token token ...

Token ids 0 and 1 are reserved for padding and unknown words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

DEFAULT_MAX_TOKENS = 2500


class CorpusError(ValueError):
    """Malformed corpus file or record."""


class EmbeddingFormatError(ValueError):
    """Malformed embedding file."""


class Vocabulary:
    """Immutable token <-> id mapping with reserved PAD (0) and UNK (1) slots."""

    def __init__(self, tokens):
        self.itos = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise CorpusError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id_for(self, token):
        return self.stoi.get(token, UNK_ID)

    def token_for(self, idx):
        return self.itos[idx]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.itos[2:]:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


class LabelSpace:
    """Label name <-> dense id mapping, ids assigned in first-seen order."""

    def __init__(self, names):
        self.names = list(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise CorpusError("duplicate label name")

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.index

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for n in self.names:
                f.write(n + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


@dataclass
class Document:
    id: str
    tokens: np.ndarray  # int64 token ids, length >= 1
    labels: frozenset  # label ids in [0, L)


@dataclass
class Batch:
    doc_ids: list
    token_ids: np.ndarray  # (B, T) int64, padded with PAD_ID
    lengths: np.ndarray  # (B,) true lengths
    labels: np.ndarray  # (B, L) 0/1 float64


def load_corpus(path, vocab=None, label_space=None, max_tokens=DEFAULT_MAX_TOKENS):
    """Read a corpus TSV.

    If ``vocab`` is None a new vocabulary (and label space) is built from the
    file, with tokens and labels numbered in first-seen order. Otherwise
    unseen tokens map to UNK and unseen labels are an error.

    Returns (documents, vocabulary, label_space).
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be positive")
    build_vocab = vocab is None
    if build_vocab:
        token_order: list = []
        token_ids: dict = {}
        label_order: list = []
        label_ids: dict = {}
    else:
        if label_space is None:
            raise ValueError("label_space is required when vocab is given")

    raw = []  # (id, token_strings, label_strings)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise CorpusError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            doc_id, label_field, token_field = fields
            tokens = token_field.split()
            if not tokens:
                raise CorpusError(f"{path}:{lineno}: record {doc_id!r} has no tokens")
            labels = [l for l in label_field.split(";") if l]
            raw.append((lineno, doc_id, tokens, labels))

    docs = []
    for lineno, doc_id, tokens, labels in raw:
        tokens = tokens[:max_tokens]
        if build_vocab:
            ids = []
            for t in tokens:
                if t not in token_ids:
                    token_ids[t] = len(token_order) + 2
                    token_order.append(t)
                ids.append(token_ids[t])
            lab = set()
            for name in labels:
                if name not in label_ids:
                    label_ids[name] = len(label_order)
                    label_order.append(name)
                lab.add(label_ids[name])
        else:
            ids = [vocab.id_for(t) for t in tokens]
            lab = set()
            for name in labels:
                if name not in label_space:
                    raise CorpusError(
                        f"{path}:{lineno}: unknown label {name!r} in record {doc_id!r}"
                    )
                lab.add(label_space.index[name])
        docs.append(Document(doc_id, np.asarray(ids, dtype=np.int64), frozenset(lab)))

    if build_vocab:
        vocab = Vocabulary(token_order)
        label_space = LabelSpace(label_order)
    return docs, vocab, label_space


def parse_embedding_file(path):
    """Parse the text embedding format (header ``V d``, then ``word v1 ... vd``).

    Returns (word -> float64 vector dict, d).
    """
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(f"{path}: header must be 'V d'")
        try:
            _, d = int(header[0]), int(header[1])
        except ValueError as e:
            raise EmbeddingFormatError(f"{path}: non-integer header") from e
        table = {}
        for lineno, line in enumerate(f, start=2):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != d + 1:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {d} vector entries, got {len(fields) - 1}"
                )
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError as e:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric entry") from e
            table[fields[0]] = vec
    return table, d


def build_embedding_matrix(table, d, vocab, rng):
    """Materialize a (V, d) embedding matrix aligned to vocabulary ids.

    PAD row is zeros; words absent from the table (including UNK) get rows
    drawn from uniform(-0.25/d, 0.25/d) using ``rng``, in vocabulary-id order.
    """
    weights = np.zeros((len(vocab), d), dtype=np.float64)
    bound = 0.25 / d
    for i in range(1, len(vocab)):
        word = vocab.token_for(i)
        vec = table.get(word)
        if vec is None:
            weights[i] = rng.uniform(-bound, bound, size=d)
        else:
            weights[i] = vec
    return weights


def load_embeddings(path, vocab, rng):
    """Load pretrained embeddings for ``vocab``; returns a (V, d) float64 matrix."""
    table, d = parse_embedding_file(path)
    return build_embedding_matrix(table, d, vocab, rng)


def make_batches(docs, batch_size, n_labels=None):
    """Sort documents ascending by length (stable) and chunk into batches.

    Deterministic: the same input always yields the identical batch sequence.
    """
    if not docs:
        raise ValueError("cannot batch an empty document list")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if n_labels is None:
        n_labels = _infer_label_count(docs)
    ordered = sorted(docs, key=lambda doc: len(doc.tokens))
    batches = []
    for start in range(0, len(ordered), batch_size):
        chunk = ordered[start : start + batch_size]
        batches.append(make_batch(chunk, n_labels))
    return batches


def make_batch(docs, n_labels):
    """Pad a group of documents to the group's max length into one Batch."""
    max_len = max(len(d.tokens) for d in docs)
    ids = np.full((len(docs), max_len), PAD_ID, dtype=np.int64)
    lengths = np.zeros(len(docs), dtype=np.int64)
    labels = np.zeros((len(docs), n_labels), dtype=np.float64)
    for i, doc in enumerate(docs):
        ids[i, : len(doc.tokens)] = doc.tokens
        lengths[i] = len(doc.tokens)
        for l in doc.labels:
            labels[i, l] = 1.0
    return Batch([d.id for d in docs], ids, lengths, labels)


def _infer_label_count(docs):
    top = max((max(d.labels) for d in docs if d.labels), default=-1)
    return top + 1


def label_matrix(docs, n_labels):
    """0/1 indicator matrix (N, L) in document order."""
    out = np.zeros((len(docs), n_labels), dtype=np.float64)
    for i, doc in enumerate(docs):
        for l in doc.labels:
            out[i, l] = 1.0
    return out
