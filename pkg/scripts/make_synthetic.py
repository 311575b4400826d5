"""Regenerate the bundled synthetic corpus under data/.

Eight labels, each with three signature tokens; a document contains the
signature tokens of its labels mixed with shared noise tokens, so the labels
are recoverable from the text. Deterministic: fixed seed, fixed layout.
"""

from pathlib import Path

import numpy as np

N_LABELS = 8
SIGS_PER_LABEL = 3
N_NOISE = 16
EMBED_DIM = 10
SEED = 7

OUT = Path(__file__).resolve().parent.parent / "data"


def vocabulary():
    words = []
    for l in range(N_LABELS):
        words += [f"sig{l}{chr(ord('a') + j)}" for j in range(SIGS_PER_LABEL)]
    words += [f"noise{i}" for i in range(N_NOISE)]
    return words


def make_doc(rng, doc_id):
    n_lab = int(rng.integers(1, 4))
    labels = sorted(rng.choice(N_LABELS, size=n_lab, replace=False).tolist())
    tokens = []
    for l in labels:
        for j in range(SIGS_PER_LABEL):
            tokens += [f"sig{l}{chr(ord('a') + j)}"] * 3
    n_noise = int(rng.integers(8, 20))
    tokens += [f"noise{int(rng.integers(0, N_NOISE))}" for _ in range(n_noise)]
    rng.shuffle(tokens)
    label_field = ";".join(f"L{l}" for l in labels)
    return f"{doc_id}\t{label_field}\t{' '.join(tokens)}"


def write_split(rng, path, prefix, count):
    lines = [make_doc(rng, f"{prefix}{i:03d}") for i in range(count)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_embeddings(rng, path):
    words = vocabulary()
    lines = [f"{len(words)} {EMBED_DIM}"]
    for w in words:
        vec = rng.uniform(-0.5, 0.5, size=EMBED_DIM)
        lines.append(w + " " + " ".join(f"{x:.6f}" for x in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def main():
    OUT.mkdir(exist_ok=True)
    rng = np.random.default_rng(SEED)
    write_split(rng, OUT / "synth_train.tsv", "tr", 20)
    write_split(rng, OUT / "synth_valid.tsv", "va", 8)
    write_split(rng, OUT / "synth_test.tsv", "te", 8)
    write_embeddings(rng, OUT / "synth_embeddings.txt")
    print(f"wrote synthetic corpus to {OUT}")


if __name__ == "__main__":
    main()
