"""Small synthetic tweet corpora with a planted, linearly separable signal."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import TweetRecord, write_csv

FILLER = (
    "covid vaccine cases people health new state today number reported tests deaths "
    "pandemic hospital virus week spread government data masks lockdown doctors "
    "patients world country response update confirmed total"
).split()
FAKE_MARKERS = ("hoax", "miracle", "secret", "bleach")
REAL_MARKERS = ("officials", "according", "guidance", "study")


def make_corpus(n, seed=0, fake_fraction=0.5, words_per_text=(6, 14), prefix="t"):
    """``n`` labeled records; each fake text carries a fake marker word, each real one a real marker."""
    rng = np.random.default_rng(seed)
    n_fake = int(round(n * fake_fraction))
    labels = ["fake"] * n_fake + ["real"] * (n - n_fake)
    rng.shuffle(labels)
    records = []
    for i, label in enumerate(labels):
        k = int(rng.integers(words_per_text[0], words_per_text[1] + 1))
        words = list(rng.choice(FILLER, size=k))
        markers = FAKE_MARKERS if label == "fake" else REAL_MARKERS
        words.insert(int(rng.integers(0, k + 1)), str(rng.choice(markers)))
        text = " ".join(words).capitalize() + rng.choice([".", "!", " #covid19", " https://t.co/x1"])
        records.append(TweetRecord(f"{prefix}{i}", text, label))
    return records


def write_corpus_files(directory, n_train=96, n_test=32, seed=0):
    """Write ``train.csv`` and ``test.csv`` shaped like the public dataset; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train = make_corpus(n_train, seed=seed, prefix="")
    test = make_corpus(n_test, seed=seed + 1, prefix="")
    paths = directory / "train.csv", directory / "test.csv"
    write_csv(train, paths[0])
    write_csv(test, paths[1])
    return paths
