"""Loading the labeled tweet CSV files and the seeded train/test split."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

LABELS = ("real", "fake")
FAKE = LABELS.index("fake")


class CorpusError(ValueError):
    pass


class SchemaError(CorpusError):
    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path else ""
        super().__init__(f"missing required column {column!r}{where}")


class LabelError(CorpusError):
    def __init__(self, row, value):
        self.row = row
        self.value = value
        super().__init__(f"row {row}: unparseable label {value!r} (expected 'real' or 'fake')")


class EmptyCorpusError(CorpusError):
    pass


class UnlabeledRecordError(CorpusError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"unlabeled records present: {', '.join(self.ids)}")


def parse_label(value):
    """Map a label string to its canonical form; ``None`` if unparseable."""
    value = str(value).strip().lower()
    return value if value in LABELS else None


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    label: str | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise CorpusError(f"record {self.id!r} has empty text")
        if self.label is not None and self.label not in LABELS:
            raise CorpusError(f"record {self.id!r} has invalid label {self.label!r}")

    @property
    def target(self):
        """Class index of the label (real=0, fake=1)."""
        return None if self.label is None else LABELS.index(self.label)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple
    seed: int
    ratio: float


def load_csv(path, has_labels=True):
    """Read one tweet CSV (columns ``id``, ``tweet`` and optionally ``label``).

    Rows keep file order. Quoted fields may contain commas and newlines.
    Raises :class:`SchemaError` for a missing column, :class:`LabelError`
    for a bad label (``row`` is the 0-based data-row index) and
    :class:`EmptyCorpusError` when the file has no data rows.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyCorpusError(f"{path} is empty")
        columns = {name.strip().lower(): name for name in reader.fieldnames}
        required = ["id", "tweet"] + (["label"] if has_labels else [])
        for col in required:
            if col not in columns:
                raise SchemaError(col, path)

        records = []
        for i, row in enumerate(reader):
            label = None
            if has_labels:
                raw = row[columns["label"]]
                label = parse_label(raw)
                if label is None:
                    raise LabelError(i, raw)
            records.append(TweetRecord(str(row[columns["id"]]).strip(), row[columns["tweet"]], label))
    if not records:
        raise EmptyCorpusError(f"{path} has no data rows")
    return records


def merge_sources(sources: Mapping[str, Sequence[TweetRecord]]):
    """Concatenate several corpora, prefixing colliding ids with their source tag."""
    seen = Counter()
    for recs in sources.values():
        seen.update({r.id for r in recs})
    merged = []
    for tag, recs in sources.items():
        for r in recs:
            rid = f"{tag}:{r.id}" if seen[r.id] > 1 else r.id
            merged.append(TweetRecord(rid, r.text, r.label))
    return merged


def train_size(n, ratio):
    """Number of training records: ``ratio * n`` rounded half-up."""
    exact = Decimal(str(ratio)) * n
    return int(exact.to_integral_value(rounding=ROUND_HALF_UP))


def merge_and_split(records: Iterable[TweetRecord], ratio=0.9, seed=42):
    records = list(records)
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    unlabeled = [r.id for r in records if r.label is None]
    if unlabeled:
        raise UnlabeledRecordError(unlabeled)
    dupes = sorted(k for k, v in Counter(r.id for r in records).items() if v > 1)
    if dupes:
        raise CorpusError(f"duplicate ids: {', '.join(dupes[:10])}")

    order = np.random.default_rng(seed).permutation(len(records))
    k = train_size(len(records), ratio)
    train = tuple(records[i] for i in order[:k])
    test = tuple(records[i] for i in order[k:])
    return DatasetSplit(train=train, test=test, seed=seed, ratio=ratio)


def label_counts(records):
    counts = {}
    for r in records:
        if r.label is None:
            raise UnlabeledRecordError([r.id])
        counts[r.label] = counts.get(r.label, 0) + 1
    return counts


def write_csv(records, path):
    """Write records in the same column layout :func:`load_csv` reads."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "tweet", "label"])
        for r in records:
            writer.writerow([r.id, r.text, r.label or ""])
