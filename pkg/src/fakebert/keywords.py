"""Word counts over fake-predicted texts and the keyword-removal ablation."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

from .corpus import TweetRecord
from .metrics import EvaluationReport
from .trainer import classify_texts, evaluate

WORD_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")
STOPWORDS_VERSION = "v1"


def load_stopwords():
    text = resources.files("fakebert").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


STOPWORDS = load_stopwords()


def words(text):
    """Lowercased word tokens; apostrophes inside a word are kept, ``#`` is a separator."""
    return WORD_RE.findall(text.lower())


@dataclass
class KeywordReport:
    ranked: list
    stopwords_used: frozenset
    source_size: int

    def top(self, k):
        return [w for w, _ in self.ranked[:k]]

    def to_dict(self):
        return {
            "ranked": [[w, c] for w, c in self.ranked],
            "stopwords_used": sorted(self.stopwords_used),
            "source_size": self.source_size,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def write_csv(self, path, limit=None):
        """Two columns (word, count); ``limit`` trims to the top entries for charting."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["word", "count"])
            writer.writerows(self.ranked[:limit])


def word_frequencies(texts, stopwords=STOPWORDS):
    stopwords = frozenset(w.lower() for w in stopwords)
    texts = list(texts)
    counts = Counter(
        w for t in texts for w in words(t) if w not in stopwords and not w.isnumeric()
    )
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return KeywordReport(ranked=ranked, stopwords_used=stopwords, source_size=len(texts))


def _removal_pattern(words_):
    alts = "|".join(re.escape(w) for w in sorted(set(words_), key=len, reverse=True))
    # whole words only: not preceded or followed by a word character
    return re.compile(rf"(?<![^\W_])(?:{alts})(?![^\W_])", re.IGNORECASE)


def remove_words(text, words_):
    if not words_:
        return text
    stripped = _removal_pattern(words_).sub("", text)
    stripped = " ".join(stripped.split())
    # drop spaces left in front of punctuation by a removed word
    return re.sub(r" +([,.;:!?])", r"\1", stripped)


def remove_keywords(records, words_):
    """Records with every whole-word, case-insensitive occurrence of ``words_`` removed.

    Texts containing none of the words come back untouched; a text reduced
    to nothing becomes "." so the record stays valid.
    """
    words_ = list(words_)
    if not words_:
        return list(records)
    pattern = _removal_pattern(words_)
    out = []
    for r in records:
        if not pattern.search(r.text):
            out.append(r)
            continue
        out.append(TweetRecord(r.id, remove_words(r.text, words_) or ".", r.label))
    return out


def collect_fake_predicted(model, dataset, tokenizer=None):
    """Original texts of the records the model labels fake."""
    texts = [r.text if isinstance(r, TweetRecord) else r for r in dataset]
    labels, _ = classify_texts(model, texts, tokenizer)
    return [t for t, lab in zip(texts, labels) if lab == "fake"]


@dataclass
class AblationResult:
    status: str
    removed_words: list = field(default_factory=list)
    baseline: EvaluationReport | None = None
    ablated: EvaluationReport | None = None
    keywords: KeywordReport | None = None

    @property
    def deltas(self):
        if self.baseline is None or self.ablated is None:
            return {}
        return self.ablated.minus(self.baseline)

    def to_dict(self):
        return {
            "status": self.status,
            "removed_words": self.removed_words,
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "ablated": self.ablated.to_dict() if self.ablated else None,
            "deltas": self.deltas,
        }


def ablation_run(model, test, top_k=10, tokenizer=None, stopwords=STOPWORDS, train_loss=None):
    """Evaluate ``model`` on ``test`` before and after deleting the ``top_k``
    most frequent words of its fake-predicted texts. No retraining happens."""
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    test = list(test)
    baseline = evaluate(model, test, tokenizer, train_loss)
    fake_texts = collect_fake_predicted(model, test, tokenizer)
    if not fake_texts:
        return AblationResult(status="skipped: no fake-predicted texts", baseline=baseline)
    report = word_frequencies(fake_texts, stopwords)
    removed = report.top(top_k)
    ablated = evaluate(model, remove_keywords(test, removed), tokenizer, train_loss)
    return AblationResult(status="ok", removed_words=removed, baseline=baseline, ablated=ablated, keywords=report)
