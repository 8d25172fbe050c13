"""Subword tokenization and fixed-length encoding of tweets.

The tokenizer follows the published BERT recipe: text cleanup, whitespace
and punctuation splitting, optional lowercasing with accent stripping, then
greedy longest-match-first WordPiece against the vocabulary.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
MAX_CHARS_PER_WORD = 100


@dataclass(frozen=True)
class TokenizerSpec:
    vocab: dict = field(repr=False)
    max_len: int = 512
    lowercase: bool = True
    cls_token: str = CLS
    sep_token: str = SEP
    pad_token: str = PAD
    unk_token: str = UNK

    def __post_init__(self):
        specials = (self.cls_token, self.sep_token, self.pad_token, self.unk_token)
        missing = [t for t in specials if t not in self.vocab]
        if missing:
            raise ValueError(f"special tokens missing from vocabulary: {missing}")
        if len({self.vocab[t] for t in specials}) != 4:
            raise ValueError("special token ids must be distinct")
        if self.max_len < 2:
            raise ValueError("max_len must leave room for the start and end tokens")

    @property
    def cls_id(self):
        return self.vocab[self.cls_token]

    @property
    def sep_id(self):
        return self.vocab[self.sep_token]

    @property
    def pad_id(self):
        return self.vocab[self.pad_token]

    @property
    def unk_id(self):
        return self.vocab[self.unk_token]

    @property
    def vocab_size(self):
        return max(self.vocab.values()) + 1

    @classmethod
    def from_vocab_file(cls, path, **kwargs):
        """Load a vocabulary with one subword per line; the line number is the id."""
        with open(path, encoding="utf-8") as fh:
            vocab = {line.rstrip("\n"): i for i, line in enumerate(fh)}
        return cls(vocab=vocab, **kwargs)

    def save_vocab(self, path):
        tokens = sorted(self.vocab, key=self.vocab.__getitem__)
        Path(path).write_text("".join(t + "\n" for t in tokens), encoding="utf-8")


@dataclass(frozen=True)
class EncodedExample:
    token_ids: tuple
    attention_mask: tuple
    label: str | None = None


def _is_whitespace(ch):
    if ch in " \t\n\r":
        return True
    return unicodedata.category(ch) == "Zs"


def _is_control(ch):
    if ch in "\t\n\r":
        return False
    return unicodedata.category(ch).startswith("C")


def _is_punctuation(ch):
    cp = ord(ch)
    # ASCII symbols like "$" and "^" are not Unicode P* but are split anyway.
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def _is_cjk(cp):
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0x20000 <= cp <= 0x2A6DF
        or 0x2A700 <= cp <= 0x2B73F
        or 0x2B740 <= cp <= 0x2B81F
        or 0x2B820 <= cp <= 0x2CEAF
        or 0xF900 <= cp <= 0xFAFF
        or 0x2F800 <= cp <= 0x2FA1F
    )


def _clean(text):
    out = []
    for ch in text:
        cp = ord(ch)
        if cp == 0 or cp == 0xFFFD or _is_control(ch):
            continue
        if _is_whitespace(ch):
            out.append(" ")
        elif _is_cjk(cp):
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out)


def _strip_accents(text):
    text = unicodedata.normalize("NFD", text)
    return "".join(ch for ch in text if unicodedata.category(ch) != "Mn")


def _split_punctuation(word):
    pieces, current = [], []
    for ch in word:
        if _is_punctuation(ch):
            if current:
                pieces.append("".join(current))
                current = []
            pieces.append(ch)
        else:
            current.append(ch)
    if current:
        pieces.append("".join(current))
    return pieces


def basic_tokenize(text, lowercase=True):
    """Whitespace/punctuation split with optional lowercasing and accent removal."""
    words = []
    for word in _clean(text).split():
        if lowercase:
            word = _strip_accents(word.lower())
        words.extend(_split_punctuation(word))
    return words


def wordpiece(word, vocab, unk_token=UNK):
    """Greedy longest-match-first split of one word; the whole word becomes
    ``unk_token`` when any remainder cannot be matched."""
    if len(word) > MAX_CHARS_PER_WORD:
        return [unk_token]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = "##" + candidate
            if candidate in vocab:
                match = candidate
                break
            end -= 1
        if match is None:
            return [unk_token]
        pieces.append(match)
        start = end
    return pieces


def tokenize(text, spec):
    tokens = []
    for word in basic_tokenize(text, spec.lowercase):
        tokens.extend(wordpiece(word, spec.vocab, spec.unk_token))
    return tokens


def encode(text, spec, label=None):
    """Encode ``text`` as ``[CLS] tokens [SEP]`` padded or head-truncated to ``spec.max_len``."""
    ids = [spec.vocab.get(t, spec.unk_id) for t in tokenize(text, spec)]
    ids = [spec.cls_id] + ids[: spec.max_len - 2] + [spec.sep_id]
    n_pad = spec.max_len - len(ids)
    return EncodedExample(
        token_ids=tuple(ids + [spec.pad_id] * n_pad),
        attention_mask=(1,) * len(ids) + (0,) * n_pad,
        label=label,
    )


def encode_batch(texts, spec, labels=None):
    """Encode many texts into ``(ids, mask)`` int64 arrays of shape ``(n, max_len)``."""
    labels = labels if labels is not None else [None] * len(texts)
    examples = [encode(t, spec, y) for t, y in zip(texts, labels)]
    return stack(examples)


def stack(examples):
    ids = np.array([e.token_ids for e in examples], dtype=np.int64).reshape(len(examples), -1)
    mask = np.array([e.attention_mask for e in examples], dtype=np.int64).reshape(len(examples), -1)
    return ids, mask


def _text_of(item):
    return item if isinstance(item, str) else item.text


def length_histogram(records, spec):
    """Token lengths (special tokens included, before padding or truncation) -> count."""
    hist = Counter(len(tokenize(_text_of(r), spec)) + 2 for r in records)
    return dict(sorted(hist.items()))


def build_vocab(texts, size=1000, lowercase=True):
    """Build a small WordPiece vocabulary from a corpus.

    Every character seen gets a word-initial and a continuation entry, so no
    word in ``texts`` ever falls back to ``[UNK]``; the remaining slots go to
    the most frequent whole words (ties broken alphabetically).
    """
    words = Counter()
    for t in texts:
        words.update(basic_tokenize(t, lowercase))
    chars = sorted({ch for w in words for ch in w})
    tokens = list(SPECIAL_TOKENS) + chars + ["##" + ch for ch in chars]
    if len(tokens) > size:
        raise ValueError(f"vocabulary size {size} too small for {len(chars)} distinct characters")
    known = set(tokens)
    for w, _ in sorted(words.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(tokens) >= size:
            break
        if w not in known:
            tokens.append(w)
            known.add(w)
    return {t: i for i, t in enumerate(tokens)}
