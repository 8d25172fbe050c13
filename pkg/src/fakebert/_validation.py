"""Input checks shared by the estimator wrappers."""

import numpy as np

from .corpus import LABELS


def check_texts(X):
    """Return ``X`` as a list of non-empty strings."""
    if isinstance(X, str):
        raise TypeError("expected an iterable of texts, got a single string")
    texts = list(np.asarray(X, dtype=object).reshape(-1)) if hasattr(X, "__array__") else list(X)
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise TypeError(f"text at index {i} is {type(t).__name__}, not str")
        if not t.strip():
            raise ValueError(f"text at index {i} is empty")
    return texts


def check_labels(y, n_samples):
    """Return ``y`` as label strings (``real``/``fake``); accepts strings or 0/1."""
    y = list(np.asarray(y, dtype=object).reshape(-1))
    if len(y) != n_samples:
        raise ValueError(f"got {len(y)} labels for {n_samples} texts")
    out = []
    for i, v in enumerate(y):
        if isinstance(v, str) and v.strip().lower() in LABELS:
            out.append(v.strip().lower())
        elif not isinstance(v, str) and v in (0, 1):
            out.append(LABELS[int(v)])
        else:
            raise ValueError(f"label at index {i} is {v!r}; expected one of {LABELS} or 0/1")
    return out
