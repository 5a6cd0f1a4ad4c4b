"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

from .metrics import GoldAnnotation, gold_from_target
from .tokenize import tokenize


def check_sentences(X) -> list[tuple[str, ...]]:
    """Accept raw strings or token sequences; return token tuples."""
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of sentences, got a single string")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, str):
            out.append(tuple(tokenize(x)))
        elif isinstance(x, (list, tuple)) and all(isinstance(t, str) for t in x):
            out.append(tuple(x))
        else:
            raise TypeError(f"sentence {i} is neither a string nor a list of tokens")
    return out


def check_gold(sources, y) -> list[GoldAnnotation]:
    """Gold annotations for ``sources``; plain targets become single-annotator gold."""
    y = list(y)
    if len(y) != len(sources):
        raise ValueError(f"X has {len(sources)} sentences but y has {len(y)}")
    out = []
    for src, target in zip(sources, y):
        if isinstance(target, GoldAnnotation):
            out.append(target)
        else:
            out.append(gold_from_target(src, check_sentences([target])[0]))
    return out


def check_texts(X) -> list[str]:
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of strings, got a single string")
    X = list(X)
    for i, x in enumerate(X):
        if not isinstance(x, str):
            raise TypeError(f"item {i} is not a string")
    return X
