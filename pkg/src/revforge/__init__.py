"""Weakly-supervised error-correction bitext, iterative decoding and GEC metrics."""

__version__ = "0.1.0"

from .decode import (  # noqa: E402
    EOS,
    DecodeParams,
    DecodeTrace,
    Hypothesis,
    beam_search,
    ensemble,
    iterative_decode,
    tune_params,
)
from .metrics import extract_edits, f_beta, gleu, m2_score  # noqa: E402
from .tokenize import detokenize, tokenize  # noqa: E402
from .toy_model import RuleScorer, load_rules  # noqa: E402

__all__ = [
    "EOS",
    "DecodeParams",
    "DecodeTrace",
    "Hypothesis",
    "RuleScorer",
    "beam_search",
    "detokenize",
    "ensemble",
    "extract_edits",
    "f_beta",
    "gleu",
    "iterative_decode",
    "load_rules",
    "m2_score",
    "tokenize",
    "tune_params",
]
