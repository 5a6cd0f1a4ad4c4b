"""scikit-learn style wrappers around the decoder and the noise injector."""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_gold, check_sentences, check_texts
from .decode import DecodeParams, decode_corpus, tune_params
from .errors import ConfigError
from .forge import NOISE_OPS, NoiseSpec, noise_text
from .metrics import m2_score
from .rng import SplitMix64, derive_seed


class IterativeCorrector(BaseEstimator):
    """Iterative cost-ratio decoder.

    ``fit`` picks ``threshold`` and ``max_iter`` from the grids on a dev set
    by F0.5 when grids are given; otherwise it just freezes the fixed values.
    ``predict`` returns corrected token tuples, ``score`` corpus F0.5.
    """

    def __init__(self, scorer=None, beam=4, threshold=None, max_iter=4,
                 thresholds=None, max_iters=None, early_stop_on_fixed_point=True):
        self.scorer = scorer
        self.beam = beam
        self.threshold = threshold
        self.max_iter = max_iter
        self.thresholds = thresholds
        self.max_iters = max_iters
        self.early_stop_on_fixed_point = early_stop_on_fixed_point

    def fit(self, X, y=None):
        if self.scorer is None:
            raise ConfigError("IterativeCorrector needs a scorer")
        if self.thresholds is not None or self.max_iters is not None:
            sources = check_sentences(X)
            if y is None:
                raise ValueError("tuning needs gold annotations or targets in y")
            gold = check_gold(sources, y)
            thresholds = self.thresholds or [self.threshold]
            max_iters = self.max_iters or [self.max_iter]
            if None in thresholds:
                raise ConfigError("no threshold to tune over")
            result = tune_params(list(zip(sources, gold)), self.scorer, thresholds, max_iters, self.beam)
            self.params_ = DecodeParams(
                threshold=result.params.threshold,
                beam=self.beam,
                max_iter=result.params.max_iter,
                early_stop_on_fixed_point=self.early_stop_on_fixed_point,
            )
            self.score_table_ = result.table
        else:
            if self.threshold is None:
                raise ConfigError("threshold must be set (or tuned via thresholds=...)")
            self.params_ = DecodeParams(self.threshold, self.beam, self.max_iter, self.early_stop_on_fixed_point)
            self.score_table_ = []
        return self

    def decode(self, X):
        """Full decode traces."""
        check_is_fitted(self, "params_")
        return decode_corpus(check_sentences(X), self.scorer, self.params_)

    def predict(self, X):
        return [trace.final for trace in self.decode(X)]

    def score(self, X, y):
        sources = check_sentences(X)
        gold = check_gold(sources, y)
        hyps = self.predict(sources)
        return m2_score(zip(sources, hyps, gold)).f_half


class SpellingNoiser(TransformerMixin, BaseEstimator):
    """Character-level spelling noise as a stateless transformer.

    Row ``i`` uses a stream derived from ``(seed, i)``, so output does not
    depend on batching.
    """

    def __init__(self, rate=0.003, op_weights=None, alphabet=None, seed=0):
        self.rate = rate
        self.op_weights = op_weights
        self.alphabet = alphabet
        self.seed = seed

    def _spec(self) -> NoiseSpec:
        kwargs = {"rate": self.rate, "seed": self.seed}
        if self.op_weights is not None:
            kwargs["op_weights"] = dict(self.op_weights)
        if self.alphabet is not None:
            kwargs["alphabet"] = self.alphabet
        return NoiseSpec(**kwargs)

    def fit(self, X=None, y=None):
        self.spec_ = self._spec()
        self.operations_ = tuple(op for op in NOISE_OPS if self.spec_.op_weights.get(op, 0) > 0)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        texts = check_texts(X)
        return [
            noise_text(t, self.spec_, SplitMix64(derive_seed(self.seed, i)))[0]
            for i, t in enumerate(texts)
        ]
