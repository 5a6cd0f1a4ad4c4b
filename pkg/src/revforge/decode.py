"""Beam search over an abstract step scorer and cost-ratio iterative decoding.

A *step scorer* is anything with ``next_scores(source, prefix)`` returning a
mapping from candidate next tokens (``EOS`` included) to log-probabilities.
Hypothesis cost is the plain sum of per-step negative log-probabilities.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from .errors import ConfigError, DecodeError, ScorerError

EOS = "</s>"
INF = math.inf


class StepScorer(Protocol):
    def next_scores(self, source: tuple[str, ...], prefix: tuple[str, ...]) -> Mapping[str, float]:
        ...


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    cost: float
    complete: bool = True


@dataclass(frozen=True)
class DecodeParams:
    threshold: float
    beam: int = 4
    max_iter: int = 4
    early_stop_on_fixed_point: bool = True

    def __post_init__(self):
        problems = []
        if not isinstance(self.beam, int) or self.beam < 1:
            problems.append(f"beam must be an integer >= 1, got {self.beam!r}")
        if not (isinstance(self.threshold, (int, float)) and self.threshold > 0):
            problems.append(f"threshold must be > 0, got {self.threshold!r}")
        if not isinstance(self.max_iter, int) or self.max_iter < 1:
            problems.append(f"max_iter must be an integer >= 1, got {self.max_iter!r}")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class IterationRecord:
    input: tuple[str, ...]
    nbest: list[Hypothesis]
    identity_cost: float
    best_nonidentity_cost: float
    ratio: float
    accepted: bool
    output: tuple[str, ...]

    @property
    def output_cost(self) -> float:
        return self.best_nonidentity_cost if self.accepted else self.identity_cost

    def to_dict(self) -> dict:
        def num(x):
            return None if math.isinf(x) or math.isnan(x) else x

        return {
            "input": list(self.input),
            "output": list(self.output),
            "accepted": self.accepted,
            "identity_cost": num(self.identity_cost),
            "best_nonidentity_cost": num(self.best_nonidentity_cost),
            "ratio": num(self.ratio),
            "nbest": [{"tokens": list(h.tokens), "cost": h.cost} for h in self.nbest],
        }


@dataclass
class DecodeTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    final: tuple[str, ...] = ()
    cycled: bool = False

    def output_after(self, k: int) -> tuple[str, ...]:
        """Output the decoder would give with ``max_iter = k``."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.iterations:
            return self.final
        if self.cycled and k >= len(self.iterations):
            return self.final
        return self.iterations[min(k, len(self.iterations)) - 1].output

    def to_dict(self) -> dict:
        return {
            "final": list(self.final),
            "cycled": self.cycled,
            "iterations": [it.to_dict() for it in self.iterations],
        }


def _checked_scores(scorer, source, prefix) -> Mapping[str, float]:
    scores = scorer.next_scores(source, prefix)
    if not scores:
        raise DecodeError(f"scorer returned no candidates for prefix {list(prefix)!r}")
    for tok, lp in scores.items():
        if not math.isfinite(lp):
            raise DecodeError(f"non-finite score {lp!r} for {tok!r} after prefix {list(prefix)!r}")
    return scores


def beam_search(source, scorer: StepScorer, beam: int = 4, max_len: int | None = None) -> list[Hypothesis]:
    """Return up to ``beam`` completed hypotheses sorted by ``(cost, tokens)``.

    At every length step all expansions of the live beam compete for
    ``beam`` slots; expansions ending in ``EOS`` are retired to the finished
    pool.  Ties are broken lexicographically on the token sequence.
    """
    if beam < 1:
        raise ConfigError("beam must be >= 1")
    source = tuple(source)
    if max_len is None:
        max_len = 2 * len(source) + 10
    live: list[tuple[float, tuple[str, ...]]] = [(0.0, ())]
    finished: list[tuple[float, tuple[str, ...]]] = []
    for _ in range(max_len + 1):
        if not live:
            break
        if len(finished) >= beam:
            worst_kept = heapq.nsmallest(beam, finished)[-1][0]
            if live[0][0] > worst_kept:
                break
        expansions = []
        for cost, prefix in live:
            for tok, lp in _checked_scores(scorer, source, prefix).items():
                expansions.append((cost - lp, prefix + (tok,)))
        expansions = heapq.nsmallest(beam, expansions)
        live = []
        for cost, seq in expansions:
            if seq[-1] == EOS:
                finished.append((cost, seq[:-1]))
            elif len(seq) <= max_len:
                live.append((cost, seq))
    finished.sort()
    return [Hypothesis(tokens, cost) for cost, tokens in finished[:beam]]


def cost_ratio(nonidentity_cost: float, identity_cost: float) -> float:
    """Ratio used by the rewrite rule; an absent identity (+inf) gives 0."""
    if math.isinf(nonidentity_cost):
        return math.nan if math.isinf(identity_cost) else INF
    if math.isinf(identity_cost):
        return 0.0
    if identity_cost == 0.0:
        return math.nan if nonidentity_cost == 0.0 else INF
    return nonidentity_cost / identity_cost


def decode_step(current: tuple[str, ...], scorer: StepScorer, params: DecodeParams) -> IterationRecord:
    nbest = beam_search(current, scorer, params.beam)
    identity_cost = INF
    best_cost = INF
    best = None
    for hyp in nbest:
        if hyp.tokens == current:
            identity_cost = hyp.cost
        elif hyp.cost < best_cost:
            best_cost = hyp.cost
            best = hyp.tokens
    ratio = cost_ratio(best_cost, identity_cost)
    # NaN compares false, so degenerate ratios fall back to the identity
    accepted = best is not None and ratio < params.threshold
    output = best if accepted else current
    return IterationRecord(current, nbest, identity_cost, best_cost, ratio, accepted, output)


def iterative_decode(source, scorer: StepScorer, params: DecodeParams) -> DecodeTrace:
    """Repeatedly decode, keeping a rewrite only when its cost is below
    ``threshold`` times the identity cost, and feed the output back in."""
    current = tuple(source)
    trace = DecodeTrace()
    seen = {current}
    for _ in range(params.max_iter):
        record = decode_step(current, scorer, params)
        trace.iterations.append(record)
        if record.output == current:
            if params.early_stop_on_fixed_point:
                break
            continue
        if record.output in seen:
            trace.cycled = True
            start = next(
                i for i, r in enumerate(trace.iterations) if r.input == record.output
            )
            cycle = trace.iterations[start:]
            trace.final = min(cycle, key=lambda r: (r.output_cost, r.output)).output
            return trace
        seen.add(record.output)
        current = record.output
    trace.final = current
    return trace


def _log_softmax(values: dict[str, float]) -> dict[str, float]:
    top = max(values.values())
    log_z = top + math.log(sum(math.exp(v - top) for v in values.values()))
    return {k: v - log_z for k, v in values.items()}


class EnsembleScorer:
    """Averages member log-scores per candidate, then renormalizes.

    A candidate missing from a member receives that member's minimum score at
    this step minus ``floor_margin``.  A member that rejects the prefix
    outright (``ScorerError``) gives every candidate the lowest score of the
    other members minus ``floor_margin``.
    """

    def __init__(self, scorers: Sequence[StepScorer], floor_margin: float = 10.0):
        if not scorers:
            raise ConfigError("ensemble needs at least one scorer")
        self.scorers = list(scorers)
        self.floor_margin = floor_margin

    def next_scores(self, source, prefix):
        member_scores = []
        for s in self.scorers:
            try:
                member_scores.append(_checked_scores(s, source, prefix))
            except ScorerError:
                member_scores.append(None)
        supported = [m for m in member_scores if m is not None]
        if not supported:
            raise ScorerError(f"no ensemble member can score prefix {list(prefix)!r}")
        candidates = sorted(set().union(*supported))
        off_support = min(min(m.values()) for m in supported) - self.floor_margin
        n = len(member_scores)
        avg = {}
        for tok in candidates:
            total = 0.0
            for scores in member_scores:
                if scores is None:
                    total += off_support
                elif tok in scores:
                    total += scores[tok]
                else:
                    total += min(scores.values()) - self.floor_margin
            avg[tok] = total / n
        return _log_softmax(avg)


def ensemble(scorers: Sequence[StepScorer], floor_margin: float = 10.0) -> StepScorer:
    if len(scorers) == 1:
        return scorers[0]
    return EnsembleScorer(scorers, floor_margin)


@dataclass
class TuneResult:
    params: DecodeParams
    table: list[dict]


def decode_corpus(sources, scorer, params: DecodeParams) -> list[DecodeTrace]:
    return [iterative_decode(src, scorer, params) for src in sources]


def tune_params(dev, scorer: StepScorer, thresholds, max_iters, beam: int = 4) -> TuneResult:
    """Grid-search threshold and iteration count on ``dev`` for best F0.5.

    ``dev`` holds ``(source_tokens, GoldAnnotation)`` pairs.  Ties prefer the
    smaller ``max_iter``, then the smaller threshold.
    """
    from .metrics import m2_score

    dev = list(dev)
    thresholds = sorted(set(thresholds))
    max_iters = sorted(set(max_iters))
    if not dev:
        raise ConfigError("dev set is empty")
    if not thresholds or not max_iters:
        raise ConfigError("tuning grid is empty")
    table = []
    best_key = None
    best_params = None
    for threshold in thresholds:
        # one decode to the deepest iteration serves every shallower grid point
        deep = DecodeParams(threshold=threshold, beam=beam, max_iter=max_iters[-1])
        traces = decode_corpus([src for src, _ in dev], scorer, deep)
        for k in max_iters:
            cases = [(src, tr.output_after(k), gold) for (src, gold), tr in zip(dev, traces)]
            try:
                report = m2_score(cases)
            except Exception as exc:
                raise type(exc)(f"threshold={threshold} max_iter={k}: {exc}") from exc
            row = {"threshold": threshold, "max_iter": k, **report.to_dict()}
            table.append(row)
            key = (-report.f_half, k, threshold)
            if best_key is None or key < best_key:
                best_key = key
                best_params = DecodeParams(threshold=threshold, beam=beam, max_iter=k)
    table.sort(key=lambda r: (r["max_iter"], r["threshold"]))
    return TuneResult(best_params, table)
