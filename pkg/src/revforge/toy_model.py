"""Deterministic rule-driven step scorer.

The model walks the source left to right.  At each source position it may
copy the next token or apply a rewrite rule whose match and context fit the
source there; a rule emits its replacement tokens one per step.  Only
``max_edits_per_pass`` rules may fire in one hypothesis, which is what makes
several decoding passes necessary for heavily corrupted input.

Step probabilities come from a softmax over candidate energies (``copy_cost``
for copying, the rule cost for a rewrite, ``eos_cost`` for stopping).  Once
the edit budget is spent, rewrite candidates are dropped before
normalization, so every step is a proper distribution.  Because several traversals can yield the same prefix, next-token scores are
obtained by the forward algorithm over all consistent traversal states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .decode import EOS
from .errors import ConfigError, ScorerError

BOS_MARK = "^"
EOS_MARK = "$"
EMPTY = "_"


@dataclass(frozen=True)
class Rule:
    left: tuple[str, ...]
    match: tuple[str, ...]
    replacement: tuple[str, ...]
    right: tuple[str, ...]
    cost: float
    line: int = 0

    @property
    def key(self):
        return (self.left, self.match, self.right)

    def applies_at(self, source: tuple[str, ...], cursor: int) -> bool:
        end = cursor + len(self.match)
        if source[cursor:end] != self.match or end > len(source):
            return False
        left = self.left
        if left and left[0] == BOS_MARK:
            if cursor != len(left) - 1:
                return False
            left = left[1:]
        if left and source[max(0, cursor - len(left)) : cursor] != left:
            return False
        right = self.right
        if right and right[-1] == EOS_MARK:
            if end + len(right) - 1 != len(source):
                return False
            right = right[:-1]
        if right and source[end : end + len(right)] != right:
            return False
        return True


@dataclass(frozen=True)
class RuleTable:
    rules: tuple[Rule, ...] = ()
    copy_cost: float = 1.0
    eos_cost: float = 0.0
    max_edits_per_pass: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.copy_cost) and self.copy_cost > 0):
            raise ConfigError("copy_cost must be finite and > 0")
        if not (math.isfinite(self.eos_cost) and self.eos_cost >= 0):
            raise ConfigError("eos_cost must be finite and >= 0")
        if self.max_edits_per_pass < 1:
            raise ConfigError("max_edits_per_pass must be >= 1")
        seen = {}
        for rule in self.rules:
            if not (math.isfinite(rule.cost) and rule.cost > 0):
                raise ConfigError(f"line {rule.line}: rule cost must be finite and > 0")
            if rule.key in seen:
                raise ConfigError(
                    f"duplicate rule key {rule.key!r} on lines {seen[rule.key]} and {rule.line}"
                )
            seen[rule.key] = rule.line

    def __len__(self):
        return len(self.rules)


_PARAMS = {"copy_cost": float, "eos_cost": float, "max_edits_per_pass": int}


def _field(value: str) -> tuple[str, ...]:
    value = value.strip()
    return () if value == EMPTY else tuple(value.split())


def parse_rules(text: str, source: str = "<rules>", **overrides) -> RuleTable:
    """Parse the TSV rule format.

    Columns are ``context_left, match, replacement, context_right, cost``
    with ``_`` for an empty field.  ``@name<TAB>value`` lines set
    ``copy_cost``, ``eos_cost`` and ``max_edits_per_pass``; ``#`` starts a
    comment line.
    """
    params: dict = {}
    rules = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("@"):
            parts = line[1:].split(None, 1)
            if len(parts) != 2 or parts[0] not in _PARAMS:
                raise ConfigError(f"{source}:{lineno}: bad parameter line {line!r}")
            try:
                params[parts[0]] = _PARAMS[parts[0]](parts[1].strip())
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: bad value for {parts[0]}") from None
            continue
        cols = line.split("\t")
        if cols[0].strip() == "context_left":
            continue
        if len(cols) != 5:
            raise ConfigError(f"{source}:{lineno}: expected 5 tab-separated columns, got {len(cols)}")
        try:
            cost = float(cols[4])
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: cost {cols[4]!r} is not a number") from None
        rule = Rule(_field(cols[0]), _field(cols[1]), _field(cols[2]), _field(cols[3]), cost, lineno)
        if not rule.match and not rule.replacement:
            raise ConfigError(f"{source}:{lineno}: rule has neither match nor replacement")
        if rule.match == rule.replacement:
            raise ConfigError(f"{source}:{lineno}: rule replacement equals its match")
        if BOS_MARK in rule.left[1:] or EOS_MARK in rule.right[:-1]:
            raise ConfigError(f"{source}:{lineno}: boundary marks must sit at the outer edge")
        rules.append(rule)
    params.update(overrides)
    try:
        return RuleTable(tuple(rules), **params)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_rules(path, **overrides) -> RuleTable:
    """Load a rule file.  A bare name like ``table1_demo`` resolves to the
    packaged asset of that name when no such file exists."""
    p = Path(path)
    if not p.exists():
        name = p.name if p.suffix else p.name + ".rules"
        asset = resources.files("revforge.data").joinpath(name)
        if asset.is_file():
            return parse_rules(asset.read_text("utf-8"), name, **overrides)
        raise ConfigError(f"rule file not found: {path}")
    return parse_rules(p.read_text(encoding="utf-8"), str(p), **overrides)


# traversal state: (cursor, pending replacement tokens, edits used, inserted here)
_State = tuple


class RuleScorer:
    """``StepScorer`` backed by a ``RuleTable``."""

    def __init__(self, table: RuleTable):
        self.table = table
        self._by_first = {}
        for rule in table.rules:
            head = rule.match[0] if rule.match else None
            self._by_first.setdefault(head, []).append(rule)
        self._cache: dict = {}

    def __getstate__(self):
        return {"table": self.table}

    def __setstate__(self, state):
        self.__init__(state["table"])

    def _transitions(self, source, state):
        """Yield ``(token, log_prob, next_state)`` out of ``state``."""
        cursor, pending, edits, inserted = state
        if pending:
            yield pending[0], 0.0, (cursor, pending[1:], edits, inserted)
            return
        options = []  # (energy, token, next_state, is_rule)
        if cursor < len(source):
            options.append((self.table.copy_cost, source[cursor], (cursor + 1, (), edits, False), False))
        else:
            options.append((self.table.eos_cost, EOS, None, False))
        candidates = self._by_first.get(source[cursor], []) if cursor < len(source) else []
        if not inserted:
            candidates = candidates + self._by_first.get(None, [])
        for rule in candidates:
            if not rule.applies_at(source, cursor):
                continue
            if rule.replacement:
                nxt = (cursor + len(rule.match), rule.replacement[1:], edits + 1, not rule.match)
                options.append((rule.cost, rule.replacement[0], nxt, True))
            else:
                # pure deletion emits nothing, so fold it into the next step
                nxt = (cursor + len(rule.match), (), edits + 1, False)
                for tok, lp, after in self._transitions(source, nxt):
                    options.append((rule.cost - lp, tok, after, True))
        if edits >= self.table.max_edits_per_pass:
            options = [o for o in options if not o[3]]
        top = min(e for e, *_ in options)
        log_z = -top + math.log(sum(math.exp(top - e) for e, *_ in options))
        for energy, tok, nxt, _ in options:
            yield tok, -energy - log_z, nxt

    def _states(self, source, prefix):
        key = (source, prefix)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if not prefix:
            states = {(0, (), 0, False): 0.0}
        else:
            states = {}
            for state, w in self._states(source, prefix[:-1]).items():
                for tok, lp, nxt in self._transitions(source, state):
                    if tok == prefix[-1] and nxt is not None:
                        states[nxt] = _logaddexp(states.get(nxt), w + lp)
            if not states:
                raise ScorerError(
                    f"prefix {list(prefix)!r} is not a monotone traversal of {list(source)!r}"
                )
        if len(self._cache) > 200_000:
            self._cache.clear()
        self._cache[key] = states
        return states

    def next_scores(self, source, prefix):
        source, prefix = tuple(source), tuple(prefix)
        states = self._states(source, prefix)
        total = None
        for w in states.values():
            total = _logaddexp(total, w)
        scores: dict[str, float] = {}
        for state, w in states.items():
            for tok, lp, _ in self._transitions(source, state):
                scores[tok] = _logaddexp(scores.get(tok), w + lp)
        return {tok: s - total for tok, s in sorted(scores.items())}


def _logaddexp(a, b):
    if a is None:
        return b
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def step_scores(source_tokens, prefix_tokens, table: RuleTable) -> dict[str, float]:
    return RuleScorer(table).next_scores(tuple(source_tokens), tuple(prefix_tokens))
