"""Edit-level F0.5 (M2-style) and GLEU scoring."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import M2FormatError
from .rng import SplitMix64


def f_beta(p: float, r: float, beta: float = 0.5) -> float:
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ValueError(f"precision and recall must lie in [0, 1], got p={p}, r={r}")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    b2 = beta * beta
    denom = b2 * p + r
    if denom == 0:
        return 0.0
    return (1 + b2) * p * r / denom


# -- edits -----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Edit:
    start: int
    end: int
    replacement: tuple[str, ...] = ()


@dataclass(frozen=True)
class GoldEdit:
    start: int
    end: int
    replacement: tuple[str, ...]
    type: str = ""
    annotator: int = 0
    alternatives: tuple[tuple[str, ...], ...] = ()

    def matches(self, edit: Edit) -> bool:
        if (edit.start, edit.end) != (self.start, self.end):
            return False
        return edit.replacement == self.replacement or edit.replacement in self.alternatives


@dataclass
class GoldAnnotation:
    source_tokens: tuple[str, ...]
    edits: list[GoldEdit] = field(default_factory=list)
    annotators: tuple[int, ...] = (0,)

    def by_annotator(self) -> dict[int, list[GoldEdit]]:
        out = {a: [] for a in self.annotators}
        for e in self.edits:
            out.setdefault(e.annotator, []).append(e)
        return out

    def validate(self, case_id=None) -> None:
        n = len(self.source_tokens)
        where = f"case {case_id}: " if case_id is not None else ""
        for ann, edits in self.by_annotator().items():
            prev_end = -1
            prev_start = -1
            for e in sorted(edits, key=lambda e: (e.start, e.end)):
                if not 0 <= e.start <= e.end <= n:
                    raise M2FormatError(f"{where}edit span ({e.start}, {e.end}) outside 0..{n}")
                if e.start < prev_end or (e.start == e.end == prev_start == prev_end):
                    raise M2FormatError(f"{where}overlapping edits for annotator {ann}")
                prev_start, prev_end = e.start, e.end


def apply_edits(source: Sequence[str], edits: Iterable[Edit]) -> tuple[str, ...]:
    out: list[str] = []
    pos = 0
    for e in sorted(edits, key=lambda e: (e.start, e.end)):
        out.extend(source[pos : e.start])
        out.extend(e.replacement)
        pos = e.end
    out.extend(source[pos:])
    return tuple(out)


def _prefix_dist(a, b):
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ai = a[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (ai != b[j - 1]))
    return d


def _suffix_dist(a, b):
    rev = _prefix_dist(a[::-1], b[::-1])
    n, m = len(a), len(b)
    return [[rev[n - i][m - j] for j in range(m + 1)] for i in range(n + 1)]


def levenshtein(a, b) -> int:
    return _prefix_dist(a, b)[len(a)][len(b)]


# op codes in lexicographic preference order
_OPS = (("M", 1, 1), ("S", 1, 1), ("D", 1, 0), ("I", 0, 1))


def _first_minimal_ops(a, b, suf):
    """Lexicographically first minimal op string (M < S < D < I)."""
    i = j = 0
    ops = []
    n, m = len(a), len(b)
    while i < n or j < m:
        for op, di, dj in _OPS:
            ni, nj = i + di, j + dj
            if ni > n or nj > m:
                continue
            if op == "M" and a[i] != b[j]:
                continue
            if op == "S" and a[i] == b[j]:
                continue
            step = 0 if op == "M" else 1
            if step + suf[ni][nj] == suf[i][j]:
                ops.append(op)
                i, j = ni, nj
                break
    return ops


def ops_to_edits(a, b, ops) -> list[Edit]:
    """Merge maximal runs of non-match ops into edits."""
    edits = []
    i = j = 0
    run = None
    for op in ops:
        if op == "M":
            if run is not None:
                edits.append(Edit(run[0], i, tuple(b[run[1] : j])))
                run = None
            i += 1
            j += 1
            continue
        if run is None:
            run = (i, j)
        if op in "SD":
            i += 1
        if op in "SI":
            j += 1
    if run is not None:
        edits.append(Edit(run[0], i, tuple(b[run[1] : j])))
    return edits


def extract_edits(source, hyp, gold: Iterable[GoldEdit] | None = None) -> list[Edit]:
    """Edits turning ``source`` into ``hyp`` with minimal token edit distance.

    Without ``gold`` the edits come from the lexicographically first minimal
    script with adjacent non-match operations merged.  With ``gold`` a
    minimal-cost segmentation maximizing exact gold matches is chosen (gold
    edits may stand for several adjacent operations, and runs may be split
    at gold boundaries); ties keep the plain answer, then prefer fewer edits.
    """
    a, b = tuple(source), tuple(hyp)
    if a == b:
        return []
    suf = _suffix_dist(a, b)
    plain = ops_to_edits(a, b, _first_minimal_ops(a, b, suf))
    gold = [g for g in (gold or ()) if a[g.start : g.end] != g.replacement or g.alternatives]
    if not gold:
        return plain
    best = _gold_aware_edits(a, b, gold, suf)
    if best is None:
        return plain
    plain_hits = _count_matches(plain, gold)
    if _count_matches(best, gold) <= plain_hits:
        return plain
    return best


def _count_matches(edits, gold) -> int:
    return sum(1 for e in edits if any(g.matches(e) for g in gold))


# DP modes: between edits, inside a run, inside a run that has only
# inserted so far, right after a zero-width gold edit, and inside a run that
# began with insertions right after a zero-width gold edit (must widen
# before closing).  The extra modes keep two edits from sharing one
# insertion point.
_CLOSED, _RUN, _RUN_EMPTY, _AFTER_INS, _RUN_PINNED = range(5)
_OPEN = (_RUN, _RUN_EMPTY, _RUN_PINNED)


def _gold_aware_edits(a, b, gold, suf):
    n, m = len(a), len(b)
    pre = _prefix_dist(a, b)
    total = pre[n][m]

    def on_path(i, j):
        return pre[i][j] + suf[i][j] == total

    by_start: dict[int, list[tuple[int, tuple[str, ...]]]] = {}
    for g in gold:
        for rep in (g.replacement,) + tuple(g.alternatives):
            by_start.setdefault(g.start, []).append((g.end, rep))

    # state (i, j, mode) -> (score, back pointer); score = (matches, -edits)
    best: dict = {(0, 0, _CLOSED): ((0, 0), None)}
    order = sorted(
        ((i, j) for i in range(n + 1) for j in range(m + 1) if on_path(i, j)),
        key=lambda p: (p[0] + p[1], p),
    )

    def relax(state, score, back):
        cur = best.get(state)
        if cur is None or score > cur[0]:
            best[state] = (score, back)

    for i, j in order:
        for mode in range(5):
            entry = best.get((i, j, mode))
            if entry is None:
                continue
            hits, neg_edits = entry[0]
            src_state = (i, j, mode)
            can_close = mode != _RUN_PINNED
            if can_close and i < n and j < m and a[i] == b[j] and on_path(i + 1, j + 1):
                relax((i + 1, j + 1, _CLOSED), (hits, neg_edits), (src_state, None))
            for op, di, dj in _OPS[1:]:
                ni, nj = i + di, j + dj
                if ni > n or nj > m or (op == "S" and a[i] == b[j]):
                    continue
                if not (pre[i][j] + 1 == pre[ni][nj] and on_path(ni, nj)):
                    continue
                opened = 0 if mode in _OPEN else 1
                if op != "I":
                    nxt = _RUN
                elif mode in (_AFTER_INS, _RUN_PINNED):
                    nxt = _RUN_PINNED
                elif mode in (_CLOSED, _RUN_EMPTY):
                    nxt = _RUN_EMPTY
                else:
                    nxt = _RUN
                relax((ni, nj, nxt), (hits, neg_edits - opened), (src_state, ("run", i, j)))
            if not can_close:
                continue
            for end, rep in by_start.get(i, ()):
                nj = j + len(rep)
                if end > n or nj > m or b[j:nj] != rep:
                    continue
                if end == i and mode in (_RUN_EMPTY, _AFTER_INS):
                    continue
                if pre[i][j] + levenshtein(a[i:end], rep) == pre[end][nj] and on_path(end, nj):
                    nxt = _AFTER_INS if end == i else _CLOSED
                    relax((end, nj, nxt), (hits + 1, neg_edits - 1), (src_state, ("gold", i, end, rep)))
    finals = [(best[(n, m, mode)][0], -mode, mode) for mode in range(4) if (n, m, mode) in best]
    if not finals:
        return None
    state = (n, m, max(finals)[2])
    steps = []
    while best[state][1] is not None:
        prev, move = best[state][1]
        steps.append((prev, state, move))
        state = prev
    steps.reverse()
    edits = []
    run = None
    for prev, cur, move in steps:
        if move is not None and move[0] == "run":
            if run is None or prev[2] not in _OPEN:
                run = (prev[0], prev[1])
            continue
        if run is not None:
            edits.append(Edit(run[0], prev[0], tuple(b[run[1] : prev[1]])))
            run = None
        if move is not None:
            _, i, end, rep = move
            edits.append(Edit(i, end, tuple(rep)))
    if run is not None:
        edits.append(Edit(run[0], n, tuple(b[run[1] :])))
    return edits


# -- M2 --------------------------------------------------------------------

@dataclass
class ScoreReport:
    precision: float
    recall: float
    f_half: float
    tp: int
    fp: int
    fn: int
    gleu: float | None = None
    per_iteration: list | None = None

    def to_dict(self) -> dict:
        d = {
            "precision": self.precision,
            "recall": self.recall,
            "f_half": self.f_half,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }
        if self.gleu is not None:
            d["gleu"] = self.gleu
        if self.per_iteration is not None:
            d["per_iteration"] = self.per_iteration
        return d


def _prf(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    return p, r, f_beta(p, r, 0.5)


def _case_counts(source, hyp, gold_edits):
    sys_edits = extract_edits(source, hyp, gold_edits)
    real_gold = {
        (g.start, g.end, g.replacement): g
        for g in gold_edits
        if source[g.start : g.end] != g.replacement
    }
    tp = 0
    used = set()
    for e in sys_edits:
        for key, g in real_gold.items():
            if key not in used and g.matches(e):
                used.add(key)
                tp += 1
                break
    return tp, len(sys_edits) - tp, len(real_gold) - tp


def m2_score(cases) -> ScoreReport:
    """Corpus-level edit precision/recall/F0.5.

    ``cases`` yields ``(source_tokens, hyp_tokens, GoldAnnotation)``.  For
    each case the annotator giving the best running corpus F0.5 is used
    (ties: more true positives, then fewer errors, then lower annotator id).
    """
    tp = fp = fn = 0
    for idx, (source, hyp, gold) in enumerate(cases):
        source, hyp = tuple(source), tuple(hyp)
        try:
            if tuple(gold.source_tokens) != source:
                raise M2FormatError(f"case {idx}: gold source does not match the case source")
            gold.validate(idx)
        except M2FormatError:
            raise
        choice = None
        for ann, edits in sorted(gold.by_annotator().items()):
            c_tp, c_fp, c_fn = _case_counts(source, hyp, edits)
            f = _prf(tp + c_tp, fp + c_fp, fn + c_fn)[2]
            key = (f, c_tp, -(c_fp + c_fn))
            if choice is None or key > choice[0]:
                choice = (key, (c_tp, c_fp, c_fn))
        c_tp, c_fp, c_fn = choice[1]
        tp, fp, fn = tp + c_tp, fp + c_fp, fn + c_fn
    p, r, f = _prf(tp, fp, fn)
    return ScoreReport(p, r, f, tp, fp, fn)


def parse_m2(text: str) -> list[GoldAnnotation]:
    """Parse M2 text (``S`` line plus ``A`` lines, blank-line separated)."""
    out = []
    for block_no, block in enumerate(b for b in text.strip().split("\n\n") if b.strip()):
        lines = [ln for ln in block.strip().splitlines() if ln.strip()]
        if not lines[0].startswith("S"):
            raise M2FormatError(f"case {block_no}: block must start with an S line")
        source = tuple(lines[0][2:].split())
        edits = []
        annotators = set()
        for line in lines[1:]:
            if not line.startswith("A "):
                raise M2FormatError(f"case {block_no}: unexpected line {line!r}")
            fields = line[2:].split("|||")
            if len(fields) < 6:
                raise M2FormatError(f"case {block_no}: A line needs 6 '|||' fields: {line!r}")
            try:
                start, end = (int(x) for x in fields[0].split())
                annotator = int(fields[5])
            except ValueError:
                raise M2FormatError(f"case {block_no}: bad span or annotator in {line!r}") from None
            annotators.add(annotator)
            if start == -1 and end == -1:
                continue  # noop: annotator saw nothing to fix
            reps = [
                () if r.strip() in ("", "-NONE-") else tuple(r.split())
                for r in fields[2].split("||")
            ]
            edits.append(GoldEdit(start, end, reps[0], fields[1], annotator, tuple(reps[1:])))
        gold = GoldAnnotation(source, edits, tuple(sorted(annotators)) or (0,))
        gold.validate(block_no)
        out.append(gold)
    return out


def load_m2(path) -> list[GoldAnnotation]:
    return parse_m2(Path(path).read_text(encoding="utf-8"))


def format_m2(gold: GoldAnnotation) -> str:
    lines = ["S " + " ".join(gold.source_tokens)]
    by_ann = gold.by_annotator()
    for ann in sorted(by_ann):
        edits = by_ann[ann]
        if not edits:
            lines.append(f"A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||{ann}")
        for e in edits:
            rep = " ".join(e.replacement) if e.replacement else ""
            lines.append(f"A {e.start} {e.end}|||{e.type or 'UNK'}|||{rep}|||REQUIRED|||-NONE-|||{ann}")
    return "\n".join(lines) + "\n"


def gold_from_target(source, target, annotator: int = 0) -> GoldAnnotation:
    """Gold annotation whose edits are the minimal edits source -> target."""
    source, target = tuple(source), tuple(target)
    edits = [
        GoldEdit(e.start, e.end, e.replacement, "UNK", annotator)
        for e in extract_edits(source, target)
    ]
    return GoldAnnotation(source, edits, (annotator,))


# -- GLEU ------------------------------------------------------------------

def _ngrams(tokens, n) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def gleu_sentence_stats(source, hyp, ref, n_max: int = 4) -> list[int]:
    """``[hyp_len, ref_len, num_1, den_1, ..., num_n, den_n]``.

    The numerator rewards hypothesis n-grams found in the reference and
    subtracts those kept from the source that the reference dropped.
    """
    stats = [len(hyp), len(ref)]
    for n in range(1, n_max + 1):
        h, s, r = _ngrams(hyp, n), _ngrams(source, n), _ngrams(ref, n)
        s_only = Counter({g: c for g, c in s.items() if g not in r})
        num = sum((h & r).values()) - sum((h & s_only).values())
        stats.append(max(num, 0))
        stats.append(max(len(hyp) + 1 - n, 0))
    return stats


def gleu_from_stats(stats: Sequence[int], n_max: int = 4) -> float:
    c, r = stats[0], stats[1]
    if c == 0:
        return 0.0
    log_prec = 0.0
    for k in range(n_max):
        num, den = stats[2 + 2 * k], stats[3 + 2 * k]
        if num == 0 or den == 0:
            return 0.0
        log_prec += math.log(num / den)
    return math.exp(min(0.0, 1.0 - r / c) + log_prec / n_max)


def gleu(cases, n_max: int = 4, iterations: int = 500, seed: int = 0) -> float:
    """Corpus GLEU averaged over reference draws.

    ``cases`` yields ``(source, hyp, references)``.  When every case has one
    reference no sampling happens.  When the number of possible reference
    assignments is at most ``iterations`` they are enumerated exhaustively,
    which makes the score independent of reference order; otherwise each
    iteration draws one reference per case from a seeded stream.
    """
    cases = [(tuple(s), tuple(h), [tuple(r) for r in refs]) for s, h, refs in cases]
    if not cases:
        raise ValueError("gleu needs at least one hypothesis")
    for idx, (_, _, refs) in enumerate(cases):
        if not refs:
            raise ValueError(f"case {idx} has no reference")
    per_ref = [
        [gleu_sentence_stats(s, h, r, n_max) for r in refs] for s, h, refs in cases
    ]

    def corpus(choice) -> float:
        total = [0] * (2 + 2 * n_max)
        for stats_list, k in zip(per_ref, choice):
            for i, v in enumerate(stats_list[k]):
                total[i] += v
        return gleu_from_stats(total, n_max)

    counts = [len(s) for s in per_ref]
    combos = math.prod(counts)
    if combos == 1:
        return corpus([0] * len(cases))
    if combos <= iterations:
        scores = [corpus(choice) for choice in itertools.product(*(range(c) for c in counts))]
        return sum(scores) / len(scores)
    rng = SplitMix64(seed)
    scores = [corpus([rng.randbelow(c) for c in counts]) for _ in range(iterations)]
    return sum(scores) / len(scores)
