"""Brute-force reference implementations used only by the tests."""
from __future__ import annotations

import itertools
import math
import re
from collections import Counter

from revforge.decode import EOS
from revforge.rng import SplitMix64, derive_seed


class RandomTreeScorer:
    """Deterministic pseudo-random scorer: fan-out <= ``fanout`` candidates
    per prefix (EOS among them), EOS forced once the prefix has ``max_len``
    tokens."""

    def __init__(self, seed=0, fanout=3, max_len=3, alphabet="abcd"):
        self.seed = seed
        self.fanout = fanout
        self.max_len = max_len
        self.alphabet = alphabet

    def next_scores(self, source, prefix):
        if len(prefix) >= self.max_len:
            return {EOS: 0.0}
        key = [len(source)] + [ord(t[0]) if t else 0 for t in source]
        key += [1000 + ord(t[0]) for t in prefix]
        rng = SplitMix64(derive_seed(self.seed, *key, len(prefix)))
        pool = list(self.alphabet) + [EOS]
        k = 1 + rng.randbelow(self.fanout)
        picks = [pool[i] for i in rng.sample(len(pool), k)]
        weights = [0.05 + rng.random() for _ in picks]
        z = sum(weights)
        return {tok: math.log(w / z) for tok, w in zip(picks, weights)}


def enumerate_completions(source, scorer, limit=64):
    """Every complete sequence with its summed cost, sorted by (cost, tokens)."""
    out = []

    def walk(prefix, cost):
        if len(prefix) > limit:
            raise RuntimeError("scorer does not terminate")
        for tok, lp in scorer.next_scores(tuple(source), tuple(prefix)).items():
            if tok == EOS:
                out.append((cost - lp, tuple(prefix)))
            else:
                walk(prefix + [tok], cost - lp)

    walk([], 0.0)
    out.sort()
    return out


def all_minimal_scripts(a, b):
    """All minimal-cost op strings (M/S/D/I, unit costs) turning a into b."""
    a, b = tuple(a), tuple(b)
    memo = {}

    def dist(i, j):
        if (i, j) in memo:
            return memo[(i, j)]
        if i == len(a):
            r = len(b) - j
        elif j == len(b):
            r = len(a) - i
        else:
            r = min(
                dist(i + 1, j + 1) + (a[i] != b[j]),
                dist(i + 1, j) + 1,
                dist(i, j + 1) + 1,
            )
        memo[(i, j)] = r
        return r

    scripts = []

    def walk(i, j, ops):
        if i == len(a) and j == len(b):
            scripts.append("".join(ops))
            return
        here = dist(i, j)
        if i < len(a) and j < len(b):
            same = a[i] == b[j]
            if dist(i + 1, j + 1) + (not same) == here:
                walk(i + 1, j + 1, ops + ["M" if same else "S"])
        if i < len(a) and dist(i + 1, j) + 1 == here:
            walk(i + 1, j, ops + ["D"])
        if j < len(b) and dist(i, j + 1) + 1 == here:
            walk(i, j + 1, ops + ["I"])

    walk(0, 0, [])
    return dist(0, 0), sorted(scripts)


def script_blocks(a, b, ops):
    """Non-match runs of ``ops`` as lists of atomic (start, end, rep) pieces."""
    runs, cur = [], []
    i = j = 0
    for op in ops:
        if op == "M":
            if cur:
                runs.append(cur)
                cur = []
            i, j = i + 1, j + 1
            continue
        di, dj = (1 if op in "SD" else 0), (1 if op in "SI" else 0)
        cur.append((i, i + di, j, j + dj))
        i, j = i + di, j + dj
    if cur:
        runs.append(cur)
    return runs


def merged_edits(a, b, ops):
    edits = []
    for run in script_blocks(a, b, ops):
        edits.append((run[0][0], run[-1][1], tuple(b[run[0][2] : run[-1][3]])))
    return edits


def segmentations(a, b, ops):
    """Every way to cut each non-match run of ``ops`` into contiguous edits."""
    runs = script_blocks(a, b, ops)
    results = [[]]
    for run in runs:
        options = []
        n = len(run)
        for mask in range(1 << (n - 1)):
            pieces, start = [], 0
            for k in range(n - 1):
                if mask >> k & 1:
                    pieces.append(run[start : k + 1])
                    start = k + 1
            pieces.append(run[start:])
            options.append(
                [(p[0][0], p[-1][1], tuple(b[p[0][2] : p[-1][3]])) for p in pieces]
            )
        results = [r + o for r in results for o in options]
    return results


def gleu_by_hand(source, hyp, ref, n_max=4):
    """Single-reference GLEU computed straight from n-gram lists."""
    def grams(seq, n):
        return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]

    log_sum = 0.0
    for n in range(1, n_max + 1):
        h, s, r = Counter(grams(hyp, n)), Counter(grams(source, n)), Counter(grams(ref, n))
        matched = sum(min(c, r[g]) for g, c in h.items())
        penalty = sum(min(c, s[g]) for g, c in h.items() if g in s and g not in r)
        num = max(matched - penalty, 0)
        den = max(len(hyp) + 1 - n, 0)
        if num == 0 or den == 0:
            return 0.0
        log_sum += math.log(num / den)
    bp = min(0.0, 1.0 - len(ref) / len(hyp))
    return math.exp(bp + log_sum / n_max)


def lev(a, b):
    """Plain recursive-table token edit distance."""
    a, b = tuple(a), tuple(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def max_gold_matches(a, b, gold):
    """Largest number of ``gold`` edits ``(start, end, reps)`` that a single
    minimal-cost edit set turning ``a`` into ``b`` can contain, found by
    trying every subset of gold edits and every placement in ``b``."""
    a, b = tuple(a), tuple(b)
    total = lev(a, b)
    options = [(s, e, r) for s, e, reps in gold for r in reps if a[s:e] != r]
    best = 0

    def gap_ok(sa, sb, pin_left, pin_right):
        # two edits may not share an insertion point: next to a zero-width
        # gold edit the gap must not open or close with a pure insertion
        if not (pin_left or pin_right):
            return True
        for ops in all_minimal_scripts(sa, sb)[1]:
            if pin_left and re.match(r"I+(M|$)", ops):
                continue
            if pin_right and re.search(r"(^|M)I+$", ops):
                continue
            return True
        return False

    def place(chosen, k, i, j, cost, pinned):
        # chosen gold edits sorted by start; k indexes the next to place
        nonlocal best
        if k == len(chosen):
            if cost + lev(a[i:], b[j:]) == total and gap_ok(a[i:], b[j:], pinned, False):
                best = max(best, len(chosen))
            return
        s, e, r = chosen[k]
        for nj in range(j, len(b) - len(r) + 1):
            if b[nj : nj + len(r)] != r:
                continue
            if not gap_ok(a[i:s], b[j:nj], pinned, s == e):
                continue
            c = cost + lev(a[i:s], b[j:nj]) + lev(a[s:e], r)
            if c <= total:
                place(chosen, k + 1, e, nj + len(r), c, s == e)

    for size in range(len(options), 0, -1):
        if size <= best:
            break
        for combo in itertools.combinations(sorted(options), size):
            if any(x[1] > y[0] or (x[0] == x[1] == y[0] == y[1]) for x, y in zip(combo, combo[1:])):
                continue
            if len({(s, e) for s, e, _ in combo}) < size:
                continue
            place(list(combo), 0, 0, 0, 0, False)
            if best == size:
                break
    return best
