"""Turn consecutive snapshot pairs into bounded-length example pairs."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Sequence

from .errors import ConfigError
from .ingest import SnapshotPair
from .rng import SplitMix64, derive_seed
from .tokenize import FixupRules, SubwordVocab, detokenize, parse_rules, tokenize

MATCH = "match"
MISMATCH = "mismatch"

# stream tags mixed into derived seeds so each random decision gets its own stream
_NOISE_STREAM = 1
_IDENTITY_STREAM = 2


# -- markup ----------------------------------------------------------------

_MARKUP_RULES: FixupRules | None = None


def markup_rules() -> FixupRules:
    global _MARKUP_RULES
    if _MARKUP_RULES is None:
        text = resources.files("revforge.data").joinpath("markup_rules.v1.txt").read_text("utf-8")
        _MARKUP_RULES = parse_rules(text, "markup_rules.v1.txt")
    return _MARKUP_RULES


def strip_markup(raw: str, rules: FixupRules | None = None, max_rounds: int = 50) -> str:
    """Remove wiki markup by applying the rule list until nothing changes."""
    rules = rules or markup_rules()
    text = raw
    for _ in range(max_rounds):
        before = text
        for pattern, replacement in rules.rules:
            text = pattern.sub(replacement, text)
        if text == before:
            break
    return text


# -- alignment -------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentChunk:
    kind: str
    source_span: tuple[int, int]
    target_span: tuple[int, int]


def _myers_matches(a: Sequence, b: Sequence, max_cost: int) -> list[tuple[int, int]] | None:
    """Matched index pairs of a shortest insert/delete script (Myers O(ND)).
    ``None`` if the script is longer than ``max_cost``."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return []
    limit = min(n + m, max_cost)
    offset = limit + 1
    v = [0] * (2 * limit + 3)
    trace = []
    for d in range(limit + 1):
        trace.append(v[offset - d - 1 : offset + d + 2])
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v[offset + k - 1] < v[offset + k + 1]):
                x = v[offset + k + 1]
            else:
                x = v[offset + k - 1] + 1
            y = x - k
            while x < n and y < m and a[x] == b[y]:
                x += 1
                y += 1
            v[offset + k] = x
            if x >= n and y >= m:
                return _backtrack(trace, d, n, m)
    return None


def _backtrack(trace, d_final, n, m):
    matches = []
    x, y = n, m
    for d in range(d_final, 0, -1):
        snap = trace[d]  # v for k in [-d-1, d+1] as it stood before round d

        def val(k, snap=snap, d=d):
            return snap[k + d + 1]

        k = x - y
        if k == -d or (k != d and val(k - 1) < val(k + 1)):
            prev_k = k + 1
        else:
            prev_k = k - 1
        prev_x = val(prev_k)
        prev_y = prev_x - prev_k
        while x > prev_x and y > prev_y:
            x -= 1
            y -= 1
            matches.append((x, y))
        x, y = prev_x, prev_y
    while x > 0 and y > 0:
        x -= 1
        y -= 1
        matches.append((x, y))
    matches.reverse()
    return matches


def lcs_matches(a: Sequence, b: Sequence, max_cost: int = 20000) -> list[tuple[int, int]] | None:
    """Matched index pairs of a minimal insert/delete alignment.  Common
    prefix and suffix are peeled off first."""
    n, m = len(a), len(b)
    pre = 0
    while pre < n and pre < m and a[pre] == b[pre]:
        pre += 1
    suf = 0
    while suf < n - pre and suf < m - pre and a[n - 1 - suf] == b[m - 1 - suf]:
        suf += 1
    core = _myers_matches(a[pre : n - suf], b[pre : m - suf], max_cost)
    if core is None:
        return None
    head = [(i, i) for i in range(pre)]
    mid = [(i + pre, j + pre) for i, j in core]
    tail = [(n - suf + t, m - suf + t) for t in range(suf)]
    return head + mid + tail


def align_texts(source_tokens: Sequence[str], target_tokens: Sequence[str], min_anchor_tokens: int = 2, max_cost: int = 20000) -> list[AlignmentChunk]:
    """Tile both sequences with alternating match/mismatch chunks.

    Runs of aligned equal tokens at least ``min_anchor_tokens`` long become
    match chunks; everything in between is a mismatch.  Pairs whose edit
    script exceeds ``max_cost`` come back as one mismatch chunk.
    """
    n, m = len(source_tokens), len(target_tokens)
    if n == 0 and m == 0:
        return []
    pairs = lcs_matches(source_tokens, target_tokens, max_cost) or []
    runs = []  # (src_start, tgt_start, length)
    for i, j in pairs:
        if runs and runs[-1][0] + runs[-1][2] == i and runs[-1][1] + runs[-1][2] == j:
            s, t, length = runs[-1]
            runs[-1] = (s, t, length + 1)
        else:
            runs.append((i, j, 1))
    chunks = []
    si = ti = 0
    for s, t, length in runs:
        if length < min_anchor_tokens:
            continue
        if s > si or t > ti:
            chunks.append(AlignmentChunk(MISMATCH, (si, s), (ti, t)))
        chunks.append(AlignmentChunk(MATCH, (s, s + length), (t, t + length)))
        si, ti = s + length, t + length
    if si < n or ti < m:
        chunks.append(AlignmentChunk(MISMATCH, (si, n), (ti, m)))
    return chunks


# -- extraction ------------------------------------------------------------

@dataclass(frozen=True)
class ExtractConfig:
    max_len: int = 256
    identity_keep_prob: float = 0.01
    min_anchor_tokens: int = 2
    context_tokens: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")
        if not 0.0 <= self.identity_keep_prob <= 1.0:
            raise ConfigError("identity_keep_prob must lie in [0, 1]")
        if self.min_anchor_tokens < 1:
            raise ConfigError("min_anchor_tokens must be >= 1")
        if self.context_tokens < 0:
            raise ConfigError("context_tokens must be >= 0")


@dataclass(frozen=True)
class ExamplePair:
    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    origin: tuple[int, int, int] = (0, 0, 0)

    @property
    def is_identity(self) -> bool:
        return self.source_tokens == self.target_tokens

    def to_dict(self, marker: str | None = None) -> dict:
        return {
            "src": detokenize(self.source_tokens, marker),
            "tgt": detokenize(self.target_tokens, marker),
            "identity": self.is_identity,
            "origin": list(self.origin),
        }


@dataclass
class ExtractStats:
    dropped_overlength: int = 0
    identity_examples: int = 0
    edit_examples: int = 0
    identity_kept: int = 0
    examples_kept: int = 0

    def merge(self, other: "ExtractStats") -> None:
        for k, v in other.__dict__.items():
            setattr(self, k, getattr(self, k) + v)

    @property
    def identity_fraction(self) -> float:
        """Share of identity examples in the emitted corpus (a measurement)."""
        return self.identity_kept / self.examples_kept if self.examples_kept else 0.0

    def to_dict(self) -> dict:
        return {**self.__dict__, "identity_fraction": self.identity_fraction}


def _span_len(span):
    return span[1] - span[0]


def extract_examples(chunks: Sequence[AlignmentChunk], cfg: ExtractConfig, source_tokens: Sequence[str] | None = None, target_tokens: Sequence[str] | None = None, origin: tuple[int, int] = (0, 0), stats: ExtractStats | None = None) -> list[ExamplePair]:
    """Cut a chunk tiling into examples.

    Consecutive mismatch chunks are grouped greedily while both sides of the
    group stay within ``max_len``; a mismatch that alone exceeds the cap is
    dropped and counted.  Each group takes up to ``context_tokens`` of match
    context per side (never more than half of a match chunk shared with a
    neighbouring group, and never past ``max_len``).  Match tokens left over
    become identity examples in windows of at most ``max_len``.
    """
    stats = stats if stats is not None else ExtractStats()
    if source_tokens is None or target_tokens is None:
        raise ValueError("extract_examples needs the token sequences the chunks index")
    src, tgt = tuple(source_tokens), tuple(target_tokens)
    cap = cfg.max_len

    # 1. group mismatch chunk indices
    groups: list[list[int]] = []
    for idx, ch in enumerate(chunks):
        if ch.kind != MISMATCH:
            continue
        if _span_len(ch.source_span) > cap or _span_len(ch.target_span) > cap:
            stats.dropped_overlength += 1
            groups.append([])  # barrier: nothing may merge across a dropped region
            continue
        if groups and groups[-1]:
            first = chunks[groups[-1][0]]
            s_len = ch.source_span[1] - first.source_span[0]
            t_len = ch.target_span[1] - first.target_span[0]
            if s_len <= cap and t_len <= cap:
                groups[-1].append(idx)
                continue
        groups.append([idx])

    # 2. flanking context; a match chunk between two groups is split in half
    group_ending = {g[-1]: n for n, g in enumerate(groups) if g}
    group_starting = {g[0]: n for n, g in enumerate(groups) if g}
    share = {}  # match idx -> (tokens available to the group before, to the group after)
    for idx, ch in enumerate(chunks):
        if ch.kind != MATCH:
            continue
        length = _span_len(ch.source_span)
        has_before = (idx - 1) in group_ending
        has_after = (idx + 1) in group_starting
        if has_before and has_after:
            share[idx] = (length // 2, length - length // 2)
        else:
            share[idx] = (length if has_before else 0, length if has_after else 0)
    used = {idx: [0, 0] for idx in share}  # tokens taken from (start, end) of each match chunk
    examples: list[tuple[int, ExamplePair]] = []
    for members in groups:
        if not members:
            continue
        first, last = chunks[members[0]], chunks[members[-1]]
        s0, s1 = first.source_span[0], last.source_span[1]
        t0, t1 = first.target_span[0], last.target_span[1]
        room = cap - max(s1 - s0, t1 - t0)
        before, after = members[0] - 1, members[-1] + 1
        left_avail = share[before][1] if before in share else 0
        right_avail = share[after][0] if after in share else 0
        ctx = cfg.context_tokens
        left = min(ctx, left_avail, (room + 1) // 2)
        right = min(ctx, right_avail, room - left)
        left = min(ctx, left_avail, room - right)
        if before in used:
            used[before][1] = left
        if after in used:
            used[after][0] = right
        examples.append((s0 - left, ExamplePair(src[s0 - left : s1 + right], tgt[t0 - left : t1 + right])))

    # 3. leftover match tokens become identity windows
    for idx, ch in enumerate(chunks):
        if ch.kind != MATCH:
            continue
        a = ch.source_span[0] + used[idx][0]
        b = ch.source_span[1] - used[idx][1]
        for start in range(a, b, cap):
            stop = min(start + cap, b)
            piece = src[start:stop]
            examples.append((start, ExamplePair(piece, piece)))

    examples.sort(key=lambda e: e[0])
    out = []
    for seg, (_, ex) in enumerate(examples):
        ex = ExamplePair(ex.source_tokens, ex.target_tokens, (origin[0], origin[1], seg))
        if ex.is_identity:
            stats.identity_examples += 1
        else:
            stats.edit_examples += 1
        out.append(ex)
    return out


# -- identity downsampling -------------------------------------------------

def downsample_identities(examples: Iterable[ExamplePair], cfg: ExtractConfig, rng: SplitMix64) -> list[ExamplePair]:
    """Keep every edit example and each identity example with probability
    ``identity_keep_prob``; one draw per identity example, in order."""
    examples = list(examples)
    n_identity = sum(1 for ex in examples if ex.is_identity)
    draws = iter(rng.random_array(n_identity).tolist())
    p = cfg.identity_keep_prob
    return [ex for ex in examples if not ex.is_identity or next(draws) < p]


# -- spelling noise --------------------------------------------------------

NOISE_OPS = ("delete", "insert", "replace", "transpose")
DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz "


@dataclass(frozen=True)
class NoiseSpec:
    rate: float = 0.003
    op_weights: dict = field(default_factory=lambda: {op: 1.0 for op in NOISE_OPS})
    alphabet: str = DEFAULT_ALPHABET
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("noise rate must lie in [0, 1]")
        unknown = set(self.op_weights) - set(NOISE_OPS)
        if unknown:
            raise ConfigError(f"unknown noise operations: {sorted(unknown)}")
        weights = [self.op_weights.get(op, 0.0) for op in NOISE_OPS]
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ConfigError("op_weights must be nonnegative and not all zero")
        if not self.alphabet:
            raise ConfigError("noise alphabet is empty")

    def cumulative(self) -> list[tuple[float, str]]:
        total = sum(self.op_weights.get(op, 0.0) for op in NOISE_OPS)
        acc, out = 0.0, []
        for op in NOISE_OPS:
            w = self.op_weights.get(op, 0.0)
            if w > 0:
                acc += w / total
                out.append((acc, op))
        return out


def noise_text(text: str, spec: NoiseSpec, rng: SplitMix64) -> tuple[str, int]:
    """Corrupt ``text`` character by character; returns the text and the
    number of triggered positions.

    One uniform draw per character decides triggering.  Then, for each
    triggered position in order, one draw picks the operation and, for
    insert/replace, one draw picks the alphabet character.  A transpose
    swaps with the following character (consuming it) and is a no-op on the
    last character.
    """
    if spec.rate == 0.0 or not text:
        return text, 0
    draws = rng.random_array(len(text))
    triggered = (draws < spec.rate).nonzero()[0].tolist()
    if not triggered:
        return text, 0
    table = spec.cumulative()
    out = []
    pos = 0
    for i in triggered:
        if i < pos:  # consumed by a transpose
            continue
        out.append(text[pos:i])
        u = rng.random()
        op = next((name for edge, name in table if u < edge), table[-1][1])
        ch = text[i]
        if op == "delete":
            pass
        elif op == "insert":
            out.append(spec.alphabet[rng.randbelow(len(spec.alphabet))] + ch)
        elif op == "replace":
            out.append(spec.alphabet[rng.randbelow(len(spec.alphabet))])
        elif i + 1 < len(text):
            out.append(text[i + 1] + ch)
            i += 1
        else:
            out.append(ch)
        pos = i + 1
    out.append(text[pos:])
    return "".join(out), len(triggered)


def inject_noise(source_tokens: Sequence[str], spec: NoiseSpec, rng: SplitMix64, vocab: SubwordVocab | None = None) -> list[str]:
    marker = vocab.continuation_marker if vocab else None
    noised, _ = noise_text(detokenize(source_tokens, marker), spec, rng)
    return tokenize(noised, vocab)


# -- pipeline --------------------------------------------------------------

@dataclass(frozen=True)
class ForgeConfig:
    extract: ExtractConfig = ExtractConfig()
    noise: NoiseSpec = NoiseSpec()
    noise_first: bool = True
    vocab: SubwordVocab | None = None


def forge_pair(pair: SnapshotPair, cfg: ForgeConfig) -> tuple[list[ExamplePair], ExtractStats]:
    """All examples from one snapshot pair.  Randomness is derived from
    ``(seed, page_id, pair_index)`` only, so results do not depend on how
    pairs are scheduled."""
    stats = ExtractStats()
    vocab = cfg.vocab
    marker = vocab.continuation_marker if vocab else None
    src_text = strip_markup(pair.source_raw)
    tgt_tokens = tokenize(strip_markup(pair.target_raw), vocab)
    noise_rng = SplitMix64(derive_seed(cfg.noise.seed, pair.page_id, pair.pair_index, _NOISE_STREAM))
    if cfg.noise_first:
        src_text, _ = noise_text(src_text, cfg.noise, noise_rng)
    src_tokens = tokenize(src_text, vocab)
    chunks = align_texts(src_tokens, tgt_tokens, cfg.extract.min_anchor_tokens)
    examples = extract_examples(
        chunks, cfg.extract, src_tokens, tgt_tokens, (pair.page_id, pair.pair_index), stats
    )
    if not cfg.noise_first:
        noised = []
        for ex in examples:
            text, _ = noise_text(detokenize(ex.source_tokens, marker), cfg.noise, noise_rng)
            toks = tuple(tokenize(text, vocab))
            if len(toks) > cfg.extract.max_len:
                stats.dropped_overlength += 1
                continue
            noised.append(ExamplePair(toks, ex.target_tokens, ex.origin))
        examples = noised
    id_rng = SplitMix64(derive_seed(cfg.extract.seed, pair.page_id, pair.pair_index, _IDENTITY_STREAM))
    kept = downsample_identities(examples, cfg.extract, id_rng)
    stats.examples_kept = len(kept)
    stats.identity_kept = sum(1 for ex in kept if ex.is_identity)
    return kept, stats


def _forge_one(args):
    pair, cfg = args
    return forge_pair(pair, cfg)


def forge_pairs(pairs: Iterable[SnapshotPair], cfg: ForgeConfig, workers: int = 1, stats: ExtractStats | None = None, chunksize: int = 16) -> Iterator[ExamplePair]:
    """Forge examples for a stream of pairs, preserving input order."""
    stats = stats if stats is not None else ExtractStats()
    if workers <= 1:
        results = (forge_pair(p, cfg) for p in pairs)
        for examples, s in results:
            stats.merge(s)
            yield from examples
        return
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        for examples, s in pool.map(_forge_one, ((p, cfg) for p in pairs), chunksize=chunksize):
            stats.merge(s)
            yield from examples
