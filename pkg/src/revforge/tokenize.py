"""Tokenization, detokenization and regex output fixups.

Whitespace mode (the default) splits on whitespace, peels leading and
trailing punctuation into their own tokens and splits English clitics
(``don't`` -> ``do n't``).  Vocab mode runs greedy longest-match
word-piece segmentation on each whitespace-mode token.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

CLITICS = ("n't", "'s", "'re", "'ve", "'ll", "'d", "'m")
OPENING = set("([{¿¡“‘«")
QUOTES = set("\"'")
_CLITIC_RE = re.compile(
    r"^(.+?)(" + "|".join(re.escape(c) for c in CLITICS) + r")$", re.IGNORECASE
)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def _split_chunk(chunk: str) -> list[str]:
    if all(_is_punct(c) for c in chunk):
        return [chunk]
    lead = []
    i = 0
    while i < len(chunk) and _is_punct(chunk[i]):
        lead.append(chunk[i])
        i += 1
    trail = []
    j = len(chunk)
    while j > i and _is_punct(chunk[j - 1]):
        trail.append(chunk[j - 1])
        j -= 1
    core = chunk[i:j]
    middle = [core]
    m = _CLITIC_RE.match(core)
    if m and m.group(1) and not all(_is_punct(c) for c in m.group(1)):
        middle = [m.group(1), m.group(2)]
    return lead + middle + trail[::-1]


@dataclass(frozen=True)
class SubwordVocab:
    entries: tuple[str, ...]
    continuation_marker: str = "##"
    _lookup: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.entries)) != len(self.entries):
            raise ConfigError("vocab entries must be unique")
        object.__setattr__(self, "_lookup", frozenset(self.entries))

    @property
    def alphabet(self) -> set[str]:
        return {e for e in self.entries if len(e) == 1}

    def __contains__(self, piece: str) -> bool:
        return piece in self._lookup

    def validate(self, alphabet=None) -> None:
        """Every alphabet character must exist as a word-initial piece and as
        a continuation piece, otherwise segmentation would not be total."""
        chars = set(alphabet) if alphabet is not None else self.alphabet
        missing = sorted(
            c
            for c in chars
            if c not in self._lookup or self.continuation_marker + c not in self._lookup
        )
        if missing:
            raise ConfigError(f"vocab is missing single-character pieces: {missing!r}")

    def segment(self, word: str) -> list[str]:
        pieces = []
        start = 0
        while start < len(word):
            prefix = self.continuation_marker if start else ""
            end = len(word)
            while end > start + 1 and prefix + word[start:end] not in self._lookup:
                end -= 1
            # out-of-alphabet characters fall through as single-character pieces
            pieces.append(prefix + word[start:end])
            start = end
        return pieces


def load_vocab(path, alphabet=None) -> SubwordVocab:
    """Read a vocab file: line 1 declares the continuation marker
    (``#marker <m>`` or just ``<m>``), then one piece per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty vocab file")
    header = lines[0].strip()
    marker = header.split(None, 1)[1] if header.startswith("#marker") else header
    if not marker:
        raise ConfigError(f"{path}: line 1 must declare the continuation marker")
    entries = tuple(line.rstrip("\n") for line in lines[1:] if line.strip())
    vocab = SubwordVocab(entries, marker)
    vocab.validate(alphabet)
    return vocab


def tokenize(text: str, vocab: SubwordVocab | None = None) -> list[str]:
    tokens = [tok for chunk in text.split() for tok in _split_chunk(chunk)]
    if vocab is None:
        return tokens
    return [piece for tok in tokens for piece in vocab.segment(tok)]


def _attaches_left(tok: str) -> bool:
    if tok.lower() in CLITICS:
        return True
    return all(_is_punct(c) and c not in OPENING and c not in QUOTES for c in tok)


def detokenize(tokens, marker: str | None = None) -> str:
    """Join tokens, reattaching closing punctuation, clitics and (when
    ``marker`` is given) continuation pieces.  Straight quotes alternate
    between opening and closing."""
    out: list[str] = []
    glue_next = False
    open_quotes: dict[str, bool] = {}
    for tok in tokens:
        if marker and tok.startswith(marker) and len(tok) > len(marker) and out:
            out[-1] += tok[len(marker):]
            continue
        if tok in QUOTES:
            closing = open_quotes.get(tok, False)
            open_quotes[tok] = not closing
            if closing and out:
                out[-1] += tok
                glue_next = False
            else:
                out.append(tok)
                glue_next = True
            continue
        if glue_next and out:
            out[-1] += tok
        elif _attaches_left(tok) and out:
            out[-1] += tok
        else:
            out.append(tok)
        glue_next = all(c in OPENING for c in tok)
    return " ".join(out)


@dataclass(frozen=True)
class FixupRules:
    rules: tuple[tuple[re.Pattern, str], ...] = ()

    def __len__(self):
        return len(self.rules)


def _split_unescaped(body: str) -> list[str]:
    parts, cur, i = [], [], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            if body[i + 1] == "/":
                cur.append("/")
            else:
                cur.append(body[i : i + 2])
            i += 2
            continue
        if ch == "/":
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
        i += 1
    parts.append("".join(cur))
    return parts


_FLAG_MAP = {"i": re.IGNORECASE, "m": re.MULTILINE, "s": re.DOTALL}


def parse_rule_line(line: str, where: str = "") -> tuple[re.Pattern, str]:
    """Parse ``s/pattern/replacement/[flags]``; ``\\/`` escapes a slash."""
    if not line.startswith("s/"):
        raise ConfigError(f"{where}: rule must look like s/pattern/replacement/")
    parts = _split_unescaped(line[2:])
    if len(parts) != 3:
        raise ConfigError(f"{where}: expected exactly three '/' separators")
    pattern, replacement, flag_chars = parts
    flags = 0
    for f in flag_chars.strip():
        if f not in _FLAG_MAP:
            raise ConfigError(f"{where}: unknown regex flag {f!r}")
        flags |= _FLAG_MAP[f]
    try:
        return re.compile(pattern, flags), replacement
    except re.error as exc:
        raise ConfigError(f"{where}: bad pattern: {exc}") from None


def parse_rules(text: str, source: str = "<rules>") -> FixupRules:
    rules = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rules.append(parse_rule_line(line, f"{source}:{lineno}"))
    return FixupRules(tuple(rules))


def load_fixups(path=None) -> FixupRules:
    """Load a fixup file; ``None`` loads the shipped CoNLL stand-in set."""
    if path is None:
        text = resources.files("revforge.data").joinpath("fixups_conll.txt").read_text("utf-8")
        return parse_rules(text, "fixups_conll.txt")
    return parse_rules(Path(path).read_text(encoding="utf-8"), str(path))


def apply_fixups(text: str, rules: FixupRules) -> str:
    for pattern, replacement in rules.rules:
        text = pattern.sub(replacement, text)
    return text
