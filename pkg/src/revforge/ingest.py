"""Streaming reader for revision-history XML dumps.

The dump is cut into ``<page>...</page>`` byte regions before any XML
parsing, so one malformed page costs only that page.  Oversized pages are
filtered by the byte length of their region.
"""
from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

from .errors import ConfigError, DumpStreamError
from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)

MEBIBYTE = 1 << 20
_PAGE_OPEN = re.compile(rb"<page[\s>]")
_PAGE_CLOSE = b"</page>"
_READ_SIZE = 1 << 20


@dataclass
class PageSeries:
    page_id: int
    title: str
    byte_size: int
    snapshots: list[str]
    timestamps: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class IngestConfig:
    max_page_bytes: int = 64 * MEBIBYTE
    downsample_base: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.max_page_bytes <= 0:
            raise ConfigError("max_page_bytes must be > 0")
        if not self.downsample_base > 1:
            raise ConfigError("downsample_base must be > 1")


@dataclass(frozen=True)
class SnapshotPair:
    source_raw: str
    target_raw: str
    page_id: int
    pair_index: int

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "pair_index": self.pair_index,
            "source_raw": self.source_raw,
            "target_raw": self.target_raw,
        }


@dataclass
class IngestStats:
    pages_read: int = 0
    pages_kept: int = 0
    pages_skipped: int = 0
    pages_oversize: int = 0
    pairs_emitted: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _child(elem, name):
    for c in elem:
        if _local(c.tag) == name:
            return c
    return None


def parse_page(region: bytes) -> PageSeries | None:
    """Parse one page region; ``None`` if it has no revision text."""
    root = ET.fromstring(region)
    title_el = _child(root, "title")
    id_el = _child(root, "id")
    page_id = int(id_el.text.strip()) if id_el is not None and id_el.text else 0
    revisions = []
    for order, rev in enumerate(c for c in root if _local(c.tag) == "revision"):
        text_el = _child(rev, "text")
        if text_el is None or text_el.text is None:
            continue
        ts_el = _child(rev, "timestamp")
        ts = ts_el.text.strip() if ts_el is not None and ts_el.text else ""
        revisions.append((ts, order, text_el.text))
    if not revisions:
        return None
    revisions.sort(key=lambda r: r[0])  # stable: ties keep dump order
    return PageSeries(
        page_id=page_id,
        title=title_el.text if title_el is not None and title_el.text else "",
        byte_size=len(region),
        snapshots=[r[2] for r in revisions],
        timestamps=[r[0] for r in revisions],
    )


def _page_regions(stream: BinaryIO) -> Iterator[bytes]:
    buf = b""
    eof = False
    while True:
        m = _PAGE_OPEN.search(buf)
        if m is None:
            if eof:
                return
            # keep a tail in case "<page" straddles two reads
            buf = buf[-8:]
            chunk = stream.read(_READ_SIZE)
            eof = not chunk
            buf += chunk
            continue
        start = m.start()
        end = buf.find(_PAGE_CLOSE, m.end())
        while end < 0 and not eof:
            chunk = stream.read(_READ_SIZE)
            eof = not chunk
            search_from = max(m.end(), len(buf) - len(_PAGE_CLOSE))
            buf += chunk
            end = buf.find(_PAGE_CLOSE, search_from)
        if end < 0:
            raise DumpStreamError("dump ends inside a <page> element")
        end += len(_PAGE_CLOSE)
        yield buf[start:end]
        buf = buf[end:]


def stream_pages(stream: BinaryIO, stats: IngestStats | None = None) -> Iterator[PageSeries]:
    """Yield pages in dump order.  Malformed or text-less pages are skipped
    and counted; a truncated dump raises ``DumpStreamError`` after the
    complete pages before it have been yielded."""
    stats = stats if stats is not None else IngestStats()
    for region in _page_regions(stream):
        stats.pages_read += 1
        try:
            page = parse_page(region)
        except (ET.ParseError, ValueError) as exc:
            log.warning("skipping malformed page #%d: %s", stats.pages_read, exc)
            stats.pages_skipped += 1
            continue
        if page is None:
            stats.pages_skipped += 1
            continue
        yield page


def filter_page(series: PageSeries, cfg: IngestConfig) -> PageSeries | None:
    return series if series.byte_size <= cfg.max_page_bytes else None


def pair_budget(n_snapshots: int, base: float = 1.5) -> int:
    """``min(X - 1, floor(log_base X))`` consecutive pairs for X snapshots."""
    if n_snapshots <= 1:
        return 0
    return min(n_snapshots - 1, math.floor(math.log(n_snapshots) / math.log(base)))


def downsample_snapshots(series: PageSeries, cfg: IngestConfig, rng: SplitMix64 | None = None) -> list[SnapshotPair]:
    """Pick ``pair_budget`` consecutive pairs uniformly without replacement.

    With no ``rng`` the stream is derived from ``(cfg.seed, page_id)``.
    """
    x = len(series.snapshots)
    k = pair_budget(x, cfg.downsample_base)
    if k == 0:
        return []
    if rng is None:
        rng = SplitMix64(derive_seed(cfg.seed, series.page_id))
    chosen = sorted(rng.sample(x - 1, k))
    return [
        SnapshotPair(series.snapshots[i], series.snapshots[i + 1], series.page_id, i)
        for i in chosen
    ]


def ingest(stream: BinaryIO, cfg: IngestConfig, stats: IngestStats | None = None) -> Iterator[SnapshotPair]:
    stats = stats if stats is not None else IngestStats()
    for page in stream_pages(stream, stats):
        if filter_page(page, cfg) is None:
            stats.pages_oversize += 1
            continue
        stats.pages_kept += 1
        for pair in downsample_snapshots(page, cfg):
            stats.pairs_emitted += 1
            yield pair
