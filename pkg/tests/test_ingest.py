import io
import math

import pytest
from conftest import make_dump, timestamps
from hypothesis import given, settings
from hypothesis import strategies as st

from revforge.errors import ConfigError, DumpStreamError
from revforge.ingest import (
    MEBIBYTE,
    IngestConfig,
    IngestStats,
    PageSeries,
    downsample_snapshots,
    filter_page,
    ingest,
    pair_budget,
    stream_pages,
)


def test_one_page_three_revisions():
    dump = make_dump([(1, "Pizza", [(t, f"rev {i}") for i, t in enumerate(timestamps(3))])])
    pages = list(stream_pages(io.BytesIO(dump)))
    assert len(pages) == 1
    assert pages[0].snapshots == ["rev 0", "rev 1", "rev 2"]
    assert pages[0].title == "Pizza" and pages[0].page_id == 1


def test_revisions_sorted_by_timestamp_with_stable_ties():
    revs = [
        ("2003-01-01T00:00:00Z", "c"),
        ("2001-01-01T00:00:00Z", "a"),
        ("2002-01-01T00:00:00Z", "b1"),
        ("2002-01-01T00:00:00Z", "b2"),
    ]
    page = next(stream_pages(io.BytesIO(make_dump([(4, "T", revs)]))))
    assert page.snapshots == ["a", "b1", "b2", "c"]


def test_page_without_text_is_skipped():
    dump = make_dump([(1, "Empty", [("2001-01-01T00:00:00Z", None)])])
    stats = IngestStats()
    assert list(stream_pages(io.BytesIO(dump), stats)) == []
    assert stats.pages_skipped == 1


def test_corrupted_second_page_is_skipped():
    good = make_dump([(1, "Good", [(t, "x") for t in timestamps(2)])])
    bad_page = b"<page><title>Bad</title><id>2</id><revision><text>oops</revision></page>\n"
    dump = good.replace(b"</mediawiki>", bad_page + b"</mediawiki>")
    stats = IngestStats()
    pages = list(stream_pages(io.BytesIO(dump), stats))
    assert [p.page_id for p in pages] == [1]
    assert stats.pages_skipped == 1 and stats.pages_read == 2


def test_truncated_stream_yields_prefix_then_errors():
    dump = make_dump([(1, "A", [(t, "x") for t in timestamps(2)]), (2, "B", [(t, "y") for t in timestamps(2)])])
    cut = dump[: dump.rindex(b"</page>") - 10]
    got = []
    with pytest.raises(DumpStreamError):
        for page in stream_pages(io.BytesIO(cut)):
            got.append(page.page_id)
    assert got == [1]


def test_byte_size_is_page_region_length():
    dump = make_dump([(1, "A", [(timestamps(1)[0], "hello")])])
    page = next(stream_pages(io.BytesIO(dump)))
    start = dump.index(b"<page>")
    end = dump.index(b"</page>") + len(b"</page>")
    assert page.byte_size == end - start


def _series(size):
    return PageSeries(1, "t", size, ["a"])


def test_filter_boundary_is_inclusive():
    cfg = IngestConfig()
    assert filter_page(_series(64 * MEBIBYTE), cfg) is not None
    assert filter_page(_series(64 * MEBIBYTE + 1), cfg) is None
    assert filter_page(_series(0), cfg) is not None


def test_config_validation():
    with pytest.raises(ConfigError):
        IngestConfig(max_page_bytes=0)
    with pytest.raises(ConfigError):
        IngestConfig(downsample_base=1.0)


@pytest.mark.parametrize("x, expected", [(1, 0), (2, 1), (3, 2), (10, 5), (100, 11), (1000, 17)])
def test_pair_budget(x, expected):
    # expected = min(x - 1, floor(ln x / ln 1.5)), evaluated independently
    assert pair_budget(x) == expected == min(x - 1, math.floor(math.log(x) / math.log(1.5)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_downsample_properties(x, seed, page_id):
    series = PageSeries(page_id, "t", 0, [str(i) for i in range(x)])
    cfg = IngestConfig(seed=seed)
    pairs = downsample_snapshots(series, cfg)
    assert len(pairs) == min(x - 1, math.floor(math.log(x) / math.log(1.5)))
    idx = [p.pair_index for p in pairs]
    assert idx == sorted(set(idx))
    for p in pairs:
        assert p.source_raw == str(p.pair_index) and p.target_raw == str(p.pair_index + 1)
    assert pairs == downsample_snapshots(series, cfg)


def test_downsample_is_roughly_uniform():
    counts = [0] * 9
    for page_id in range(3000):
        series = PageSeries(page_id, "t", 0, [str(i) for i in range(10)])
        for p in downsample_snapshots(series, IngestConfig(seed=3)):
            counts[p.pair_index] += 1
    # 3000 pages x 5 of 9 slots -> 1666.7 expected per slot, sd ~ 27
    assert all(abs(c - 15000 / 9) < 5 * 27.2 for c in counts)


def test_ingest_drops_oversize_pages_and_counts():
    dump = make_dump([
        (1, "small", [(t, "x") for t in timestamps(3)]),
        (2, "big", [(t, "y" * 500) for t in timestamps(3)]),
    ])
    stats = IngestStats()
    pairs = list(ingest(io.BytesIO(dump), IngestConfig(max_page_bytes=1000), stats))
    assert {p.page_id for p in pairs} == {1}
    assert stats.pages_oversize == 1 and stats.pages_kept == 1
    assert stats.pairs_emitted == len(pairs) == 2
