import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest  # noqa: E402

from revforge.toy_model import RuleScorer, load_rules  # noqa: E402


def make_dump(pages):
    """Build dump bytes from ``[(page_id, title, [(timestamp, text), ...])]``."""
    from xml.sax.saxutils import escape

    parts = ['<mediawiki xmlns="http://www.mediawiki.org/xml/export-0.10/">\n']
    for page_id, title, revisions in pages:
        parts.append(f"  <page>\n    <title>{escape(title)}</title>\n    <id>{page_id}</id>\n")
        for rev_id, (ts, text) in enumerate(revisions):
            parts.append(f"    <revision>\n      <id>{rev_id}</id>\n      <timestamp>{ts}</timestamp>\n")
            if text is not None:
                parts.append(f'      <text xml:space="preserve">{escape(text)}</text>\n')
            parts.append("    </revision>\n")
        parts.append("  </page>\n")
    parts.append("</mediawiki>\n")
    return "".join(parts).encode("utf-8")


def timestamps(n):
    return [f"2001-01-{1 + i // 1440:02d}T{(i // 60) % 24:02d}:{i % 60:02d}:00Z" for i in range(n)]


@pytest.fixture(scope="session")
def demo_scorer():
    return RuleScorer(load_rules("table1_demo"))


# -- acceptance summary ------------------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _CRITERIA.get(n, (title, True))
        _CRITERIA[n] = (title, prev[1] and report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
