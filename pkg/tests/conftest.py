"""Shared fixtures and the acceptance-criteria summary.

Tests marked ``@pytest.mark.acceptance("N", "title")`` are grouped by
criterion; a criterion passes only if every test attached to it passes.
One PASS/FAIL line per criterion is printed at the end of the run.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        cid, title = marker.args[0], marker.args[1]
        entry = _RESULTS.setdefault(cid, {"title": title, "ok": True, "notes": []})
        ok = rep.passed
        entry["ok"] &= ok
        details = [v for k, v in item.user_properties if k == "detail"]
        entry["notes"].append(f"{item.name}: {'ok' if ok else 'failed'}"
                              + (f" ({'; '.join(details)})" if details else ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c)):
        e = _RESULTS[cid]
        tr.write_line(f"criterion {cid}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}")
        for note in e["notes"]:
            tr.write_line(f"    {note}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
