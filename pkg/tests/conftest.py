import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mutcoh.evaluation import CorpusSpec, build_corpus, run_methods  # noqa: E402

ACCEPTANCE = {
    1: "counting oracle",
    2: "coherence oracle",
    3: "lemma suite",
    4: "method ordering at desk scale",
    5: "direct-estimation trend",
    6: "simpler weights agree with finer",
    7: "exhaustive degeneration",
    8: "generator statistics",
    9: "EM behavior",
}

_outcomes: dict[int, list[bool]] = {}


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """The default desk-scale corpus, built once per session (about 90 s on one core)."""
    return build_corpus(CorpusSpec(), tmp_path_factory.mktemp("desk"))


@pytest.fixture(scope="session")
def desk_records(desk_corpus):
    return run_methods(desk_corpus)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    report = outcome.get_result()
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, label in ACCEPTANCE.items():
        results = _outcomes.get(number)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number} ({label}): {status}")
