import pytest

from _corpus import build_corpus

_CRITERIA = {}


@pytest.fixture(scope="session")
def corpus():
    return build_corpus()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    detail = dict(rep.user_properties).get("detail", "")
    _CRITERIA[n] = (title, rep.outcome, rep.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcome, dur, detail = _CRITERIA[n]
        word = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"criterion {n:>2} {word}  {title} ({dur:.2f} s) {detail}".rstrip())
