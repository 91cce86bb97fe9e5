"""Collects acceptance outcomes and prints one line per criterion at the end."""
import pytest

_OUTCOMES = {}


def _label(item):
    mark = item.get_closest_marker("criterion")
    return None if mark is None else str(mark.args[0])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    label = _label(item)
    if label is None:
        return
    doc = (item.obj.__doc__ or item.name).strip().splitlines()[0]
    prev = _OUTCOMES.get(label, ("PASS", doc))
    failed = rep.failed or (rep.when == "setup" and rep.skipped)
    _OUTCOMES[label] = ("FAIL" if failed or prev[0] == "FAIL" else "PASS", doc)


def _key(label):
    num = "".join(c for c in label if c.isdigit())
    return int(num or 0), label


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_OUTCOMES, key=_key):
        status, doc = _OUTCOMES[label]
        terminalreporter.write_line(f"criterion {label:>3}: {status}  {doc}")
