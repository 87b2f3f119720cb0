from collections import defaultdict

import numpy as np
import pytest

_ACCEPTANCE = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, part): part of a numbered acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        ok = rep.passed and not hasattr(rep, "wasxfail")
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        if hasattr(rep, "wasxfail"):
            detail = (detail + "; " if detail else "") + f"known failure: {rep.wasxfail}"
        number, part = marker.args
        _ACCEPTANCE[number].append((part, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        summary = ", ".join(f"{part}={'PASS' if ok else 'FAIL'}" for part, ok, _ in parts)
        tr.write_line(f"criterion {number:>2}: {verdict}  [{summary}]")
        for part, _, detail in parts:
            if detail:
                tr.write_line(f"    {part}: {detail}")
