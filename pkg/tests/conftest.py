import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("DDRLAB_HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def _criterion_number(line):
    return int(line.split("criterion ")[1].split(":")[0])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_number):
            terminalreporter.write_line(line)

SUITE_BUDGET = 180.0
_START = {}


def pytest_sessionstart(session):
    import time
    _START["t"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    import time
    # the wall-time budget applies to the complete suite only
    if not ACCEPTANCE_LINES or session.testscollected < 100:
        return
    elapsed = time.perf_counter() - _START["t"]
    ok = elapsed < SUITE_BUDGET
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion 8: full suite wall time "
                            f"{elapsed:.0f} s (budget {SUITE_BUDGET:.0f} s)")
    if not ok:
        session.exitstatus = 1
