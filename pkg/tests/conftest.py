import os
import sys

from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("vvrate", deadline=None, derandomize=True, max_examples=40)
settings.load_profile("vvrate")

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1].split("[", 1)[0]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.setdefault(name, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcomes = _ACCEPTANCE[name]
        ok = all(o == "passed" for o in outcomes)
        num = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        cases = f" ({len(outcomes)} cases)" if len(outcomes) > 1 else ""
        terminalreporter.write_line(
            f"criterion {int(num):2d} {'PASS' if ok else 'FAIL'}: {label}{cases}")
