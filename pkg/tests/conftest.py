import re

_RESULTS = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    prev = _RESULTS.get(int(m.group(1)))
    ok = report.passed and (prev is None or prev[0])
    _RESULTS[int(m.group(1))] = (ok, detail or (prev[1] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance")
    for k in sorted(_RESULTS):
        ok, detail = _RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
