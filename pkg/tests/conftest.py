import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if not match:
        return
    key = (int(match.group(1)), match.group(2))
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(key)
        _CRITERIA[key] = ("FAIL" if failed or (prev and prev[0] == "FAIL") else "PASS",
                          dict(report.user_properties))


def _fmt(value):
    return f"{value:.4g}" if isinstance(value, float) else str(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), (status, props) in sorted(_CRITERIA.items()):
        details = ", ".join(f"{k}={_fmt(v)}" for k, v in props.items())
        terminalreporter.write_line(f"criterion {number:2d} {name.replace('_', ' ')}: {status}  {details}")
