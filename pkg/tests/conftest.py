import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    # setup time counts too: shared experiment fixtures run there
    ok = report.passed if report.when == "call" else not (report.failed or report.skipped)
    prev = _results.get(key, (True, m.group(2), 0.0))
    _results[key] = (prev[0] and ok, prev[1], prev[2] + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        ok, name, secs = _results[key]
        terminalreporter.write_line(f"criterion {key:2d} {'PASS' if ok else 'FAIL'}  {name}  ({secs:.1f} s)")
