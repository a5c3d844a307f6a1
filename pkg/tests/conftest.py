"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import re

ACCEPTANCE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter):
    stats = terminalreporter.stats
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in stats.get(outcome, []):
            if ACCEPTANCE not in rep.nodeid or rep.when != "call" and outcome != "error":
                continue
            m = re.search(r"test_criterion_(\d+)", rep.nodeid)
            if m:
                detail = dict(rep.user_properties).get("detail", "")
                results[int(m.group(1))] = (outcome == "passed", detail)
    if not results:
        return
    failed_elsewhere = any(
        ACCEPTANCE not in rep.nodeid for key in ("failed", "error") for rep in stats.get(key, [])
    )
    any_failed = failed_elsewhere or not all(ok for ok, _ in results.values())
    terminalreporter.section("acceptance criteria")
    terminalreporter.write_line(
        f"criterion 1: {'FAIL' if any_failed else 'PASS'} (property suite passes in full)"
    )
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
