import sys


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(results):
        entries = results[number]
        ok = all(e[0] for e in entries)
        title = entries[0][1]
        details = "; ".join(e[2] for e in entries if e[2])
        tr.write_line(f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {title}  [{details}]")
