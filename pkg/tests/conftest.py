def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and "test_criterion" in nodeid:
                results[nodeid.split("::")[-1]] = status
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(results):
        flag = "PASS" if results[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{flag}  {name}")
