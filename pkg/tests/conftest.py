"""Terminal summary hook: one PASS/FAIL line per acceptance criterion."""

_CRITERIA = {
    "test_c1": "1 gradient integrity",
    "test_c2": "2 loss semantics",
    "test_c3": "3 beam exactness",
    "test_c4": "4 hard cap",
    "test_c5": "5 baseline equivalence",
    "test_c6": "6 oracle repetition elimination",
    "test_c7": "7 end-to-end desk-scale behavior",
    "test_c8": "8 confusion-matrix protocol",
    "test_c9": "9 determinism and persistence",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for category, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                              ("error", "FAIL")):
        for report in terminalreporter.stats.get(category, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            for prefix, label in _CRITERIA.items():
                if name.startswith(prefix):
                    if verdict == "FAIL" or label not in outcomes:
                        outcomes[label] = verdict
    if outcomes:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for label in sorted(outcomes, key=lambda s: s.split()[0]):
            terminalreporter.write_line(f"  criterion {label}: {outcomes[label]}")
