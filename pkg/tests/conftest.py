from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, in execution order."""
    lines = []
    seen = set()
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and nodeid not in seen:
                seen.add(nodeid)
                lines.append((nodeid, label))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for nodeid, label in sorted(lines):
            terminalreporter.write_line(f"[{label}] {nodeid.split('::')[-1]}")
