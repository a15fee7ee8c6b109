"""Shared pytest plumbing: the acceptance summary block.

test_acceptance.py records one entry per criterion; the hook below prints
them as a single PASS/FAIL line each at the end of the run, so the verdicts
stay visible even when pytest captures stdout.
"""

ACCEPTANCE_RESULTS = []


def record_criterion(number, description, ok, detail=""):
    ACCEPTANCE_RESULTS.append((number, description, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, ok, detail in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if ok else "FAIL"
        line = f"{verdict} criterion {number}: {description}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
