import sys
from pathlib import Path

# test modules import shared helpers from each other (e.g. test_models)
sys.path.insert(0, str(Path(__file__).parent))

# criterion results registered by test_acceptance._announce
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)
