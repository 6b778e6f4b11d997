import pytest

# (criterion id, passed, detail) collected by the acceptance suite
CRITERIA = []


@pytest.fixture
def criterion():
    def record(key, passed, detail=""):
        line = f"CRITERION {key}: {'PASS' if passed else 'FAIL'}  {detail}"
        CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
