import pytest

ACCEPTANCE_RESULTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and report.when == "call":
        status = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_RESULTS.append(f"[{marker.kwargs['label']}] {status}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)


@pytest.fixture
def write_config(tmp_path):
    """Write a key=value mapping to a config file and return its path."""
    def _write(values, name="config.txt"):
        path = tmp_path / name
        path.write_text("".join(f"{key} = {value}\n" for key, value in values.items()))
        return path
    return _write
