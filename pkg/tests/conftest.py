import acceptance_log


def pytest_terminal_summary(terminalreporter) -> None:
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)
