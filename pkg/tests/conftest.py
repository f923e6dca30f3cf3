def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(test_acceptance.RESULTS):
        terminalreporter.write_line(test_acceptance.RESULTS[cid])
