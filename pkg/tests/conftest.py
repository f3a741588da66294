ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    # acceptance tests are named test_criterion_NN_<slug>
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_") or report.when != "call" and not report.failed:
        return
    number = int(name.split("_")[2])
    status = "PASS" if report.passed else "FAIL"
    if number in ACCEPTANCE_RESULTS and ACCEPTANCE_RESULTS[number][0] == "FAIL":
        return
    ACCEPTANCE_RESULTS[number] = (status, name.split("_", 3)[3].replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        status, title = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
