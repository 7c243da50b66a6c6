import pytest

from rssiloc import _kernels

BACKENDS = [k for k in (_kernels.NUMBA_KERNELS, _kernels.NUMPY_KERNELS) if k is not None]


@pytest.fixture(params=BACKENDS, ids=lambda k: k.name)
def kernels(request):
    return request.param


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance.append((report.nodeid.split("::", 1)[1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
