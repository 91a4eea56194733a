import pytest

from slmsim.workload import WorkloadSpec, synthetic


@pytest.fixture(scope="session")
def standard_trace():
    """500 closed-loop requests of 512 prompt + 256 generated tokens."""
    return synthetic(WorkloadSpec(n_requests=500, input_len=512, output_len=256))


@pytest.fixture(scope="session")
def small_trace():
    return synthetic(WorkloadSpec(n_requests=60, input_len=128, output_len=32))


# criterion number -> (passed, detail); filled in by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
