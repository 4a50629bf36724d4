import numpy as np
import pytest

from kicklab.core import SimParams


@pytest.fixture
def small_params():
    """64-point single-period box used by the oracle comparisons."""
    return SimParams(kappa=10.0, kbar=3.0, d_env=0.1, n_grid=64, q_extent=1, n_sub=100,
                     n_kicks=10, fit_window=(2, 10), sigma_q=0.5, edge_tol=1.0, recenter=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
_ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Call as ``report(label, passed, detail)``; the line is echoed immediately and in the summary."""
    def report(label: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE_LINES.append((label, bool(passed), detail))
        print(f"\n[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
