import numpy as np
import pytest

from pnrdcal import MultiplexConfig, build_convolution_matrix


@pytest.fixture(scope="session")
def tmd():
    """Convolution matrix of the default 8-bin detector at N = 9."""
    return build_convolution_matrix(MultiplexConfig.time_multiplexed())


def tmd_matrix(N: int, bins: int = 8) -> np.ndarray:
    return build_convolution_matrix(MultiplexConfig.uniform(bins, N - 1))


def random_diagonal(rng, N: int) -> np.ndarray:
    c = rng.random(N) ** 2
    return c / c.sum()


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
