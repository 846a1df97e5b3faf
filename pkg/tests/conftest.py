import math

import numpy as np
import pytest

from expfun.levy_model import HyperExpLevyModel
from expfun.mellin_engine import MellinExtension
from expfun.montecarlo import EtaSpec, SamplerConfig, simulate

# psi(z) = z^2 - z: theta = 1 and, with mu = 0 and sigma = 1, I is Cauchy
# with scale 1/sqrt(2).
CAUCHY_SCALE = 1 / math.sqrt(2)

ACCEPTANCE_LINES: dict[int, str] = {}


def cauchy_density(x):
    x = np.asarray(x, dtype=float)
    return CAUCHY_SCALE / (math.pi * (x**2 + CAUCHY_SCALE**2))


def cauchy_tail(x):
    return 0.5 - np.arctan(np.asarray(x, dtype=float) / CAUCHY_SCALE) / math.pi


def cauchy_mellin(s):
    s = np.asarray(s, dtype=complex)
    return CAUCHY_SCALE ** (s - 1) / (2 * np.sin(np.pi * s / 2))


@pytest.fixture(scope="session")
def bm_model():
    return HyperExpLevyModel(sigma_xi=math.sqrt(2), mu_xi=-1.0)


@pytest.fixture(scope="session")
def std_eta():
    return EtaSpec(mu=0.0, sigma=1.0)


@pytest.fixture(scope="session")
def example_model():
    """Two-sided model: drift -2, sigma^2 = 2, jumps (1, 2) up and (1, 3) down."""
    return HyperExpLevyModel(sigma_xi=math.sqrt(2), mu_xi=-2.0, pos_jumps=[(1.0, 2.0)],
                             neg_jumps=[(1.0, 3.0)])


@pytest.fixture(scope="session")
def bm_samples(bm_model, std_eta):
    return simulate(bm_model, std_eta, SamplerConfig(n_paths=200_000, seed=11))


@pytest.fixture(scope="session")
def bm_extension(bm_samples):
    return MellinExtension(bm_samples)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
