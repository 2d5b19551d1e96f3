"""Shared fixtures and small synthetic-network helpers for the test suite."""
import numpy as np
import pytest

from fbmc_cellfree.channel import PowerDelayProfile, load_pdp
from fbmc_cellfree.filterbank import phydyas_prototype
from fbmc_cellfree.geometry import NetworkLayout

# Sample interval of the small (M=64) evaluation grid: 64 subcarriers at
# 120 kHz spacing, i.e. the same 7.68 MHz sample rate as 256 x 30 kHz.
T_S_SMALL = 1.0 / (64 * 120e3)


def synthetic_layout(K, U, rng, tau_max=12, radius=1000.0,
                     t_s=T_S_SMALL, unit_beta=True):
    """Layout with unit large-scale gains and random integer offsets.

    Keeps the per-link statistics simple (no path-loss disparity) so that
    fixed-tolerance comparisons against analytic expectations are meaningful.
    """
    tau = rng.integers(0, tau_max + 1, size=(K, U))
    tau -= tau.min(axis=0, keepdims=True)   # nearest AP arrives at zero
    beta = np.ones((K, U)) if unit_beta else rng.uniform(0.1, 1.0, (K, U))
    pos_a = rng.uniform(-radius, radius, size=(K, 2))
    pos_u = rng.uniform(-radius, radius, size=(U, 2))
    dist = np.linalg.norm(pos_a[:, None] - pos_u[None, :], axis=2)
    return NetworkLayout(pos_a, pos_u, dist, beta, tau, radius, t_s)


@pytest.fixture(scope="session")
def proto64():
    return phydyas_prototype(64, 4)


@pytest.fixture(scope="session")
def eva_small() -> PowerDelayProfile:
    return load_pdp("eva", T_S_SMALL)
