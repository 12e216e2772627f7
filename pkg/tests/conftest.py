"""Shared fixtures: desk-scale configs, a tiny grid, and its dense oracle."""

import numpy as np
import pytest

from trivib.config import RunConfig
from trivib.pipeline import build_grid, make_hamiltonian, oracle_diagonalize

# Desk-scale surface: fictitious light masses keep tiny grids meaningful.
DESK_PES = {
    "pes.mass_end": 3600.0,
    "pes.mass_center": 3200.0,
}

TINY_BASE = {
    **DESK_PES,
    "run.vcut_list": [0.04],
    "run.n_coeffs": 16000,
    "run.seed": 5,
    "run.out_dir": "unused",
    "grid.tmax_factor": 1.5,
    "grid.contraction_cutoff_factor": 2.5,
}


def tiny_config(**overrides):
    entries = dict(TINY_BASE)
    entries.update(overrides)
    return RunConfig.from_dict(entries)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_bundle(tiny_cfg):
    return build_grid(tiny_cfg)


@pytest.fixture(scope="session")
def tiny_h(tiny_cfg, tiny_bundle):
    return make_hamiltonian(tiny_cfg, tiny_bundle)


@pytest.fixture(scope="session")
def tiny_oracle(tiny_cfg, tiny_bundle):
    return oracle_diagonalize(tiny_cfg, bundle=tiny_bundle)


@pytest.fixture(scope="session")
def tiny_dense(tiny_h):
    """Dense matrix of the unscaled operator, assembled column by column."""
    n = tiny_h.grid.n_retained
    H = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        H[:, j] = tiny_h.apply_raw(e)
        e[j] = 0.0
    return 0.5 * (H + H.T)


def goe_eigenvalues(n, rng):
    """Eigenvalues of one GOE draw (off-diagonal variance 1/2-convention)."""
    a = rng.standard_normal((n, n))
    return np.linalg.eigvalsh((a + a.T) / np.sqrt(2.0))


def goe_central_unfolded(n, rng, degree=5):
    from trivib.stats import unfold
    ev = goe_eigenvalues(n, rng)
    central = ev[n // 4: 3 * n // 4]
    return unfold(central, method="polynomial", degree=degree).unfolded


def poisson_levels(n, rng):
    return np.cumsum(rng.exponential(1.0, n))
