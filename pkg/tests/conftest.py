from pathlib import Path

import numpy as np
import pytest

from gpcrack.energy_density import DensitySpec, EnergyParams, stress_free_s
from gpcrack.fixtures import structured_box

DATA = Path(__file__).parent / "data"
S_STAR = stress_free_s(1.0, 3.0, 2.0, 2.0)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def w_ref():
    return DensitySpec("w_ref", c=1, p=3, q=2, r=2, s=1)


@pytest.fixture
def balanced():
    """Parameters whose density is stationary at the identity."""
    params = EnergyParams(s=S_STAR)
    return params, DensitySpec.from_params(params)


def bar480(crack=True, **kw):
    """20 x 2 x 2 cells, 480 tets, mid-plane candidates at x = 2."""
    return structured_box((20, 2, 2), (4.0, 0.4, 0.4), crack_planes=(2.0,) if crack else (), **kw)


def right_side(state, xc):
    """Boolean mask of cut nodes used by tets whose centroid lies beyond x = xc."""
    mask = np.zeros(state.n_nodes, dtype=bool)
    mask[state.tets[state.mesh.centroids[:, 0] > xc].ravel()] = True
    return mask


def random_admissible(state, rng, amp):
    """Random perturbation of the identity, Dirichlet rows left at their data."""
    y = state.mesh.nodes[state.parent] + amp * rng.uniform(-1, 1, (state.n_nodes, 3))
    out = state.with_y(y)
    out.apply_dirichlet()
    return out


def fd_gradient(fun, y, free, h=1e-6):
    g = np.zeros_like(y)
    for i in np.flatnonzero(free):
        for d in range(3):
            yp, ym = y.copy(), y.copy()
            yp[i, d] += h
            ym[i, d] -= h
            g[i, d] = (fun(yp) - fun(ym)) / (2 * h)
    return g


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
