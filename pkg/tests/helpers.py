"""Independent oracles shared by the test modules.

Everything here recomputes expected values from first principles (dense
linear algebra, finite differences, extended-precision accumulation) without
going through the code paths under test.
"""

import numpy as np

from phmc.potentials import Potential
from phmc.space import (
    GRID,
    BridgeGridCovariance,
    CovarianceModel,
    Field,
    SpectralCovariance,
    grid_points,
)


def finite_difference_gradient(potential: Potential, q: Field, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the potential at ``q``.

    Returned as the representative with respect to the module's inner product,
    so on grids the coordinate derivative is divided by the quadrature weight.
    """
    n = q.dim
    out = np.empty(n)
    base = q.data
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        up = potential.evaluate(Field(base + e, q.repr))
        dn = potential.evaluate(Field(base - e, q.repr))
        out[i] = (up - dn) / (2.0 * eps)
    if q.repr == GRID:
        out *= n + 1
    return out


def dense_kernel_apply(cov: BridgeGridCovariance, values: np.ndarray) -> np.ndarray:
    """Quadrature-weighted dense bridge-kernel multiply; O(N^2) reference."""
    x = grid_points(cov.n_points)
    kernel = np.minimum.outer(x, x) - np.outer(x, x)
    return kernel @ values / (cov.n_points + 1)


def hamiltonian_highprec(state, potential: Potential, cov: CovarianceModel) -> np.longdouble:
    """Total energy Phi(q) + half the squared prior norms of q and v.

    Accumulated in extended precision: the energy is O(N) while its change
    along a trajectory is O(h^2), so double-precision differencing would
    drown the signal in cancellation noise.
    """
    q = state.q.data.astype(np.longdouble)
    v = state.v.data.astype(np.longdouble)
    if isinstance(cov, SpectralCovariance):
        inv = 1.0 / cov.lambdas.astype(np.longdouble) ** 2
        quad = 0.5 * np.sum(q * q * inv) + 0.5 * np.sum(v * v * inv)
    else:
        n = cov.n_points

        def prior_energy(d):
            lap = 2.0 * d.copy()
            lap[:-1] -= d[1:]
            lap[1:] -= d[:-1]
            lap *= np.longdouble(n + 1) ** 2
            return np.sum(d * lap) / np.longdouble(n + 1)

        quad = 0.5 * prior_energy(q) + 0.5 * prior_energy(v)
    return np.longdouble(potential.evaluate(state.q)) + quad


def energy_difference_oracle(traj, potential: Potential, cov: CovarianceModel) -> float:
    """Direct finite-dimensional energy change along a trajectory."""
    return float(
        hamiltonian_highprec(traj[-1], potential, cov)
        - hamiltonian_highprec(traj[0], potential, cov)
    )
