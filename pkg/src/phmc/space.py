"""Discretized function-space arithmetic over a Gaussian prior on L2([0, 1]).

A state of dimension N is represented either by its coefficients in the sine
basis sqrt(2)*sin(j*pi*x), j = 1..N, or by its point values on the interior
grid x_i = i/(N+1).  The two representations are exchanged by a discrete sine
transform; with the uniform quadrature weight 1/(N+1) the transform is an
isometry, so inner products agree in both forms up to rounding.

The prior covariance comes in two matching forms: a diagonal operator in the
sine basis (``SpectralCovariance``) and the Brownian-bridge kernel
min(s, t) - s*t evaluated on the grid (``BridgeGridCovariance``).  The bridge
kernel is the Green's function of the negative second derivative with zero
boundary values, so applying the grid covariance reduces to one tridiagonal
solve instead of a dense kernel multiply.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.fft import dst
from scipy.linalg import cho_solve_banded, cholesky_banded

SPECTRAL = "spectral"
GRID = "grid"

__all__ = [
    "SPECTRAL",
    "GRID",
    "Field",
    "SpectralCovariance",
    "BridgeGridCovariance",
    "CovarianceModel",
    "apply_covariance",
    "bridge_eigenvalues",
    "covariance_dim",
    "covariance_eigenvalues",
    "field_from_grid_values",
    "grid_points",
    "grid_values",
    "l2_inner",
    "l2_norm",
    "native_representation",
    "quadrature_weight",
    "sample_prior",
    "sine_basis_matrix",
    "sobolev_inner",
    "sobolev_norm",
    "spectral_coefficients",
    "to_grid",
    "to_spectral",
]


@dataclass(frozen=True, eq=False)
class Field(object):
    """One element of the N-dimensional state space.

    ``data`` holds sine-basis coefficients when ``repr == "spectral"`` and
    point values on the interior grid when ``repr == "grid"``.  The array is
    adopted and frozen; all operations return new fields.
    """

    data: np.ndarray
    repr: str = SPECTRAL

    def __post_init__(self):
        if self.repr not in (SPECTRAL, GRID):
            raise ValueError(f"unknown representation {self.repr!r}")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("field data must be a non-empty 1-d array")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.size

    def __add__(self, other: "Field") -> "Field":
        _check_same_space(self, other)
        return Field(self.data + other.data, self.repr)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_space(self, other)
        return Field(self.data - other.data, self.repr)

    def __neg__(self) -> "Field":
        return Field(-self.data, self.repr)

    def __mul__(self, scalar) -> "Field":
        return Field(self.data * float(scalar), self.repr)

    __rmul__ = __mul__


def _check_same_space(f: Field, g: Field) -> None:
    if f.dim != g.dim or f.repr != g.repr:
        raise ValueError(
            "incompatible discretizations: "
            f"{f.repr}[{f.dim}] vs {g.repr}[{g.dim}]"
        )


@dataclass(frozen=True)
class SpectralCovariance:
    """Diagonal covariance in the sine basis; ``lambdas`` are standard deviations."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("lambdas must be a non-empty 1-d array")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            raise ValueError("all covariance standard deviations must be positive")
        # Sanity check of polynomial decay: non-increasing past the peak.
        k = int(np.argmax(lam))
        tail = lam[k:]
        if np.any(np.diff(tail) > 0.0):
            raise ValueError("lambdas must be non-increasing past their maximum")
        lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)

    @property
    def dim(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class BridgeGridCovariance:
    """Brownian-bridge covariance on the interior grid x_i = i/(N+1)."""

    n_points: int

    def __post_init__(self):
        if int(self.n_points) < 1:
            raise ValueError("n_points must be a positive integer")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dim(self) -> int:
        return self.n_points

    def kernel_matrix(self) -> np.ndarray:
        """Dense kernel min(x_i, x_j) - x_i * x_j (reference; O(N^2) memory)."""
        x = grid_points(self.n_points)
        return np.minimum.outer(x, x) - np.outer(x, x)


CovarianceModel = Union[SpectralCovariance, BridgeGridCovariance]


def covariance_dim(cov: CovarianceModel) -> int:
    return cov.dim


def native_representation(cov: CovarianceModel) -> str:
    return SPECTRAL if isinstance(cov, SpectralCovariance) else GRID


def covariance_eigenvalues(cov: CovarianceModel) -> np.ndarray:
    """Eigenvalues of the covariance operator in the sine basis.

    Both covariance forms are diagonalized by the discrete sine vectors;
    for the grid form the eigenvalues are those of the inverse scaled
    second-difference matrix.
    """
    if isinstance(cov, SpectralCovariance):
        return cov.lambdas**2
    n = cov.n_points
    j = np.arange(1, n + 1)
    return 1.0 / (2.0 * (n + 1) * np.sin(j * np.pi / (2 * (n + 1)))) ** 2


def grid_points(n: int) -> np.ndarray:
    """Interior grid x_i = i/(N+1), i = 1..N."""
    return np.arange(1, n + 1, dtype=np.float64) / (n + 1)


def quadrature_weight(n: int) -> float:
    """Uniform weight of the interior-node quadrature rule."""
    return 1.0 / (n + 1)


# -- sine transforms ---------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


def _grid_from_spectral(coeffs: np.ndarray) -> np.ndarray:
    return dst(coeffs, type=1) / _SQRT2


def _spectral_from_grid(values: np.ndarray) -> np.ndarray:
    return dst(values, type=1) / (_SQRT2 * (len(values) + 1))


def sine_basis_matrix(n: int) -> np.ndarray:
    """Matrix S with S[i, j] = sqrt(2)*sin((j+1)*pi*x_i); reference transform.

    ``S @ coeffs`` maps coefficients to grid values and ``S.T @ values / (n+1)``
    inverts it.  Quadratic in N; the fast path uses a type-1 DST instead.
    """
    x = grid_points(n)
    j = np.arange(1, n + 1, dtype=np.float64)
    return _SQRT2 * np.sin(np.pi * np.outer(x, j))


def grid_values(f: Field) -> np.ndarray:
    """Point values of ``f`` on the interior grid, whatever its representation."""
    return f.data if f.repr == GRID else _grid_from_spectral(f.data)


def spectral_coefficients(f: Field) -> np.ndarray:
    """Sine-basis coefficients of ``f``, whatever its representation."""
    return f.data if f.repr == SPECTRAL else _spectral_from_grid(f.data)


def field_from_grid_values(values: np.ndarray, rep: str) -> Field:
    """Build a field in representation ``rep`` from interior grid values."""
    if rep == GRID:
        return Field(values, GRID)
    return Field(_spectral_from_grid(np.asarray(values, dtype=np.float64)), SPECTRAL)


def to_spectral(f: Field, cov: CovarianceModel) -> Field:
    """Convert ``f`` to sine-basis coefficients (identity if already spectral)."""
    if f.dim != cov.dim:
        raise ValueError(f"field dimension {f.dim} does not match covariance {cov.dim}")
    if f.repr == SPECTRAL:
        return f
    return Field(_spectral_from_grid(f.data), SPECTRAL)


def to_grid(f: Field, cov: CovarianceModel) -> Field:
    """Convert ``f`` to interior grid values (identity if already grid)."""
    if f.dim != cov.dim:
        raise ValueError(f"field dimension {f.dim} does not match covariance {cov.dim}")
    if f.repr == GRID:
        return f
    return Field(_grid_from_spectral(f.data), GRID)


# -- inner products -----------------------------------------------------------


def sobolev_inner(f: Field, g: Field, s: float = 0.0) -> float:
    """Weighted inner product sum_j j^(2s) f_j g_j over sine coefficients.

    Grid-representation inputs are converted to coefficients first.  ``s = 0``
    recovers the L2 inner product; larger ``s`` weights high frequencies more.
    """
    if f.dim != g.dim:
        raise ValueError(
            f"incompatible discretizations: dimensions {f.dim} vs {g.dim}"
        )
    if not np.isfinite(s):
        raise ValueError("sobolev index must be finite")
    fc = spectral_coefficients(f)
    gc = spectral_coefficients(g)
    if s == 0.0:
        return float(fc @ gc)
    j = np.arange(1, f.dim + 1, dtype=np.float64)
    return float((j ** (2.0 * s)) * fc @ gc)


def sobolev_norm(f: Field, s: float = 0.0) -> float:
    return float(np.sqrt(max(sobolev_inner(f, f, s), 0.0)))


def l2_inner(f: Field, g: Field) -> float:
    """L2 pairing in the active representation (quadrature-weighted on grids)."""
    _check_same_space(f, g)
    if f.repr == GRID:
        return float(f.data @ g.data) / (f.dim + 1)
    return float(f.data @ g.data)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))


# -- covariance application ---------------------------------------------------


@lru_cache(maxsize=16)
def _bridge_cholesky(n: int) -> np.ndarray:
    # Upper banded storage of (n+1)^2 * tridiag(-1, 2, -1), the discrete
    # Dirichlet Laplacian whose inverse is the quadrature-weighted bridge kernel.
    scale = float(n + 1) ** 2
    ab = np.zeros((2, n))
    ab[0, 1:] = -scale
    ab[1, :] = 2.0 * scale
    return cholesky_banded(ab)


def apply_covariance(cov: CovarianceModel, w: Field) -> Field:
    """Apply the prior covariance operator to ``w``.

    The spectral form scales coefficient j by lambda_j^2.  The grid form
    evaluates the quadrature-weighted kernel integral by solving the scaled
    second-difference system, which is exact for the bridge kernel.
    """
    if w.dim != cov.dim:
        raise ValueError(f"field dimension {w.dim} does not match covariance {cov.dim}")
    if isinstance(cov, SpectralCovariance):
        if w.repr != SPECTRAL:
            raise ValueError("spectral covariance applied to a grid field")
        return Field(cov.lambdas**2 * w.data, SPECTRAL)
    if w.repr != GRID:
        raise ValueError("grid covariance applied to a spectral field")
    out = cho_solve_banded((_bridge_cholesky(cov.n_points), False), w.data)
    return Field(out, GRID)


# -- prior sampling ------------------------------------------------------------


def sample_prior(cov: CovarianceModel, rng: np.random.Generator) -> Field:
    """Draw one centred Gaussian field with covariance ``cov``.

    Spectral form: independent normals scaled by the standard deviations.
    Grid form: Brownian-bridge values built from a scaled random walk pinned
    at both ends, exact in distribution and O(N).
    """
    if isinstance(cov, SpectralCovariance):
        return Field(cov.lambdas * rng.standard_normal(cov.dim), SPECTRAL)
    n = cov.n_points
    step = np.sqrt(1.0 / (n + 1))
    walk = np.cumsum(step * rng.standard_normal(n + 1))
    return Field(walk[:n] - grid_points(n) * walk[n], GRID)


def bridge_eigenvalues(n: int) -> np.ndarray:
    """Standard deviations 1/(j*pi) of the Brownian-bridge expansion, j = 1..N."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return 1.0 / (np.arange(1, n + 1, dtype=np.float64) * np.pi)
