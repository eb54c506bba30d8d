"""Potential-energy functionals and their L2 gradients.

Each potential evaluates a functional of the state and returns its gradient as
a field in the same representation as the input.  Gradients are exact gradients
of the discretized functional with respect to the quadrature inner product, so
energy bookkeeping downstream is consistent to rounding in both representations.
Pointwise integrands are computed on grid values; the sine transform moves the
result back when the chain runs on coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .space import (
    GRID,
    SPECTRAL,
    CovarianceModel,
    Field,
    apply_covariance,
    covariance_eigenvalues,
    field_from_grid_values,
    grid_values,
    l2_inner,
    l2_norm,
    native_representation,
    spectral_coefficients,
)

__all__ = [
    "Potential",
    "PotentialConstants",
    "POTENTIALS",
    "double_well_potential",
    "gaussian_potential",
    "linear_potential",
    "make_potential",
    "quartic_norm_potential",
    "zero_potential",
]


@dataclass(frozen=True)
class PotentialConstants:
    """Analytic regularity constants, where available.

    ``L`` bounds the preconditioned gradient's Lipschitz constant, ``L_prime``
    its growth offset, ``zeta`` the coercivity of the coupled quadratic form,
    ``M`` the Lipschitz constant of the preconditioned Hessian, and ``M4``
    the fourth-derivative bound (named M4 to keep it apart from the
    discretization dimension).
    """

    L: Optional[float] = None
    L_prime: Optional[float] = None
    zeta: Optional[float] = None
    M: Optional[float] = None
    M4: Optional[float] = None


class Potential:
    """Interface: a real functional with an L2-gradient in either representation."""

    name = "potential"
    has_constant_gradient = False

    def evaluate(self, q: Field) -> float:
        raise NotImplementedError

    def gradient(self, q: Field) -> Field:
        raise NotImplementedError

    def constant_gradient(self, dim: int, rep: str) -> Optional[Field]:
        """The gradient field when it does not depend on the state, else None."""
        return None

    def analytic_constants(self, cov: CovarianceModel) -> Optional[PotentialConstants]:
        """Closed-form regularity constants for this potential under ``cov``."""
        return None


@lru_cache(maxsize=32)
def _unit_function(dim: int, rep: str) -> Field:
    return field_from_grid_values(np.ones(dim), rep)


class LinearPotential(Potential):
    """Integral of the state over [0, 1]; the gradient is the constant one."""

    name = "linear"
    has_constant_gradient = True

    def evaluate(self, q: Field) -> float:
        return l2_inner(_unit_function(q.dim, q.repr), q)

    def gradient(self, q: Field) -> Field:
        return _unit_function(q.dim, q.repr)

    def constant_gradient(self, dim: int, rep: str) -> Field:
        return _unit_function(dim, rep)

    def analytic_constants(self, cov: CovarianceModel) -> PotentialConstants:
        one = _unit_function(cov.dim, native_representation(cov))
        growth = l2_norm(apply_covariance(cov, one))
        return PotentialConstants(L=0.0, L_prime=growth, zeta=1.0, M=0.0, M4=0.0)


class ZeroPotential(Potential):
    """Identically zero; every proposal is energy-neutral."""

    name = "zero"
    has_constant_gradient = True

    def evaluate(self, q: Field) -> float:
        return 0.0

    def gradient(self, q: Field) -> Field:
        return Field(np.zeros(q.dim), q.repr)

    def constant_gradient(self, dim: int, rep: str) -> Field:
        return Field(np.zeros(dim), rep)

    def analytic_constants(self, cov: CovarianceModel) -> PotentialConstants:
        return PotentialConstants(L=0.0, L_prime=0.0, zeta=1.0, M=0.0, M4=0.0)


class QuarticNormPotential(Potential):
    """(|q|_L2^2 - 1)^2, flat on the unit sphere of the L2 norm."""

    name = "quartic-norm"

    def evaluate(self, q: Field) -> float:
        r2 = l2_inner(q, q)
        return (r2 - 1.0) ** 2

    def gradient(self, q: Field) -> Field:
        r2 = l2_inner(q, q)
        return Field(4.0 * (r2 - 1.0) * q.data, q.repr)


class DoubleWellPotential(Potential):
    """Pointwise double well (gamma/2) * integral of (q(s)^2 - 1/4)^2.

    The wells are the constant functions +1/2 and -1/2.
    """

    name = "double-well"

    def __init__(self, gamma: float):
        if not np.isfinite(gamma) or gamma <= 0.0:
            raise ValueError("gamma must be a positive real")
        self.gamma = float(gamma)

    def evaluate(self, q: Field) -> float:
        g = grid_values(q)
        return 0.5 * self.gamma * float(np.sum((g * g - 0.25) ** 2)) / (q.dim + 1)

    def gradient(self, q: Field) -> Field:
        g = grid_values(q)
        force = 2.0 * self.gamma * (g * g - 0.25) * g
        return field_from_grid_values(force, q.repr)


class QuadraticPotential(Potential):
    """(1/2) <q, A q> for a diagonal positive A in the sine basis."""

    name = "quadratic"

    def __init__(self, diag: np.ndarray):
        a = np.asarray(diag, dtype=np.float64)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("diag must be a non-empty 1-d array")
        if not np.all(np.isfinite(a)) or np.any(a < 0.0):
            raise ValueError("diagonal entries must be non-negative")
        a.flags.writeable = False
        self.diag = a

    def _check_dim(self, q: Field) -> None:
        if q.dim != self.diag.size:
            raise ValueError(
                f"field dimension {q.dim} does not match quadratic form "
                f"of size {self.diag.size}"
            )

    def evaluate(self, q: Field) -> float:
        self._check_dim(q)
        c = spectral_coefficients(q)
        return 0.5 * float(self.diag @ (c * c))

    def gradient(self, q: Field) -> Field:
        self._check_dim(q)
        if q.repr == SPECTRAL:
            return Field(self.diag * q.data, SPECTRAL)
        c = spectral_coefficients(q)
        return field_from_grid_values(
            grid_values(Field(self.diag * c, SPECTRAL)), GRID
        )

    def analytic_constants(self, cov: CovarianceModel) -> PotentialConstants:
        scaled = covariance_eigenvalues(cov) * self.diag
        return PotentialConstants(
            L=float(np.max(scaled)),
            L_prime=0.0,
            zeta=1.0 + float(np.min(scaled)),
            M=0.0,
            M4=0.0,
        )


def linear_potential() -> Potential:
    return LinearPotential()


def quartic_norm_potential() -> Potential:
    return QuarticNormPotential()


def double_well_potential(gamma: float) -> Potential:
    return DoubleWellPotential(gamma)


def zero_potential() -> Potential:
    return ZeroPotential()


def gaussian_potential(diag: np.ndarray) -> Potential:
    return QuadraticPotential(diag)


POTENTIALS: "dict[str, Callable[..., Potential]]" = {
    "linear": lambda dim, gamma: linear_potential(),
    "quartic-norm": lambda dim, gamma: quartic_norm_potential(),
    "double-well": lambda dim, gamma: double_well_potential(gamma),
    "zero": lambda dim, gamma: zero_potential(),
    "quadratic": lambda dim, gamma: gaussian_potential(np.ones(dim)),
}


def make_potential(name: str, dim: int, gamma: float = 20.0) -> Potential:
    """Look up a potential by registry name.

    ``dim`` sizes the quadratic form and ``gamma`` parameterizes the double
    well; both are ignored by the other entries.
    """
    try:
        builder = POTENTIALS[name]
    except KeyError:
        known = ", ".join(sorted(POTENTIALS))
        raise ValueError(f"unknown potential {name!r} (known: {known})") from None
    return builder(dim, gamma)
