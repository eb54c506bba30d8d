"""Split Hamiltonian flows and their Strang composition.

The preconditioned dynamics are split into a harmonic rotation of the
position-velocity pair and a velocity kick by the preconditioned gradient.
Both sub-flows are exact, and one integrator step composes a half kick, a full
rotation, and another half kick.  A closed-form variant of the same step is
kept as an independent implementation for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .potentials import Potential
from .space import CovarianceModel, Field, apply_covariance

__all__ = [
    "DIVERGENCE_LIMIT",
    "IntegratorParams",
    "PhaseState",
    "TrajectoryDivergence",
    "exact_flow_affine",
    "kick_flow",
    "rotate_flow",
    "strang_step",
    "strang_step_closed_form",
    "trajectory",
]

# Any coordinate beyond this magnitude aborts a trajectory; the sampler maps
# the abort to certain rejection.
DIVERGENCE_LIMIT = 1e100


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Position-velocity pair driving the dynamics."""

    q: Field
    v: Field

    def __post_init__(self):
        if self.q.dim != self.v.dim or self.q.repr != self.v.repr:
            raise ValueError(
                "position and velocity must share dimension and representation"
            )


@dataclass(frozen=True)
class IntegratorParams:
    """Step size ``h`` and step count ``steps``; the trajectory runs for h*steps."""

    h: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.h) or self.h <= 0.0:
            raise ValueError("step size h must be a positive real")
        if int(self.steps) < 1:
            raise ValueError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def trajectory_length(self) -> float:
        return self.h * self.steps


class TrajectoryDivergence(RuntimeError):
    """A trajectory left the representable range; carries the failing step."""

    def __init__(self, step_index: int):
        super().__init__(f"trajectory diverged at step {step_index}")
        self.step_index = step_index


def rotate_flow(state: PhaseState, t: float) -> PhaseState:
    """Exact flow of the harmonic part: rotation by angle ``t`` in phase space."""
    c, s = np.cos(t), np.sin(t)
    return PhaseState(c * state.q + s * state.v, c * state.v - s * state.q)


def kick_flow(
    state: PhaseState, t: float, potential: Potential, cov: CovarianceModel
) -> PhaseState:
    """Exact flow of the gradient part: velocity shift, position frozen."""
    force = apply_covariance(cov, potential.gradient(state.q))
    return PhaseState(state.q, state.v - t * force)


def strang_step(
    state: PhaseState,
    params: IntegratorParams,
    potential: Potential,
    cov: CovarianceModel,
) -> PhaseState:
    """One integrator step: half kick, full rotation, half kick."""
    h = params.h
    mid = rotate_flow(kick_flow(state, 0.5 * h, potential, cov), h)
    return kick_flow(mid, 0.5 * h, potential, cov)


def strang_step_closed_form(
    state: PhaseState,
    params: IntegratorParams,
    potential: Potential,
    cov: CovarianceModel,
) -> PhaseState:
    """The same step written out explicitly; oracle twin of ``strang_step``."""
    h = params.h
    c, s = np.cos(h), np.sin(h)
    g0 = apply_covariance(cov, potential.gradient(state.q))
    q1 = c * state.q + s * state.v - (0.5 * h * s) * g0
    g1 = apply_covariance(cov, potential.gradient(q1))
    v1 = c * state.v - s * state.q - (0.5 * h * c) * g0 - (0.5 * h) * g1
    return PhaseState(q1, v1)


def _diverged(state: PhaseState) -> bool:
    for arr in (state.q.data, state.v.data):
        if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > DIVERGENCE_LIMIT:
            return True
    return False


def trajectory(
    state: PhaseState,
    params: IntegratorParams,
    potential: Potential,
    cov: CovarianceModel,
) -> List[PhaseState]:
    """All intermediate states of an integrated trajectory, start included.

    Returns ``steps + 1`` states; the full path is retained because the
    energy-error estimate sums gradient-velocity pairings over every step.

    Raises:
        TrajectoryDivergence: a state left the representable range.
    """
    out = [state]
    for i in range(params.steps):
        state = strang_step(state, params, potential, cov)
        if _diverged(state):
            raise TrajectoryDivergence(i)
        out.append(state)
    return out


def exact_flow_affine(
    state: PhaseState, t: float, b: Field, cov: CovarianceModel
) -> PhaseState:
    """Exact dynamics for time ``t`` when the potential gradient is constant ``b``.

    Shifting the position by the preconditioned gradient turns the system into
    a pure rotation, which gives the reference flow for affine potentials.
    """
    shift = apply_covariance(cov, b)
    c, s = np.cos(t), np.sin(t)
    u0 = state.q + shift
    return PhaseState(c * u0 + s * state.v - shift, c * state.v - s * u0)
