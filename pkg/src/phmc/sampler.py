"""Exact and adjusted Markov kernels built on the split-flow integrator.

A step refreshes the velocity from the prior, integrates the dynamics, and --
in adjusted mode -- accepts or rejects the endpoint based on the energy error.
The energy error is computed from the telescoped per-step identity rather than
by differencing the (dimension-divergent) Hamiltonian, so it stays stable as
the discretization grows.  The randomness of one step, a velocity draw and a
single uniform, can be injected from outside; the coupling harness relies on
that to drive two chains with identical noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .integrator import (
    IntegratorParams,
    PhaseState,
    TrajectoryDivergence,
    exact_flow_affine,
    trajectory,
)
from .potentials import Potential
from .space import CovarianceModel, Field, apply_covariance, l2_inner, sample_prior

__all__ = [
    "ADJUSTED",
    "EXACT",
    "ChainError",
    "HmcConfig",
    "StepOutcome",
    "adjusted_step",
    "advance_adjusted",
    "advance_exact",
    "energy_error",
    "exact_step",
    "run_chain",
]

EXACT = "exact"
ADJUSTED = "adjusted"


@dataclass(frozen=True)
class HmcConfig:
    """Everything one chain needs: dynamics, target, and mode switches.

    Exact mode requires either a constant-gradient potential (closed-form flow)
    or ``exact_surrogate_steps``, which substitutes the flow by the integrator
    with each step subdivided that many times and the move always accepted.
    """

    integrator: IntegratorParams
    potential: Potential
    covariance: CovarianceModel
    mode: str = ADJUSTED
    flip_on_reject: bool = False
    exact_surrogate_steps: Optional[int] = None

    def __post_init__(self):
        if self.mode not in (EXACT, ADJUSTED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.exact_surrogate_steps is not None and self.exact_surrogate_steps < 1:
            raise ValueError("exact_surrogate_steps must be a positive integer")
        if (
            self.mode == EXACT
            and not self.potential.has_constant_gradient
            and self.exact_surrogate_steps is None
        ):
            raise ValueError(
                "exact mode needs a constant-gradient potential or "
                "exact_surrogate_steps"
            )


@dataclass(frozen=True)
class StepOutcome:
    """Record of one transition.

    ``next`` is the new chain position, ``proposal`` the integrated endpoint,
    and ``velocity`` the end-of-step velocity (sign-flipped on rejection when
    the chain is configured to do so).
    """

    next: Field
    accepted: bool
    delta_h: float
    proposal: PhaseState
    velocity: Field


def energy_error(
    traj: Sequence[PhaseState],
    params: IntegratorParams,
    potential: Potential,
    cov: CovarianceModel,
) -> float:
    """Energy error of an integrated trajectory, finite in any dimension.

    Telescopes the per-step identity into the potential difference, a boundary
    term in the preconditioned gradient norm, and a trapezoid-weighted sum of
    gradient-velocity pairings.  Returns +inf if the trajectory blew up, so a
    rejection is always well defined.
    """
    if len(traj) != params.steps + 1:
        raise ValueError(
            f"trajectory has {len(traj)} states, expected {params.steps + 1}"
        )
    h = params.h
    grads = [potential.gradient(s.q) for s in traj]
    pairings = [l2_inner(g, s.v) for g, s in zip(grads, traj)]

    def sq_precond_norm(g: Field) -> float:
        return l2_inner(g, apply_covariance(cov, g))

    dh = (
        potential.evaluate(traj[-1].q)
        - potential.evaluate(traj[0].q)
        + (h * h / 8.0) * (sq_precond_norm(grads[0]) - sq_precond_norm(grads[-1]))
        - h * sum(pairings[1:-1])
        - 0.5 * h * (pairings[0] + pairings[-1])
    )
    return dh if math.isfinite(dh) else math.inf


def advance_exact(q: Field, v: Field, cfg: HmcConfig) -> StepOutcome:
    """One exact-mode transition with an externally supplied velocity."""
    p = cfg.integrator
    start = PhaseState(q, v)
    b = cfg.potential.constant_gradient(q.dim, q.repr)
    if b is not None:
        end = exact_flow_affine(start, p.trajectory_length, b, cfg.covariance)
    else:
        fine = IntegratorParams(
            p.h / cfg.exact_surrogate_steps, p.steps * cfg.exact_surrogate_steps
        )
        end = trajectory(start, fine, cfg.potential, cfg.covariance)[-1]
    return StepOutcome(
        next=end.q, accepted=True, delta_h=0.0, proposal=end, velocity=end.v
    )


def advance_adjusted(q: Field, v: Field, u: float, cfg: HmcConfig) -> StepOutcome:
    """One adjusted-mode transition with externally supplied velocity and uniform.

    The move is accepted iff ``u <= exp(-delta_h)``; a diverged trajectory is
    treated as an infinite energy error and rejected, never raised.
    """
    p = cfg.integrator
    try:
        traj = trajectory(PhaseState(q, v), p, cfg.potential, cfg.covariance)
        proposal = traj[-1]
        dh = energy_error(traj, p, cfg.potential, cfg.covariance)
    except TrajectoryDivergence:
        proposal = PhaseState(q, v)
        dh = math.inf
    accepted = dh <= 0.0 or (math.isfinite(dh) and u <= math.exp(-dh))
    if accepted:
        return StepOutcome(
            next=proposal.q, accepted=True, delta_h=dh, proposal=proposal,
            velocity=proposal.v,
        )
    kept = -v if cfg.flip_on_reject else v
    return StepOutcome(
        next=q, accepted=False, delta_h=dh, proposal=proposal, velocity=kept
    )


def exact_step(q: Field, rng: np.random.Generator, cfg: HmcConfig) -> StepOutcome:
    """Refresh the velocity from the prior and move along the exact flow."""
    if cfg.mode != EXACT:
        raise ValueError("exact_step called on a non-exact configuration")
    v = sample_prior(cfg.covariance, rng)
    return advance_exact(q, v, cfg)


def adjusted_step(q: Field, rng: np.random.Generator, cfg: HmcConfig) -> StepOutcome:
    """Refresh the velocity, integrate, and accept or reject the endpoint."""
    if cfg.mode != ADJUSTED:
        raise ValueError("adjusted_step called on a non-adjusted configuration")
    v = sample_prior(cfg.covariance, rng)
    u = rng.random()
    return advance_adjusted(q, v, u, cfg)


class ChainError(RuntimeError):
    """A step failed; carries the chain iteration where it happened."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"chain failed at iteration {iteration}: {cause}")
        self.iteration = iteration


def run_chain(
    q0: Field, n_iters: int, rng: np.random.Generator, cfg: HmcConfig
) -> List[StepOutcome]:
    """Iterate the configured kernel ``n_iters`` times, recording every outcome."""
    if n_iters < 1:
        raise ValueError("n_iters must be a positive integer")
    step = exact_step if cfg.mode == EXACT else adjusted_step
    outcomes = []
    q = q0
    for k in range(n_iters):
        try:
            out = step(q, rng, cfg)
        except Exception as exc:  # noqa: BLE001 - annotate with the iteration
            raise ChainError(k, exc) from exc
        outcomes.append(out)
        q = out.next
    return outcomes
