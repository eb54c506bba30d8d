import numpy as np
import pytest

from phmc.coupling import (
    CouplingRecord,
    CouplingTrace,
    PointMass,
    ShiftedPrior,
    audit_assumptions,
    audit_trajectory_bounds,
    coupled_step,
    estimate_contraction_rate,
    fit_log_distance,
    run_coupling,
    theorem_contraction_rate,
    wasserstein_decay_experiment,
)
from phmc.coupling import CoupledState
from phmc.integrator import IntegratorParams
from phmc.potentials import (
    double_well_potential,
    gaussian_potential,
    linear_potential,
    quartic_norm_potential,
    zero_potential,
)
from phmc.sampler import ADJUSTED, EXACT, HmcConfig
from phmc.space import (
    BridgeGridCovariance,
    Field,
    SpectralCovariance,
    bridge_eigenvalues,
    covariance_eigenvalues,
    l2_norm,
    sample_prior,
)


def spectral_cfg(n, potential, mode=ADJUSTED, h=0.2, steps=12):
    cov = SpectralCovariance(bridge_eigenvalues(n))
    return cov, HmcConfig(IntegratorParams(h, steps), potential, cov, mode=mode)


def flat_quadratic(n, alpha, cov):
    # scaled so the preconditioned curvature is alpha in every direction
    return gaussian_potential(alpha / covariance_eigenvalues(cov))


def synthetic_trace(factors):
    records = [CouplingRecord(0, 1.0, None, True, True, 0.0, 0.0)]
    d = 1.0
    for k, f in enumerate(factors, start=1):
        d *= f
        records.append(CouplingRecord(k, d, None, True, True, 0.0, 0.0))
    return CouplingTrace(records=records)


class TestCoupledStep:
    def test_identical_states_stay_identical(self):
        for pot in (zero_potential(), quartic_norm_potential()):
            cov, cfg = spectral_cfg(32, pot)
            rng = np.random.default_rng(0)
            x = sample_prior(cov, rng)
            state = CoupledState(x, x)
            for k in range(10):
                state, rec = coupled_step(state, rng, cfg, iteration=k)
                assert rec.distance_l2 == 0.0
                np.testing.assert_array_equal(state.x.data, state.y.data)

    def test_exact_linear_one_step_factor(self):
        cov, cfg = spectral_cfg(128, linear_potential(), mode=EXACT)
        rng = np.random.default_rng(1)
        x, y = sample_prior(cov, rng), sample_prior(cov, rng)
        d0 = l2_norm(x - y)
        state, rec = coupled_step(CoupledState(x, y), rng, cfg, iteration=1)
        factor = rec.distance_l2 / d0
        assert factor == pytest.approx(abs(np.cos(2.4)), abs=1e-10)

    def test_zero_potential_adjusted_factor(self):
        cov, cfg = spectral_cfg(128, zero_potential())
        rng = np.random.default_rng(2)
        x, y = sample_prior(cov, rng), sample_prior(cov, rng)
        d0 = l2_norm(x - y)
        state, rec = coupled_step(CoupledState(x, y), rng, cfg, iteration=1)
        assert rec.accepted_x and rec.accepted_y
        assert rec.distance_l2 / d0 == pytest.approx(abs(np.cos(2.4)), abs=1e-10)

    def test_sobolev_distance_recorded(self):
        cov, cfg = spectral_cfg(16, zero_potential())
        rng = np.random.default_rng(3)
        x, y = sample_prior(cov, rng), sample_prior(cov, rng)
        _, rec = coupled_step(CoupledState(x, y), rng, cfg, sobolev_index=1.0)
        assert rec.distance_s is not None and rec.distance_s >= rec.distance_l2


class TestRunCoupling:
    def test_equal_starts_coalesce_at_zero(self):
        cov, cfg = spectral_cfg(16, zero_potential())
        rng = np.random.default_rng(4)
        x = sample_prior(cov, rng)
        trace = run_coupling(x, x, 10, rng, cfg)
        assert trace.coalesced_at == 0
        assert len(trace.records) == 1

    def test_bitwise_coalescence_stops_early(self):
        cov, cfg = spectral_cfg(64, linear_potential())
        rng = np.random.default_rng(5)
        x, y = sample_prior(cov, rng), sample_prior(cov, rng)
        trace = run_coupling(x, y, 400, rng, cfg)
        assert trace.coalesced_at is not None
        assert trace.records[-1].iteration == trace.coalesced_at
        assert trace.records[-1].distance_l2 == 0.0

    def test_swapping_the_pair_mirrors_the_trace(self):
        cov, cfg = spectral_cfg(32, quartic_norm_potential(), h=0.4, steps=6)
        rng1 = np.random.default_rng(6)
        rng2 = np.random.default_rng(6)
        x0, y0 = Field(np.ones(32) * 0.1), Field(-0.05 * np.ones(32))
        a = run_coupling(x0, y0, 30, rng1, cfg)
        b = run_coupling(y0, x0, 30, rng2, cfg)
        for ra, rb in zip(a.records, b.records):
            assert ra.distance_l2 == rb.distance_l2
            assert ra.accepted_x == rb.accepted_y
            assert ra.accepted_y == rb.accepted_x
            assert ra.delta_h_x == rb.delta_h_y

    def test_distance_increases_only_on_acceptance_mismatch(self):
        cov, cfg = spectral_cfg(256, linear_potential(), h=0.6, steps=4)
        rng = np.random.default_rng(28)
        x, y = sample_prior(cov, rng), sample_prior(cov, rng)
        trace = run_coupling(x, y, 300, rng, cfg)
        mismatches = 0
        floor = trace.records[0].distance_l2 * 1e-9
        for prev, cur in zip(trace.records, trace.records[1:]):
            if prev.distance_l2 <= floor:
                break  # past this point rounding noise dominates the distance
            if cur.distance_l2 > prev.distance_l2 * (1 + 1e-12):
                assert cur.accepted_x != cur.accepted_y
                mismatches += 1
        assert mismatches >= 1  # the step size is large enough to reject sometimes

    def test_deterministic_under_seed(self):
        cov, cfg = spectral_cfg(32, quartic_norm_potential())
        x0, y0 = Field(np.ones(32) * 0.2), Field(np.zeros(32))
        a = run_coupling(x0, y0, 20, np.random.default_rng(8), cfg)
        b = run_coupling(x0, y0, 20, np.random.default_rng(8), cfg)
        assert a.distances().tolist() == b.distances().tolist()


class TestContractionRate:
    def test_exact_geometric_trace(self):
        trace = synthetic_trace([0.9] * 30)
        assert estimate_contraction_rate(trace) == pytest.approx(0.9, abs=1e-6)

    def test_insufficient_data(self):
        trace = synthetic_trace([0.9] * 5)
        with pytest.raises(ValueError, match="insufficient"):
            estimate_contraction_rate(trace)

    def test_invariant_under_distance_rescaling(self):
        factors = list(np.random.default_rng(9).uniform(0.7, 0.95, size=40))
        trace = synthetic_trace(factors)
        scaled = CouplingTrace(
            records=[
                CouplingRecord(r.iteration, 37.5 * r.distance_l2, None, True, True, 0.0, 0.0)
                for r in trace.records
            ]
        )
        assert estimate_contraction_rate(scaled) == pytest.approx(
            estimate_contraction_rate(trace), rel=1e-12
        )

    def test_window_restriction(self):
        trace = synthetic_trace([0.5] * 10 + [0.9] * 30)
        rate, r2 = fit_log_distance(trace, start=11, stop=41)
        assert rate == pytest.approx(0.9, abs=1e-6)
        assert r2 > 0.999999

    def test_theorem_rate_linear_small_time(self):
        # measured factor for the linear potential stays under the guarantee
        cov, cfg = spectral_cfg(256, linear_potential(), mode=EXACT, h=0.1, steps=5)
        rng = np.random.default_rng(10)
        x, y = sample_prior(cov, rng), sample_prior(cov, rng)
        trace = run_coupling(x, y, 60, rng, cfg)
        rate = estimate_contraction_rate(trace)
        assert rate == pytest.approx(abs(np.cos(0.5)), abs=1e-6)
        assert rate <= theorem_contraction_rate(1.0, 0.5)

    def test_exact_mode_distance_never_increases_under_the_gate(self):
        n = 64
        cov = SpectralCovariance(bridge_eigenvalues(n))
        quad = flat_quadratic(n, 0.25, cov)
        configs = [
            HmcConfig(IntegratorParams(0.1, 9), linear_potential(), cov, mode=EXACT),
            HmcConfig(
                IntegratorParams(0.05, 16), quad, cov, mode=EXACT,
                exact_surrogate_steps=64,
            ),
        ]
        for cfg in configs:
            rng = np.random.default_rng(30)
            x, y = sample_prior(cov, rng), sample_prior(cov, rng)
            trace = run_coupling(x, y, 50, rng, cfg)
            d = trace.distances()
            floor = d[0] * 1e-9
            live = d[d > floor]
            assert np.all(np.diff(live) <= live[:-1] * 1e-12)


class TestAssumptionAudit:
    def test_linear_is_exactly_coercive(self):
        cov, cfg = spectral_cfg(16, linear_potential())
        params = IntegratorParams(0.1, 9)
        report = audit_assumptions(
            linear_potential(), cov, params, 200, np.random.default_rng(11),
            r_quantile_draws=500,
        )
        assert report.L_hat == 0.0
        assert report.zeta_hat == 1.0
        assert report.convexity_ok and report.step_condition_ok
        assert report.trajectory_gate_ok
        assert report.theorem_rate == pytest.approx(1.0 - 0.81 / 27.0)

    def test_flat_quadratic_reproduces_analytic_constants(self):
        n, alpha = 16, 0.25
        cov = SpectralCovariance(bridge_eigenvalues(n))
        pot = flat_quadratic(n, alpha, cov)
        params = IntegratorParams(0.05, 16)
        report = audit_assumptions(
            pot, cov, params, 400, np.random.default_rng(12), r_quantile_draws=500
        )
        assert report.L_hat == pytest.approx(alpha, rel=0.05)
        assert report.zeta_hat == pytest.approx(1.0 + alpha, rel=0.05)
        assert report.M_hat == pytest.approx(0.0, abs=1e-6)

    def test_generic_quadratic_estimates_are_one_sided(self):
        n = 16
        lam2 = bridge_eigenvalues(n) ** 2
        a = np.linspace(0.5, 4.0, n)
        cov = SpectralCovariance(bridge_eigenvalues(n))
        pot = gaussian_potential(a)
        report = audit_assumptions(
            pot, cov, IntegratorParams(0.05, 10), 300, np.random.default_rng(13),
            r_quantile_draws=500,
        )
        true_l = np.max(lam2 * a)
        true_zeta = 1.0 + np.min(lam2 * a)
        assert report.L_hat <= true_l + 1e-9
        assert true_zeta - 1e-9 <= report.zeta_hat <= 1.0 + np.max(lam2 * a) + 1e-9

    def test_double_well_violates_coercivity(self):
        cov = BridgeGridCovariance(64)
        report = audit_assumptions(
            double_well_potential(60.0), cov, IntegratorParams(0.2, 12), 1000,
            np.random.default_rng(14), r_quantile_draws=200,
        )
        assert report.zeta_hat < 0.0
        assert not report.convexity_ok

    def test_requires_enough_pairs(self):
        cov, _ = spectral_cfg(8, linear_potential())
        with pytest.raises(ValueError, match="n_pairs"):
            audit_assumptions(
                linear_potential(), cov, IntegratorParams(0.1, 5), 10,
                np.random.default_rng(15),
            )


class TestTrajectoryBoundAudit:
    def test_contraction_premise_holds_on_unit_interval(self):
        # squared cosine stays under the claimed quadratic envelope
        t = np.linspace(1e-4, 1.0, 2000)
        assert np.all(np.cos(t) ** 2 <= 1.0 - t * t / 12.0)

    def test_linear_bounds_hold(self):
        cov, _ = spectral_cfg(16, linear_potential())
        report = audit_trajectory_bounds(
            linear_potential(), cov, IntegratorParams(0.1, 9), 200,
            np.random.default_rng(16),
        )
        assert report.ok
        assert report.gate_skipped == 0

    def test_flat_quadratic_bounds_hold(self):
        n, alpha = 16, 0.25
        cov = SpectralCovariance(bridge_eigenvalues(n))
        pot = flat_quadratic(n, alpha, cov)
        report = audit_trajectory_bounds(
            pot, cov, IntegratorParams(0.05, 16), 200, np.random.default_rng(17)
        )
        assert report.ok
        assert report.gate_skipped == 0

    def test_zero_potential_difference_is_a_pure_rotation(self):
        cov, cfg = spectral_cfg(16, zero_potential())
        report = audit_trajectory_bounds(
            zero_potential(), cov, IntegratorParams(0.1, 9), 50,
            np.random.default_rng(18),
        )
        assert report.ok

    def test_rejects_violated_step_condition(self):
        cov, _ = spectral_cfg(16, linear_potential())
        with pytest.raises(ValueError, match="condition"):
            audit_trajectory_bounds(
                linear_potential(), cov, IntegratorParams(0.2, 12), 10,
                np.random.default_rng(19),
            )


class TestWassersteinDecay:
    def test_equal_initial_laws_give_zero_curve(self):
        cov, cfg = spectral_cfg(32, linear_potential(), mode=EXACT)
        res = wasserstein_decay_experiment(
            ShiftedPrior(None), ShiftedPrior(None), 4, 10,
            np.random.default_rng(20), cfg,
        )
        assert np.all(res.mean_distance == 0.0)

    def test_linear_exact_curve_is_geometric(self):
        n = 64
        cov, cfg = spectral_cfg(n, linear_potential(), mode=EXACT)
        shift = Field(np.r_[1.0, np.zeros(n - 1)])
        res = wasserstein_decay_experiment(
            PointMass(Field(np.zeros(n))), ShiftedPrior(None), 6, 30,
            np.random.default_rng(21), cfg,
        )
        factor = abs(np.cos(2.4))
        expected = res.mean_distance[0] * factor ** np.arange(31)
        np.testing.assert_allclose(res.mean_distance, expected, rtol=1e-8)

    def test_theorem_envelope_dominates(self):
        cov, cfg = spectral_cfg(64, linear_potential(), mode=EXACT, h=0.1, steps=5)
        res = wasserstein_decay_experiment(
            PointMass(Field(np.zeros(64))), ShiftedPrior(None), 8, 50,
            np.random.default_rng(22), cfg, zeta=1.0,
        )
        assert res.dominated
        assert np.all(res.mean_distance <= res.theorem_bound + 1e-12)
