"""Tests for the volume-normalized conformal curvature flow."""

import json
import math

import numpy as np
import pytest

from widthlab.conformal import (
    AxisymProfile,
    max_latitude_sphere,
    scalar_curvature_field,
)
from widthlab.numerics import GridFunction, composite_simpson
from widthlab import yamabe

ROUND_ENERGY = 6.0 * (2.0 * math.pi**2) ** (2.0 / 3.0)
ROUND_NORMALIZED_WIDTH = (16.0 / math.pi) ** (1.0 / 3.0)


def bump_profile(n, amplitude=0.3):
    return AxisymProfile.from_function(lambda t: 1.0 + amplitude * np.cos(t), n)


class TestAverageScalarCurvature:
    def test_round_value(self):
        p = AxisymProfile.round_profile(201)
        assert abs(yamabe.average_scalar_curvature(p) - 6.0) < 1e-8

    def test_constant_scaling(self):
        p = AxisymProfile.from_function(lambda t: 2.0 + 0.0 * t, 201)
        assert abs(yamabe.average_scalar_curvature(p) - 6.0 / 16.0) < 1e-8

    def test_matches_grid_refinement(self):
        coarse = yamabe.average_scalar_curvature(bump_profile(401))
        fine = yamabe.average_scalar_curvature(bump_profile(1601))
        assert abs(coarse - fine) / abs(fine) < 1e-5


class TestHilbertEinsteinEnergy:
    def test_round_value(self):
        p = AxisymProfile.round_profile(201)
        assert abs(yamabe.hilbert_einstein_energy(p) - ROUND_ENERGY) < 1e-6

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_scale_invariance(self, c):
        base = yamabe.hilbert_einstein_energy(bump_profile(401))
        scaled = yamabe.hilbert_einstein_energy(
            AxisymProfile.from_function(lambda t: c * (1.0 + 0.3 * np.cos(t)), 401)
        )
        assert abs(scaled - base) < 1e-10

    def test_round_minimizes_in_conformal_class(self):
        assert yamabe.hilbert_einstein_energy(bump_profile(401)) > ROUND_ENERGY + 0.1


class TestStep:
    def test_round_is_fixed_point(self):
        state = yamabe.flow_state(AxisymProfile.round_profile(101))
        after = yamabe.step(state, 1e-3)
        assert np.max(np.abs(after.profile.u - 1.0)) < 1e-14

    def test_constant_profile_is_fixed_point(self):
        p = AxisymProfile.from_function(lambda t: 1.4 + 0.0 * t, 101)
        after = yamabe.step(yamabe.flow_state(p), 1e-3)
        assert np.max(np.abs(after.profile.u - 1.4)) < 1e-10

    def test_energy_and_volume_after_one_step(self):
        state = yamabe.flow_state(bump_profile(401))
        after = yamabe.step(state, 1e-5)
        assert after.energy <= state.energy + 1e-12
        assert abs(after.volume - state.volume) < 1e-12

    def test_large_dt_is_substepped_stably(self):
        # The stability constraint is enforced internally, so a caller-facing
        # step far above the explicit limit still produces a valid state.
        state = yamabe.flow_state(bump_profile(101))
        after = yamabe.step(state, 1e-2)
        assert np.all(after.profile.u > 0.0)
        assert after.energy < state.energy

    def test_nonpositive_dt_rejected(self):
        state = yamabe.flow_state(bump_profile(101))
        with pytest.raises(ValueError):
            yamabe.step(state, 0.0)
        with pytest.raises(ValueError):
            yamabe.step(state, -1e-5)

    def test_unstable_override_loses_positivity(self):
        # Overriding the stability constant reproduces the explicit-Euler
        # blow-up and must surface as a flow error, not silent garbage.
        state = yamabe.flow_state(bump_profile(101))
        with pytest.raises(yamabe.FlowError):
            yamabe.step(state, 0.5, cfl=50.0)

    def test_substep_budget_exhaustion(self):
        p = AxisymProfile.from_function(lambda t: 0.05 + 0.0 * t, 11)
        with pytest.raises(yamabe.FlowError):
            yamabe.step(yamabe.flow_state(p), 5.0)


class TestRun:
    def test_round_converges_immediately(self):
        trace = yamabe.run(AxisymProfile.round_profile(101), t_end=1.0, dt=1e-3)
        assert trace.status == "converged"
        assert trace.monitors["t"].size == 1

    def test_bad_arguments(self):
        p = bump_profile(101)
        with pytest.raises(ValueError):
            yamabe.run(p, t_end=0.0, dt=1e-4)
        with pytest.raises(ValueError):
            yamabe.run(p, t_end=1.0, dt=-1e-4)
        with pytest.raises(ValueError):
            yamabe.run(p, t_end=1.0, dt=1e-4, sample_every=0)

    def test_sampling_cadence(self):
        trace = yamabe.run(
            bump_profile(101), t_end=0.01, dt=1e-4, sample_every=30,
            convergence_tol=1e-12,
        )
        assert trace.status == "completed"
        times = [s.time for s in trace.states]
        assert times == pytest.approx([0.0, 30e-4, 60e-4, 90e-4, 0.01])

    def test_perturbed_profile_converges_to_mobius_round(self):
        trace = yamabe.run(bump_profile(101), t_end=3.0, dt=1e-4, sample_every=200)
        mon = trace.monitors
        assert trace.status == "converged"
        assert mon["sup_R_minus_r"][-1] < 1e-3
        assert mon["volume_drift"].max() < 1e-12
        assert np.all(np.diff(mon["energy"]) <= 1e-8)
        assert np.all(mon["r_avg"] >= mon["r_avg"][-1] - 1e-6)
        final = trace.states[-1]
        normalized = final.width_bound / final.volume ** (2.0 / 3.0)
        assert abs(normalized - ROUND_NORMALIZED_WIDTH) / ROUND_NORMALIZED_WIDTH < 5e-3
        # The limit is a conformal (Moebius) image of the round metric:
        # 1/u^2 is affine in cos(theta) for that family.
        u = final.profile.u
        design = np.vstack([np.ones(final.profile.n), np.cos(final.profile.thetas)]).T
        coef, *_ = np.linalg.lstsq(design, 1.0 / u**2, rcond=None)
        assert np.max(np.abs(design @ coef - 1.0 / u**2)) < 5e-4


class TestWidthDerivativeMonitor:
    def test_needs_three_states(self):
        trace = yamabe.run(
            bump_profile(101), t_end=2e-4, dt=1e-4, sample_every=1000,
            convergence_tol=1e-12,
        )
        assert len(trace.states) == 2
        with pytest.raises(ValueError):
            yamabe.width_derivative_monitor(trace)

    def test_round_is_stationary(self):
        trace = yamabe.run(
            AxisymProfile.round_profile(101), t_end=5e-3, dt=1e-3,
            sample_every=1, convergence_tol=0.0,
        )
        for record in yamabe.width_derivative_monitor(trace):
            assert abs(record["lhs"]) < 1e-9
            assert abs(record["rhs"]) < 1e-9

    def test_residual_small_against_formula(self):
        trace = yamabe.run(bump_profile(101), t_end=2.0, dt=1e-4, sample_every=50)
        records = yamabe.width_derivative_monitor(trace)
        residual = max(abs(r["residual"]) for r in records)
        magnitude = max(abs(r["rhs"]) for r in records)
        assert residual <= 0.02 * magnitude


class TestTheorem1Monitor:
    def test_round_equality(self):
        trace = yamabe.run(AxisymProfile.round_profile(101), t_end=1.0, dt=1e-3)
        report = yamabe.theorem1_monitor(trace)
        assert report.passed
        assert abs(report.product_at_max - 24.0 * math.pi) < 1e-4

    def test_small_bump_product_exceeds_bound_at_start(self):
        # The latitude-sphere width bound is not tight at t = 0 for
        # translation-mode perturbations: the product overshoots 24*pi at
        # second order in the amplitude even though the flow limit is round.
        trace = yamabe.run(
            bump_profile(201, amplitude=0.1), t_end=0.05, dt=2e-5, sample_every=250
        )
        report = yamabe.theorem1_monitor(trace)
        assert report.tau_star == 0.0
        assert report.product_at_max == pytest.approx(76.45719, abs=2e-3)
        assert not report.passed

    def test_monotone_r_along_trace(self):
        trace = yamabe.run(bump_profile(101), t_end=2.0, dt=1e-4, sample_every=200)
        r_values = trace.monitors["r_avg"]
        assert np.all(r_values >= r_values[-1] - 1e-6)

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            yamabe.theorem1_monitor(
                yamabe.FlowTrace(
                    states=[], step_size=1e-4, status="completed",
                    target_volume=1.0, monitors={}, samples=[],
                )
            )


def profile_volume(profile):
    integrand = profile.u**6 * np.sin(profile.thetas) ** 2
    return 4.0 * np.pi * composite_simpson(integrand, profile.spacing)


class TestMaximumTestDirection:
    def test_zero_direction(self):
        p = bump_profile(101)
        report = yamabe.maximum_test_direction(p, GridFunction(np.zeros(101)))
        assert report.trace_integral_over_max_sphere == 0.0

    def test_mean_zero_enforced(self):
        p = bump_profile(101)
        f = GridFunction(np.cos(p.thetas) ** 2)
        report = yamabe.maximum_test_direction(p, f)
        adjusted = report.variation.f.values
        integrand = adjusted * p.u**6 * np.sin(p.thetas) ** 2
        assert abs(4.0 * np.pi * composite_simpson(integrand, p.spacing)) < 1e-10

    def test_family_velocity_and_volume(self):
        p = bump_profile(101)
        report = yamabe.maximum_test_direction(p, GridFunction(np.cos(p.thetas)))
        variation = report.variation
        assert abs(profile_volume(variation.profile_at(0.3)) - profile_volume(p)) < 1e-10
        h = 1e-4
        fd = (variation.profile_at(h).u**4 - variation.profile_at(-h).u**4) / (2 * h)
        expected = variation.f.values * p.u**4
        assert np.max(np.abs(fd - expected)) < 1e-6 * np.max(np.abs(expected))

    def test_reconciles_with_width_derivative_sign(self):
        p = AxisymProfile.from_function(lambda t: 1.0 + 0.05 * np.cos(2 * t), 201)
        field = scalar_curvature_field(p)
        r = yamabe.average_scalar_curvature(p)
        report = yamabe.maximum_test_direction(p, GridFunction(field.values - r))
        sphere = max_latitude_sphere(p)
        width_rhs = (
            r - float(np.interp(sphere.theta, p.thetas, field.values))
        ) * sphere.area
        assert abs(report.trace_integral_over_max_sphere + width_rhs) < 1e-10

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValueError):
            yamabe.maximum_test_direction(bump_profile(101), GridFunction(np.zeros(51)))

    def test_leaving_positive_cone_rejected(self):
        p = bump_profile(101)
        report = yamabe.maximum_test_direction(p, GridFunction(np.cos(p.thetas)))
        with pytest.raises(ValueError):
            report.variation.profile_at(1.5)


class TestTraceOutputs:
    def test_csv_round_trip(self, tmp_path):
        trace = yamabe.run(
            bump_profile(101), t_end=0.01, dt=1e-4, sample_every=50,
            convergence_tol=1e-12,
        )
        path = tmp_path / "trace.csv"
        yamabe.write_trace_csv(trace, str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,volume,r_avg,energy,width_bound,max_theta,sup_R_minus_r"
        assert len(lines) == 1 + len(trace.samples)
        first = [float(x) for x in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == trace.samples[0]["volume"]

    def test_json_summary(self, tmp_path):
        trace = yamabe.run(bump_profile(101), t_end=2.0, dt=1e-4, sample_every=200)
        path = tmp_path / "summary.json"
        yamabe.write_run_summary_json(trace, str(path), config={"n": 101, "dt": 1e-4})
        payload = json.loads(path.read_text())
        assert payload["format"] == "widthlab-report/1"
        assert payload["status"] == "converged"
        assert payload["config"] == {"n": 101, "dt": 1e-4}
        assert payload["max_volume_drift"] < 1e-12
        assert payload["theorem1"]["bound"] == pytest.approx(24.0 * math.pi)
        assert abs(
            payload["final"]["normalized_width"] - ROUND_NORMALIZED_WIDTH
        ) < 1e-2

    def test_deterministic_bytes(self, tmp_path):
        trace = yamabe.run(
            bump_profile(101), t_end=0.005, dt=1e-4, sample_every=10,
            convergence_tol=1e-12,
        )
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        yamabe.write_run_summary_json(trace, str(a), config={"n": 101})
        yamabe.write_run_summary_json(trace, str(b), config={"n": 101})
        assert a.read_bytes() == b.read_bytes()
