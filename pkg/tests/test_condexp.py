import math

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

import lfnoise as lf
from lfnoise.condexp import (
    ObjectiveReport,
    QuadratureConfig,
    objective_from_posterior,
    objective_report_from_json,
    objective_value_search,
)
from lfnoise.dist import AtomicDistribution, DensityNoise, point_mass, scale, shift
from lfnoise.errors import NonPositiveSigma, QuadratureBudgetExceeded
from conftest import enum_objective


def _signal(pairs):
    return lf.SignalSpec(AtomicDistribution(pairs))


IRRATIONAL = math.sqrt(2.0) / 4.0


class TestPosteriorMeanAtomic:
    def test_symmetric_collision(self, bernoulli, pm_half):
        pm = lf.posterior_mean_atomic(bernoulli, pm_half)
        assert pm.s.tolist() == [-1.0, 0.0, 1.0]
        assert pm.weight.tolist() == [0.25, 0.5, 0.25]
        assert pm.g.tolist() == [-0.5, 0.0, 0.5]

    def test_point_mass_reveals_signal(self, bernoulli):
        pm = lf.posterior_mean_atomic(bernoulli, point_mass(0.0))
        assert pm.s.tolist() == [-0.5, 0.5]
        assert pm.g.tolist() == [-0.5, 0.5]
        assert pm.weight.tolist() == [0.5, 0.5]

    def test_no_collision_reveals_signal(self):
        x = lf.signal_from_distribution(AtomicDistribution(((0.0, 0.5), (1.0, 0.5))))
        y = AtomicDistribution(((0.0, 0.5), (10.0, 0.5)))
        pm = lf.posterior_mean_atomic(x, y)
        assert len(pm.s) == 4
        assert pm.g.tolist() == [-0.5, 0.5, -0.5, 0.5]

    def test_weights_sum_to_one(self, bernoulli, pm_half):
        pm = lf.posterior_mean_atomic(bernoulli, pm_half)
        assert math.fsum(pm.weight.tolist()) == pytest.approx(1.0, abs=1e-9)

    def test_csv_export(self, bernoulli, pm_half):
        text = lf.posterior_mean_atomic(bernoulli, pm_half).to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "s,weight,g"
        assert len(lines) == 4


class TestObjectiveAtomic:
    def test_symmetric_exact(self, bernoulli, pm_half):
        rep = lf.objective_atomic(bernoulli, pm_half)
        assert rep.J == pytest.approx(0.125, abs=1e-12)
        assert rep.var_x == 0.25
        assert rep.prediction_error == rep.var_x - rep.J
        assert rep.method == "exact_atomic"
        assert rep.quadrature_error_bound == 0.0

    def test_point_mass_perfect_prediction(self, bernoulli):
        rep = lf.objective_atomic(bernoulli, point_mass(0.0))
        assert rep.J == pytest.approx(0.25, abs=1e-12)
        assert rep.prediction_error == pytest.approx(0.0, abs=1e-12)

    def test_rademacher_half(self, rademacher):
        y = AtomicDistribution(((-1.0, 0.5), (1.0, 0.5)))
        rep = lf.objective_atomic(rademacher, y)
        assert rep.J == pytest.approx(0.5, abs=1e-12)
        assert rep.var_x == 1.0

    def test_matches_enumeration_oracle(self):
        battery = [
            (((-0.5, 0.5), (0.5, 0.5)), ((-0.5, 0.5), (0.5, 0.5))),
            (((-0.25, 0.75), (0.75, 0.25)), ((-0.1, 0.9), (0.9, 0.1))),
            (((-1.0, 1 / 3), (0.0, 1 / 3), (1.0, 1 / 3)), ((-1.0, 0.2), (0.0, 0.6), (1.0, 0.2))),
            (((-2.0, 0.2), (-1.0, 0.2), (0.0, 0.2), (1.0, 0.2), (2.0, 0.2)), ((-0.5, 0.5), (0.5, 0.5))),
        ]
        for x_pairs, y_pairs in battery:
            x = _signal(x_pairs)
            y = AtomicDistribution(y_pairs)
            rep = lf.objective_atomic(x, y)
            assert rep.J == pytest.approx(enum_objective(x_pairs, y_pairs), abs=1e-12)

    def test_noise_moments_reported(self, bernoulli):
        y = AtomicDistribution(((-1.0, 0.5), (1.0, 0.5)))
        rep = lf.objective_atomic(bernoulli, y)
        assert rep.noise_mean == 0.0
        assert rep.noise_second_moment == 1.0


class TestPosteriorMeanDensity:
    def test_tanh_closed_form(self, rademacher):
        # independent check of the closed form itself: two-term density ratio
        sigma = 1.0
        pm = lf.posterior_mean_density(rademacher, DensityNoise(((0.0, sigma, 1.0),)))
        sub = pm.s[:: max(1, len(pm.s) // 200)]
        phi = lambda t: math.exp(-0.5 * (t / sigma) ** 2)
        for s in sub.tolist():
            ratio = (phi(s - 1) - phi(s + 1)) / (phi(s - 1) + phi(s + 1))
            assert abs(ratio - math.tanh(s / sigma**2)) <= 1e-12
        g_interp = np.interp(sub, pm.s, pm.g)
        expected = np.tanh(sub / sigma**2)
        assert np.max(np.abs(g_interp - expected)) <= 1e-8

    def test_posterior_bounded_by_atom_range(self, rademacher):
        pm = lf.posterior_mean_density(rademacher, DensityNoise(((0.0, 3.0, 1.0),)))
        assert np.all(pm.g >= -1.0) and np.all(pm.g <= 1.0)
        assert pm.bounds == (-1.0, 1.0)

    def test_odd_symmetry(self, bernoulli):
        pm = lf.posterior_mean_density(bernoulli, DensityNoise(((0.0, 0.7, 1.0),)))
        g_pos = np.interp(0.35, pm.s, pm.g)
        g_neg = np.interp(-0.35, pm.s, pm.g)
        assert abs(g_pos + g_neg) <= 1e-9

    def test_weights_sum_within_tail_bound(self, bernoulli):
        quad = QuadratureConfig()
        pm = lf.posterior_mean_density(bernoulli, DensityNoise(((0.0, 0.5, 1.0),)), quad)
        assert abs(math.fsum(pm.weight.tolist()) - 1.0) <= 1e-9


class TestObjectiveDensity:
    def test_tanh_second_moment_oracle(self, rademacher):
        # J = E[tanh^2(X+Z)] for the unit Gaussian: quadrature oracle built
        # directly from the two-Gaussian density of the sum
        def density(s):
            return 0.5 * (
                math.exp(-0.5 * (s - 1) ** 2) + math.exp(-0.5 * (s + 1) ** 2)
            ) / math.sqrt(2 * math.pi)

        oracle, _ = scipy_quad(lambda s: math.tanh(s) ** 2 * density(s), -12, 12, limit=300)
        rep = lf.objective_density(rademacher, DensityNoise(((0.0, 1.0, 1.0),)))
        assert rep.J == pytest.approx(oracle, abs=1e-8)
        assert rep.method == "quadrature"

    def test_vanishing_noise_limit(self, rademacher):
        rep = lf.objective_density(rademacher, DensityNoise(((0.0, 1e-4, 1.0),)))
        assert abs(rep.J - 1.0) <= 1e-3
        exact = lf.objective_atomic(rademacher, point_mass(0.0))
        assert abs(rep.J - exact.J) <= 1e-3

    def test_mixture_representation_invariance(self, rademacher):
        one = lf.objective_density(rademacher, DensityNoise(((0.0, 1.0, 1.0),)))
        two = lf.objective_density(
            rademacher, DensityNoise(((0.0, 1.0, 0.5), (0.0, 1.0, 0.5)))
        )
        assert abs(one.J - two.J) <= 1e-12

    def test_monte_carlo_cross_check(self, rademacher):
        rep = lf.objective_density(rademacher, DensityNoise(((0.0, 1.0, 1.0),)))
        est = lf.estimate_objective(
            rademacher, DensityNoise(((0.0, 1.0, 1.0),)), 200_000, 128, seed=7
        )
        assert abs(est.J_hat - rep.J) <= 3.0 * est.std_error + 0.01 * rep.var_x

    def test_quadrature_consistency_battery(self):
        cases = []
        for x_pairs in (((-0.5, 0.5), (0.5, 0.5)), ((-1.0, 0.5), (1.0, 0.5)), ((-0.25, 0.75), (0.75, 0.25))):
            for noise in (
                DensityNoise(((0.0, 0.3, 1.0),)),
                DensityNoise(((-0.4, 0.2, 0.5), (0.4, 0.2, 0.5))),
            ):
                cases.append((_signal(x_pairs), noise))
        cases.extend(
            [
                (_signal(((-1.0, 1 / 3), (0.0, 1 / 3), (1.0, 1 / 3))), DensityNoise(((0.0, 0.05, 1.0),))),
                (_signal(((-1.0, 1 / 3), (0.0, 1 / 3), (1.0, 1 / 3))), DensityNoise(((0.0, 2.0, 1.0),))),
                (_signal(((-0.5, 0.5), (0.5, 0.5))), DensityNoise(((-1.0, 1.0, 0.25), (0.5, 0.01, 0.75)))),
                (_signal(((-0.5, 0.5), (0.5, 0.5))), DensityNoise(((0.0, 1e-3, 1.0),))),
            ]
        )
        assert len(cases) >= 10
        for x, y in cases:
            r1 = lf.objective_density(x, y, QuadratureConfig(nodes=16))
            r2 = lf.objective_density(x, y, QuadratureConfig(nodes=32))
            assert abs(r1.J - r2.J) <= r1.quadrature_error_bound

    def test_search_value_close_to_reported(self, bernoulli):
        y = DensityNoise(((0.0, 0.4, 1.0),))
        fast = objective_value_search(bernoulli, y)
        full = lf.objective_density(bernoulli, y)
        assert abs(fast - full.J) <= 1e-9

    def test_budget_exceeded(self, bernoulli):
        with pytest.raises(QuadratureBudgetExceeded):
            lf.objective_density(
                bernoulli, DensityNoise(((0.0, 0.5, 1.0),)), QuadratureConfig(nodes=64, max_nodes=64)
            )


class TestSmoothWithGaussian:
    def test_point_mass_becomes_gaussian(self):
        out = lf.smooth_with_gaussian(point_mass(0.0), 1.0)
        assert out.components == ((0.0, 1.0, 1.0),)

    def test_two_atoms_second_moment(self, pm_half):
        out = lf.smooth_with_gaussian(pm_half, 0.1)
        assert out.components == ((-0.5, 0.1, 0.5), (0.5, 0.1, 0.5))
        mean, second = lf.mixture_moments(out)
        assert mean == 0.0
        assert second == pytest.approx(0.26, abs=1e-15)

    def test_weights_equal_masses(self):
        y = AtomicDistribution(((-1.0, 0.3), (0.0, 0.45), (2.0, 0.25)))
        out = lf.smooth_with_gaussian(y, 0.5)
        assert [w for _, _, w in out.components] == [0.3, 0.45, 0.25]

    def test_mixture_input_inflates_sds(self):
        y = DensityNoise(((0.0, 0.3, 1.0),))
        out = lf.smooth_with_gaussian(y, 0.4)
        assert out.components[0][1] == pytest.approx(0.5)

    def test_rejects_nonpositive_sigma(self, pm_half):
        with pytest.raises(NonPositiveSigma):
            lf.smooth_with_gaussian(pm_half, 0.0)
        with pytest.raises(NonPositiveSigma):
            lf.smooth_with_gaussian(pm_half, -1.0)


class TestInvariants:
    def test_data_processing_upper_bound(self, bernoulli):
        noises = [
            point_mass(0.0),
            AtomicDistribution(((-IRRATIONAL, 0.5), (IRRATIONAL, 0.5))),
            AtomicDistribution(((-0.5, 0.5), (0.5, 0.5))),
            DensityNoise(((0.0, 0.5, 1.0),)),
        ]
        for y in noises:
            rep = lf.objective(bernoulli, y)
            assert rep.J <= rep.var_x + rep.quadrature_error_bound

    def test_equality_iff_no_information_lost(self, bernoulli):
        # distinct sums: conditioning recovers the signal exactly
        y = AtomicDistribution(((-IRRATIONAL, 0.5), (IRRATIONAL, 0.5)))
        assert lf.objective_atomic(bernoulli, y).J == pytest.approx(0.25, abs=1e-12)

    def test_shift_invariance(self, bernoulli, pm_half):
        base = lf.objective_atomic(bernoulli, pm_half).J
        for c in (0.3, -1.7, 12.0):
            shifted = lf.objective_atomic(bernoulli, shift(pm_half, c)).J
            assert abs(shifted - base) <= 1e-9

    def test_scale_covariance(self, bernoulli, pm_half):
        base = lf.objective_atomic(bernoulli, pm_half).J
        for a in (2.0, 0.5, 7.0):
            xs = lf.SignalSpec(scale(bernoulli.dist, a))
            rep = lf.objective_atomic(xs, scale(pm_half, a))
            assert rep.J == pytest.approx(a * a * base, rel=1e-9)

    def test_gaussian_smoothing_strictly_decreases(self):
        signals = [
            ((-0.5, 0.5), (0.5, 0.5)),
            ((-0.25, 0.75), (0.75, 0.25)),
            ((-1.0, 1 / 3), (0.0, 1 / 3), (1.0, 1 / 3)),
            ((-2.0, 0.2), (-1.0, 0.2), (0.0, 0.2), (1.0, 0.2), (2.0, 0.2)),
            ((-1.5, 0.4), (1.0, 0.6)),
        ]
        noises = [point_mass(0.0), AtomicDistribution(((-0.5, 0.5), (0.5, 0.5)))]
        count = 0
        for x_pairs in signals:
            x = _signal(x_pairs)
            for y in noises:
                j_before = lf.objective_atomic(x, y).J
                rep = lf.objective_density(x, lf.smooth_with_gaussian(y, 0.3))
                assert rep.J < j_before - rep.quadrature_error_bound
                count += 1
        assert count >= 10

    def test_posterior_mean_bounds_both_engines(self, bernoulli):
        pm_a = lf.posterior_mean_atomic(bernoulli, AtomicDistribution(((-0.7, 0.4), (0.4667, 0.6))))
        assert pm_a.g.min() >= -0.5 and pm_a.g.max() <= 0.5
        pm_d = lf.posterior_mean_density(bernoulli, DensityNoise(((0.3, 0.9, 1.0),)))
        assert pm_d.g.min() >= -0.5 and pm_d.g.max() <= 0.5


class TestObjectiveReport:
    def test_json_round_trip(self, bernoulli, pm_half):
        rep = lf.objective_atomic(bernoulli, pm_half)
        back = objective_report_from_json(rep.to_json())
        assert back == rep

    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            ObjectiveReport(0.1, 0.25, 0.15, 0.0, 0.25, "magic", 0.0)

    def test_objective_from_posterior_grid(self, rademacher):
        pm = lf.posterior_mean_density(rademacher, DensityNoise(((0.0, 1.0, 1.0),)))
        rep = objective_from_posterior(rademacher, pm)
        full = lf.objective_density(rademacher, DensityNoise(((0.0, 1.0, 1.0),)))
        assert rep.method == "grid"
        assert rep.J == pytest.approx(full.J, abs=1e-9)

    def test_objective_from_posterior_atomic(self, bernoulli, pm_half):
        pm = lf.posterior_mean_atomic(bernoulli, pm_half)
        rep = objective_from_posterior(bernoulli, pm)
        assert rep.method == "exact_atomic"
        assert rep.J == pytest.approx(0.125, abs=1e-12)
