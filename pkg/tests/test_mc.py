import math

import numpy as np
import pytest

import lfnoise as lf
from lfnoise.dist import AtomicDistribution, DensityNoise, point_mass
from lfnoise.errors import InvalidSampleCount, ParseError
from lfnoise.mc import estimates_from_csv, estimates_to_csv, sample_noise


def two_bin_oracle(x_pairs, y_pairs, edge=0.0):
    """Analytic 2-bin value by enumeration: bins split at the given edge.

    Samples with S <= edge land left (mirrors searchsorted side='right').
    """
    left_w = left_x = right_w = right_x = 0.0
    for xv, xm in x_pairs:
        for yv, ym in y_pairs:
            w = xm * ym
            if xv + yv <= edge:
                left_w += w
                left_x += w * xv
            else:
                right_w += w
                right_x += w * xv
    mean = left_x + right_x
    return left_w * (left_x / left_w) ** 2 + right_w * (right_x / right_w) ** 2 - mean**2


class TestEstimateObjective:
    def test_matches_exact_within_three_se(self, bernoulli, pm_half):
        est = lf.estimate_objective(bernoulli, pm_half, 200_000, 64, seed=42)
        assert abs(est.J_hat - 0.125) <= 3.0 * est.std_error

    def test_point_mass_noise_recovers_var(self, bernoulli):
        est = lf.estimate_objective(bernoulli, point_mass(0.0), 50_000, 8, seed=3)
        assert abs(est.J_hat - 0.25) <= 3.0 * est.std_error + 1e-6

    def test_seed_determinism(self, bernoulli, pm_half):
        a = lf.estimate_objective(bernoulli, pm_half, 20_000, 32, seed=11)
        b = lf.estimate_objective(bernoulli, pm_half, 20_000, 32, seed=11)
        assert a == b

    def test_seed_sensitivity(self, bernoulli, pm_half):
        a = lf.estimate_objective(bernoulli, pm_half, 20_000, 32, seed=11)
        b = lf.estimate_objective(bernoulli, pm_half, 20_000, 32, seed=12)
        assert a.J_hat != b.J_hat

    def test_rejects_small_sample(self, bernoulli, pm_half):
        with pytest.raises(InvalidSampleCount):
            lf.estimate_objective(bernoulli, pm_half, 999, 8, seed=1)

    def test_rejects_single_bin(self, bernoulli, pm_half):
        with pytest.raises(ValueError):
            lf.estimate_objective(bernoulli, pm_half, 2_000, 1, seed=1)

    def test_density_noise_samplable(self, bernoulli):
        y = DensityNoise(((-0.2, 0.3, 0.5), (0.2, 0.3, 0.5)))
        est = lf.estimate_objective(bernoulli, y, 50_000, 64, seed=5)
        rep = lf.objective_density(bernoulli, y)
        assert est.J_hat <= rep.J + 3.0 * est.std_error

    def test_biased_low_battery(self, bernoulli, rademacher):
        cases = [
            (bernoulli, AtomicDistribution(((-0.5, 0.5), (0.5, 0.5)))),
            (bernoulli, point_mass(0.0)),
            (rademacher, AtomicDistribution(((-1.0, 0.5), (1.0, 0.5)))),
        ]
        for i, (x, y) in enumerate(cases):
            exact = lf.objective_atomic(x, y).J
            est = lf.estimate_objective(x, y, 100_000, 64, seed=100 + i)
            assert est.J_hat <= exact + 3.0 * est.std_error


class TestRefineBins:
    def test_non_decreasing_toward_exact(self, bernoulli, pm_half):
        ests = lf.refine_bins(bernoulli, pm_half, [4, 16, 64], 200_000, seed=21)
        for a, b in zip(ests, ests[1:]):
            noise = 3.0 * (a.std_error + b.std_error)
            assert b.J_hat >= a.J_hat - noise
        assert abs(ests[-1].J_hat - 0.125) <= 3.0 * ests[-1].std_error

    def test_two_bin_analytic_oracle(self, bernoulli, pm_half):
        oracle = two_bin_oracle(bernoulli.dist.atoms, pm_half.atoms)
        est = lf.refine_bins(bernoulli, pm_half, [2], 200_000, seed=33)[0]
        assert abs(est.J_hat - oracle) <= 3.0 * est.std_error + 1e-3

    def test_near_degenerate_signal_estimates_vanish(self):
        # variance -> 0 boundary: objective estimates collapse with it
        x = lf.SignalSpec(AtomicDistribution(((-1e-4, 0.5), (1e-4, 0.5))))
        est = lf.estimate_objective(x, point_mass(0.0), 10_000, 4, seed=2)
        assert abs(est.J_hat) <= 1e-6

    def test_rejects_non_increasing_schedule(self, bernoulli, pm_half):
        with pytest.raises(ValueError):
            lf.refine_bins(bernoulli, pm_half, [16, 16], 2_000, seed=1)
        with pytest.raises(ValueError):
            lf.refine_bins(bernoulli, pm_half, [], 2_000, seed=1)


class TestSampling:
    def test_atomic_frequencies(self, pm_half):
        rng = np.random.Generator(np.random.Philox(5))
        draws = sample_noise(pm_half, 100_000, rng)
        assert set(np.unique(draws)) == {-0.5, 0.5}
        assert abs((draws > 0).mean() - 0.5) <= 0.01

    def test_mixture_moments(self):
        y = DensityNoise(((-1.0, 0.5, 0.5), (1.0, 0.5, 0.5)))
        rng = np.random.Generator(np.random.Philox(6))
        draws = sample_noise(y, 200_000, rng)
        assert abs(draws.mean()) <= 0.02
        assert abs((draws**2).mean() - 1.25) <= 0.03


class TestCsv:
    def test_round_trip(self, bernoulli, pm_half):
        ests = lf.refine_bins(bernoulli, pm_half, [4, 16], 2_000, seed=9)
        text = estimates_to_csv(ests)
        assert text.splitlines()[0] == "n_samples,n_bins,seed,J_hat,std_error"
        assert estimates_from_csv(text) == ests

    def test_rejects_bad_header(self):
        with pytest.raises(ParseError):
            estimates_from_csv("a,b,c\n1,2,3\n")
