import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dicomp.rate import SymbolDistribution, fit_distribution, prob_continuous, rate_loss


def empirical_cross_entropy(symbols: np.ndarray, probs: np.ndarray) -> float:
    """Independent oracle: -sum_k (count_k / N) log2 p_k."""
    counts = np.bincount(symbols, minlength=len(probs))
    return float(-(counts / symbols.size * np.log2(probs)).sum())


class TestFitDistribution:
    def test_degenerate_histogram(self):
        dist = fit_distribution(torch.full((100,), 7, dtype=torch.int64), 6)
        assert dist.probs[7] > 0.999
        others = np.delete(dist.probs, 7)
        assert others.max() < 1e-5

    def test_uniform_symbols(self):
        dist = fit_distribution(torch.arange(64).repeat(10), 6)
        np.testing.assert_allclose(dist.probs, np.full(64, 1 / 64), rtol=1e-4)

    def test_sampling_oracle(self):
        rng = np.random.default_rng(3)
        truth = rng.dirichlet(np.full(64, 1.0))
        truth = np.maximum(truth, 1e-3)
        truth /= truth.sum()
        samples = rng.choice(64, size=100_000, p=truth)
        dist = fit_distribution(samples, 6)
        assert np.abs(dist.probs - truth).max() < 0.01

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_distribution(torch.empty(0, dtype=torch.int64), 6)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            fit_distribution(torch.tensor([64]), 6)

    def test_probs_sum_to_one_with_floor(self):
        dist = fit_distribution(torch.zeros(10, dtype=torch.int64), 6, eps=1e-6)
        assert abs(dist.probs.sum() - 1.0) < 1e-12
        # smoothing floor is eps / (1 + 2**Q * eps)
        assert dist.probs.min() == pytest.approx(1e-6 / (1 + 64e-6), rel=1e-9)

    def test_accepts_multiple_maps(self):
        maps = [torch.zeros(4, dtype=torch.int64), torch.ones(4, dtype=torch.int64)]
        dist = fit_distribution(maps, 2)
        assert dist.probs[0] == pytest.approx(0.5, abs=1e-4)


class TestSymbolDistribution:
    def test_rejects_zero_probability(self):
        probs = np.zeros(4)
        probs[0] = 1.0
        with pytest.raises(ValueError):
            SymbolDistribution(probs=probs)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            SymbolDistribution(probs=np.full(4, 0.3))

    def test_entropy_uniform(self):
        dist = SymbolDistribution(probs=np.full(64, 1 / 64))
        assert dist.entropy() == pytest.approx(6.0, abs=1e-12)


class TestProbContinuous:
    @pytest.fixture
    def dist(self):
        rng = np.random.default_rng(5)
        p = rng.dirichlet(np.full(64, 2.0))
        p = np.maximum(p, 1e-6)
        return SymbolDistribution(probs=p / p.sum())

    def test_integer_is_exact_bin_probability(self, dist):
        v = prob_continuous(torch.tensor(5.0, dtype=torch.float64), dist)
        assert float(v) == dist.probs[5]

    def test_midpoint_is_average(self, dist):
        v = prob_continuous(torch.tensor(5.5, dtype=torch.float64), dist)
        assert float(v) == pytest.approx((dist.probs[5] + dist.probs[6]) / 2, rel=1e-14)

    def test_derivative_matches_finite_differences(self, dist):
        x = torch.tensor(5.25, dtype=torch.float64, requires_grad=True)
        prob_continuous(x, dist).backward()
        analytic = float(x.grad)
        h = 1e-7
        numeric = (float(prob_continuous(torch.tensor(5.25 + h, dtype=torch.float64), dist))
                   - float(prob_continuous(torch.tensor(5.25 - h, dtype=torch.float64), dist))) / (2 * h)
        assert analytic == pytest.approx(dist.probs[6] - dist.probs[5], rel=1e-12)
        assert analytic == pytest.approx(numeric, rel=1e-6)

    def test_out_of_range_clamps_with_warning(self, dist):
        with pytest.warns(UserWarning, match="clamped"):
            v = prob_continuous(torch.tensor([-1.0, 70.0], dtype=torch.float64), dist)
        assert float(v[0]) == dist.probs[0]
        assert float(v[1]) == pytest.approx(dist.probs[63], rel=1e-12)


class TestRateLoss:
    def test_uniform_integer_inputs_cost_q_bits(self):
        dist = SymbolDistribution(probs=np.full(64, 1 / 64))
        x = torch.arange(64, dtype=torch.float64)
        assert float(rate_loss(x, dist)) == pytest.approx(6.0, abs=1e-12)

    def test_matches_shannon_entropy_of_own_distribution(self):
        rng = np.random.default_rng(11)
        symbols = rng.choice(16, size=5000, p=rng.dirichlet(np.full(16, 1.0)))
        dist = fit_distribution(symbols, 4, eps=1e-9)
        loss = float(rate_loss(torch.from_numpy(symbols).to(torch.float64), dist))
        oracle = empirical_cross_entropy(symbols, dist.probs)
        assert loss == pytest.approx(oracle, abs=1e-9)

    def test_certain_symbol_is_nearly_free(self):
        symbols = torch.full((500,), 13, dtype=torch.int64)
        dist = fit_distribution(symbols, 6)
        assert float(rate_loss(symbols.to(torch.float64), dist)) < 1e-3

    def test_vanishing_smoothing_approaches_shannon_entropy(self):
        rng = np.random.default_rng(17)
        symbols = rng.choice(32, size=10_000, p=rng.dirichlet(np.full(32, 0.7)))
        counts = np.bincount(symbols, minlength=32)
        freq = counts[counts > 0] / symbols.size
        shannon = float(-(freq * np.log2(freq)).sum())
        dist = fit_distribution(symbols, 5, eps=1e-12)
        loss = float(rate_loss(torch.from_numpy(symbols.astype(np.float64)), dist))
        assert loss == pytest.approx(shannon, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.full(8, 0.5)) + 1e-9
        dist = SymbolDistribution(probs=p / p.sum())
        x = torch.from_numpy(rng.uniform(0, 7, size=50))
        assert float(rate_loss(x, dist)) >= 0.0

    def test_upper_bound_on_fitted_distribution(self):
        rng = np.random.default_rng(23)
        symbols = rng.choice(64, size=20_000, p=rng.dirichlet(np.full(64, 0.2)))
        dist = fit_distribution(symbols, 6, eps=1e-6)
        loss = float(rate_loss(torch.from_numpy(symbols).to(torch.float64), dist))
        assert loss <= 6.0 + 1e-3

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(29)
        p = rng.dirichlet(np.full(64, 1.0)) + 1e-8
        dist = SymbolDistribution(probs=p / p.sum())
        # keep sample points away from the knots so central differences are valid
        base = rng.integers(0, 63, size=100) + rng.uniform(0.1, 0.9, size=100)
        x = torch.from_numpy(base).requires_grad_(True)
        rate_loss(x, dist).backward()
        h = 1e-6
        for i in rng.choice(100, size=20, replace=False):
            hi, lo = base.copy(), base.copy()
            hi[i] += h
            lo[i] -= h
            numeric = (float(rate_loss(torch.from_numpy(hi), dist))
                       - float(rate_loss(torch.from_numpy(lo), dist))) / (2 * h)
            assert float(x.grad[i]) == pytest.approx(numeric, rel=1e-4, abs=1e-12)
