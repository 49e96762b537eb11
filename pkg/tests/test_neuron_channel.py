import math

import numpy as np
import pytest
from scipy import integrate, stats

from spikecap.errors import DomainError, ValidationError
from spikecap.neuron_channel import (
    CountChannelConfig,
    GammaChannel,
    asymptotic_count_mean,
    count_mean,
    count_pmf,
    count_tail,
    isi_density,
    isi_log2_density,
    isi_log_density,
    r_max_for,
    simulate_counts,
    truncated_count_pmf,
)

# renewal count law, mpmath at 40 digits
COUNT_K3_X5 = [0.12465201948308114, 0.49130863534998198, 0.31594571044508832,
               0.062640542808839199, 0.0052268382368326038, 0.00022083733790680685,
               5.3352457653497989e-6, 8.0285251298793779e-8]
COUNT_K05_X1 = [0.15729920705028513, 0.21058023412115719, 0.20452726329943751,
                0.16335217787200481, 0.11338615374172499, 0.070553566843996168]
MEAN_K3_X5 = 1.3331658042385503
MEAN_K05_X1 = 2.4716049381348697


def cfg_for(kappa, x, theta=0.01):
    """Count config whose window gives delta/theta = x at the given theta."""
    base = GammaChannel(kappa, kappa * theta / 2, kappa * theta * 2)
    return CountChannelConfig(base, x * theta)


class TestGammaChannel:
    def test_omega(self):
        ch = GammaChannel(3, 0.003, 0.03)
        assert ch.theta_min == pytest.approx(0.001)
        assert ch.theta_max == pytest.approx(0.01)

    @pytest.mark.parametrize("a0,b0", [(0.003, 0.003), (0.03, 0.003), (0.0, 0.1), (-1, 1)])
    def test_degenerate(self, a0, b0):
        with pytest.raises(ValidationError):
            GammaChannel(1, a0, b0)

    def test_kappa_positive(self):
        with pytest.raises(ValidationError, match="kappa"):
            GammaChannel(0, 0.001, 0.01)

    def test_theta_outside(self):
        with pytest.raises(DomainError, match="Omega"):
            GammaChannel(1, 0.001, 0.01).check_theta(0.02)

    def test_edge_roundoff_snaps(self):
        ch = GammaChannel(3, 0.003, 0.03)
        assert ch.check_theta(0.01 * (1 + 1e-15)) == ch.theta_max

    def test_count_config_validation(self):
        base = GammaChannel(1, 0.001, 0.01)
        with pytest.raises(ValidationError, match="delta"):
            CountChannelConfig(base, 0.0)
        with pytest.raises(ValidationError, match="tail_tol"):
            CountChannelConfig(base, 0.1, tail_tol=1e-3)

    def test_round_trip_dict(self):
        cfg = CountChannelConfig(GammaChannel(2, 0.003, 0.03), 0.1, 1e-10)
        assert CountChannelConfig.from_dict(cfg.to_dict()) == cfg


class TestIsiDensity:
    def test_exponential_at_origin(self):
        ch = GammaChannel(1, 0.5, 2.0)
        assert isi_density(1e-12, 1.0, ch) == pytest.approx(1.0, rel=1e-11)

    def test_kappa2_at_one(self):
        ch = GammaChannel(2, 1.0, 4.0)
        assert isi_density(1.0, 1.0, ch) == pytest.approx(math.exp(-1), rel=1e-15)

    def test_matches_scipy(self):
        ch = GammaChannel(2.5, 0.01, 0.1)
        t = np.linspace(0.001, 0.2, 7)
        assert isi_log_density(t, 0.02, ch) == pytest.approx(
            stats.gamma.logpdf(t, 2.5, scale=0.02), rel=1e-13)

    def test_base2(self):
        ch = GammaChannel(3, 0.003, 0.03)
        assert isi_log2_density(0.004, 0.002, ch) == pytest.approx(
            isi_log_density(0.004, 0.002, ch) / math.log(2))

    @pytest.mark.parametrize("kappa", [0.5, 1, 2, 3, 10])
    @pytest.mark.parametrize("theta", [0.002, 0.01])
    def test_normalized(self, kappa, theta):
        ch = GammaChannel(kappa, kappa * 0.001, kappa * 0.1)
        f = lambda t: isi_density(t, theta, ch)
        val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400,
                                points=None) if kappa >= 1 else _split_quad(f, theta)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_mean(self):
        ch = GammaChannel(3, 0.003, 0.03)
        val, _ = integrate.quad(lambda t: t * isi_density(t, 0.01, ch), 0, np.inf, epsabs=1e-14)
        assert val == pytest.approx(0.03, abs=1e-8)

    def test_rejects_nonpositive_t(self):
        with pytest.raises(DomainError):
            isi_log_density(0.0, 0.01, GammaChannel(1, 0.001, 0.1))

    def test_sampled_mean(self):
        rng = np.random.default_rng(7)
        x = rng.gamma(3, 0.005, size=1_000_000)
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - 0.015) < 3 * se


def _split_quad(f, theta):
    # integrable singularity at 0 for kappa < 1
    a, _ = integrate.quad(f, 0, theta, epsabs=1e-13, limit=400)
    b, _ = integrate.quad(f, theta, np.inf, epsabs=1e-13, limit=400)
    return a + b, None


class TestCountPmf:
    def test_renewal_oracle_k3(self):
        cfg = cfg_for(3, 5.0)
        assert count_pmf(np.arange(8), 0.01, cfg) == pytest.approx(COUNT_K3_X5, rel=1e-12, abs=1e-17)

    def test_renewal_oracle_noninteger_kappa(self):
        cfg = cfg_for(0.5, 1.0)
        assert count_pmf(np.arange(6), 0.01, cfg) == pytest.approx(COUNT_K05_X1, rel=1e-12)

    @pytest.mark.parametrize("x", [0.5, 2.0, 10.0])
    def test_poisson(self, x):
        cfg = cfg_for(1, x)
        r = np.arange(51)
        assert np.max(np.abs(count_pmf(r, 0.01, cfg) - stats.poisson.pmf(r, x))) < 1e-10

    def test_zero_count(self):
        cfg = cfg_for(2.5, 3.0)
        from scipy.special import gammaincc
        assert count_pmf(0, 0.01, cfg) == pytest.approx(gammaincc(2.5, 3.0), rel=1e-14)

    @pytest.mark.parametrize("kappa,x", [(1, 2), (3, 5), (0.5, 1)])
    def test_normalization(self, kappa, x):
        cfg = cfg_for(kappa, x)
        tp = truncated_count_pmf(0.01, cfg)
        total = math.fsum(tp.probs) + float(count_tail(tp.r_max, x, kappa))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_rejects_bad_counts(self):
        cfg = cfg_for(1, 2)
        with pytest.raises(DomainError):
            count_pmf(-1, 0.01, cfg)
        with pytest.raises(DomainError):
            count_pmf(1.5, 0.01, cfg)

    def test_far_tail_is_not_cancelled(self):
        # deep upper tail: direct lower-P differences would return 0 or noise
        cfg = cfg_for(3, 5.0)
        p = count_pmf(30, 0.01, cfg)
        assert 0 < p < 1e-20


class TestTruncation:
    def test_poisson_truncation(self):
        tp = truncated_count_pmf(0.01, cfg_for(1, 2.0))
        assert tp.probs[0] == pytest.approx(math.exp(-2), rel=1e-15)
        assert 15 <= tp.r_max <= 25
        assert tp.deficit <= 1e-12
        # smallest such index
        assert stats.poisson.sf(tp.r_max - 1, 2.0) > 1e-12

    def test_short_window(self):
        tp = truncated_count_pmf(0.01, cfg_for(1, 0.01))
        assert tp.probs[0] > 0.99 and tp.r_max <= 6

    def test_tail_tol_monotone(self):
        rs = [r_max_for(7.0, 2.0, tol) for tol in (1e-13, 1e-11, 1e-9, 1e-7)]
        assert rs == sorted(rs, reverse=True)

    @pytest.mark.parametrize("kappa,x", [(1, 2), (3, 5), (0.5, 1), (2, 80)])
    def test_deficit_bound(self, kappa, x):
        cfg = cfg_for(kappa, x)
        assert truncated_count_pmf(0.01, cfg).deficit <= cfg.tail_tol

    def test_cap(self):
        base = GammaChannel(1, 1e-6, 1e-3)
        cfg = CountChannelConfig(base, 1.0, r_cap=100)
        with pytest.raises(DomainError, match="theta=.*delta="):
            truncated_count_pmf(1e-5, cfg)


class TestCountMean:
    def test_poisson_mean(self):
        assert count_mean(0.01, cfg_for(1, 2.0)) == pytest.approx(2.0, abs=1e-10)

    def test_renewal_oracle(self):
        assert count_mean(0.01, cfg_for(3, 5.0)) == pytest.approx(MEAN_K3_X5, abs=1e-10)
        assert count_mean(0.01, cfg_for(0.5, 1.0)) == pytest.approx(MEAN_K05_X1, abs=1e-10)

    def test_default_window_gap(self):
        cfg = CountChannelConfig(GammaChannel(3, 0.003, 0.03), 0.1)
        exact, asym = count_mean(0.01, cfg), asymptotic_count_mean(0.01, cfg)
        assert asym == pytest.approx(10 / 3)
        assert abs(exact - asym) / asym < 0.15

    def test_long_window_limit(self):
        ratios = []
        for x in (10, 100, 1000):
            cfg = cfg_for(3, x)
            ratios.append(count_mean(0.01, cfg) / asymptotic_count_mean(0.01, cfg))
        gaps = [abs(1 - r) for r in ratios]
        assert gaps == sorted(gaps, reverse=True) and gaps[-1] < 2e-3


class TestSimulation:
    def test_seeded_determinism(self):
        a = simulate_counts(0.01, 3, 0.05, 1000, seed=5)
        b = simulate_counts(0.01, 3, 0.05, 1000, seed=5)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("kappa,x", [(1, 2), (3, 5)])
    def test_matches_pmf(self, kappa, x):
        n = 200_000
        counts = simulate_counts(0.01, kappa, 0.01 * x, n, seed=11)
        tp = truncated_count_pmf(0.01, cfg_for(kappa, x))
        freq = np.bincount(counts, minlength=tp.r_max + 1)[: tp.r_max + 1] / n
        se = np.sqrt(tp.probs * (1 - tp.probs) / n)
        live = tp.probs > 1e-4
        assert np.all(np.abs(freq - tp.probs)[live] <= 4 * se[live])
