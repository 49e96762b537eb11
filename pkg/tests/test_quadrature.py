import math

import numpy as np
import pytest

from spikecap.errors import QuadratureError
from spikecap.quadrature import GAUSS_W, KRONROD_W, NODES, integrate


class TestRule:
    def test_weights_sum_to_two(self):
        assert KRONROD_W.sum() == pytest.approx(2.0, abs=1e-15)
        assert GAUSS_W.sum() == pytest.approx(2.0, abs=1e-15)

    def test_exact_polynomial_degree(self):
        # Kronrod 15 is exact to degree 22, Gauss 7 to degree 13
        for deg in (0, 5, 13, 22):
            exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
            assert np.dot(KRONROD_W, NODES ** deg) == pytest.approx(exact, abs=1e-14)
        assert np.dot(GAUSS_W, NODES ** 13) == pytest.approx(0.0, abs=1e-14)
        assert np.dot(GAUSS_W, NODES ** 12) == pytest.approx(2 / 13, abs=1e-14)


class TestIntegrate:
    def test_vector_integrand(self):
        f = lambda s: np.stack([np.exp(-s), np.sin(s), 1 / (1 + s * s)], axis=1)
        vals, err = integrate(f, 0.0, 5.0, tol=1e-13)
        exact = [1 - math.exp(-5), 1 - math.cos(5), math.atan(5)]
        assert vals == pytest.approx(exact, abs=1e-13)
        assert err < 1e-12

    def test_log_gamma_density_moments(self):
        # s = log(t/theta) with t ~ Gamma(k, theta): E[e^s] = k
        k = 3.0
        f = lambda s: np.stack([np.exp(k * s - np.exp(s) - math.lgamma(k)),
                                np.exp((k + 1) * s - np.exp(s) - math.lgamma(k))], axis=1)
        vals, _ = integrate(f, -12.0, 4.5, tol=1e-12)
        assert vals == pytest.approx([1.0, k], abs=1e-10)

    def test_peaked_integrand_refines(self):
        f = lambda s: (1e-3 / (s * s + 1e-6))[:, None]
        vals, _ = integrate(f, -1.0, 1.0, tol=1e-10)
        assert vals[0] == pytest.approx(2 * math.atan(1e3), abs=1e-9)

    def test_budget_exhausted(self):
        f = lambda s: np.sign(s - 0.3141)[:, None]
        with pytest.raises(QuadratureError) as info:
            integrate(f, 0.0, 1.0, tol=1e-300, max_intervals=200)
        assert info.value.achieved > 0
