import numpy as np
import pytest
import scipy.special

from oneshot import bessel_y0
from oneshot.bessel import EULER_GAMMA


def y0_series_oracle(x, terms=64):
    """Direct 64-term summation of the ascending series with the log term."""
    q = 0.25 * x * x
    j0 = 0.0
    aux = 0.0
    term = 1.0
    harmonic = 0.0
    j0 = 1.0
    for m in range(1, terms):
        term *= -q / (m * m)
        harmonic += 1.0 / m
        j0 += term
        aux -= harmonic * term
    return (2.0 / np.pi) * ((np.log(0.5 * x) + EULER_GAMMA) * j0 + aux)


class TestBesselY0:
    def test_small_argument_log_asymptote(self):
        x = 1e-4
        leading = (2.0 / np.pi) * (np.log(0.5 * x) + EULER_GAMMA)
        assert abs(bessel_y0(x) - leading) <= 1e-3 * abs(leading)

    def test_first_zero_bracketed(self):
        # the first zero sits near 0.8936; locate it by bisection and check
        # the independent series summation agrees on the sign structure
        lo, hi = 0.89, 0.90
        assert bessel_y0(lo) * bessel_y0(hi) < 0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if bessel_y0(lo) * bessel_y0(mid) <= 0:
                hi = mid
            else:
                lo = mid
        zero = 0.5 * (lo + hi)
        assert abs(zero - 0.8936) < 1e-3
        assert abs(y0_series_oracle(zero)) < 1e-10

    def test_series_oracle_on_series_branch(self):
        xs = np.linspace(0.05, 8.0, 400)
        ours = bessel_y0(xs)
        oracle = np.array([y0_series_oracle(float(x)) for x in xs])
        assert np.max(np.abs(ours - oracle)) <= 1e-11

    def test_large_argument_asymptote(self):
        x = 10.0
        approx = np.sqrt(2.0 / (np.pi * x)) * np.sin(x - np.pi / 4)
        assert abs(bessel_y0(x) - approx) <= 2e-2

    def test_against_scipy_across_domain(self):
        xs = np.concatenate([np.linspace(1e-3, 8.0, 4001),
                             np.linspace(8.0, 100.0, 4001)])
        err = np.abs(bessel_y0(xs) - scipy.special.y0(xs))
        assert float(err.max()) <= 1e-8

    def test_scalar_and_shape(self):
        assert isinstance(bessel_y0(1.0), float)
        assert bessel_y0(np.array([1.0, 2.0])).shape == (2,)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            bessel_y0(0.0)
        with pytest.raises(ValueError):
            bessel_y0(-1.0)
        with pytest.raises(ValueError):
            bessel_y0(np.array([1.0, -2.0]))
