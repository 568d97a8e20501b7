import math

import numpy as np
import pytest
from scipy import integrate

from gramediate.special import chisq_sf, gammainc_lower, gammainc_upper


def _sf_by_quadrature(x, k):
    # independent route: integrate the chi-square density from x to infinity
    def pdf(t):
        return math.exp((k / 2 - 1) * math.log(t) - t / 2 - (k / 2) * math.log(2) - math.lgamma(k / 2))

    if x == 0:
        return 1.0
    val, _ = integrate.quad(pdf, x, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)
    return val


GRID = [(x, k) for k in (1, 2, 3, 6, 18, 24, 30, 39, 65, 68) for x in (0.0, 0.3, 1.0, 4.04, 8.66, 18.79, 30.0, 67.11, 120.0)]


@pytest.mark.parametrize("x,k", GRID)
def test_matches_quadrature_oracle(x, k):
    assert abs(chisq_sf(x, k) - _sf_by_quadrature(x, k)) <= 1e-6


def test_zero_gives_one():
    for k in (1, 2, 5, 40):
        assert chisq_sf(0.0, k) == 1.0


def test_monotone_decreasing():
    xs = np.linspace(0, 150, 600)
    for k in (1, 3, 24, 68):
        vals = [chisq_sf(x, k) for x in xs]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_reference_values():
    assert chisq_sf(18.79, 24) == pytest.approx(0.763, abs=1e-3)
    assert chisq_sf(8.66, 3) == pytest.approx(0.034, abs=1e-3)


def test_closed_forms():
    # df = 2: sf = exp(-x/2); df = 1: sf = erfc(sqrt(x/2))
    for x in (0.1, 1.0, 5.0, 20.0):
        assert chisq_sf(x, 2) == pytest.approx(math.exp(-x / 2), abs=1e-12)
        assert chisq_sf(x, 1) == pytest.approx(math.erfc(math.sqrt(x / 2)), abs=1e-12)


def test_lower_plus_upper_is_one():
    for a in (0.5, 3.0, 12.0):
        for x in (0.2, a, a + 1.5, 4 * a):
            assert gammainc_lower(a, x) + gammainc_upper(a, x) == pytest.approx(1.0, abs=1e-13)


def test_errors():
    with pytest.raises(ValueError):
        chisq_sf(1.0, 0)
    with pytest.raises(ValueError):
        chisq_sf(-1.0, 3)
