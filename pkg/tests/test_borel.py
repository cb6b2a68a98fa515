"""Cutoff construction, sup estimates, and Taylor-data certification."""

import math

import numpy as np
import pytest

from sdewitt import borel as BO
from sdewitt.errors import ConfigError


def test_cutoff_plateau_and_support():
    chi = BO.build_cutoff()
    assert chi(0.4) == 1.0
    assert chi(-0.5) == 1.0
    assert chi(1.2) == 0.0
    assert chi(-3.0) == 0.0
    assert 0.0 < chi(0.75) < 1.0
    assert chi(0.75) == pytest.approx(0.5)  # symmetry point of the blend


def test_cutoff_smooth_monotone_shoulder():
    chi = BO.build_cutoff()
    ts = np.linspace(0.5, 1.0, 1000)
    vals = chi(ts)
    assert np.all(np.diff(vals) <= 1e-12)
    assert vals[0] == pytest.approx(1.0)
    assert vals[-1] == pytest.approx(0.0, abs=1e-12)


def test_cutoff_exact_on_scale_boundaries():
    # |λ| < λ_n/2 keeps the n-th term untouched; |λ| > λ_n kills it
    chi = BO.build_cutoff()
    assert chi(0.499999) == 1.0
    assert chi(1.000001) == 0.0


def test_sup_constant():
    ax = np.linspace(0, 1, 51)
    vals = np.ones_like(ax)
    # safety factor 1.25 on the exact sup 1
    assert BO.estimate_sup(vals, [ax[1] - ax[0]], 0) == pytest.approx(1.25)


def test_sup_sine_first_order():
    ax = np.linspace(0, 2 * np.pi, 401)
    est = BO.estimate_sup(np.sin(ax), [ax[1] - ax[0]], 1)
    assert est == pytest.approx(1.25, abs=2e-3)


def test_sup_exponential_second_order():
    ax = np.linspace(0, 1, 401)
    est = BO.estimate_sup(np.exp(2 * ax), [ax[1] - ax[0]], 2)
    # analytic sup of |∂² e^{2x}| on [0,1] is 4e² ≈ 29.556
    assert est / 1.25 == pytest.approx(4 * np.e ** 2, rel=2e-2)


def test_sup_requires_resolution():
    ax = np.linspace(0, 1, 4)
    with pytest.raises(ConfigError):
        BO.estimate_sup(np.ones_like(ax), [ax[1] - ax[0]], 3)


@pytest.fixture(scope="module")
def factorial_builder():
    return BO.BorelBuilder(
        [(lambda x, n=n: math.factorial(n) * np.ones_like(x))
         for n in range(8)], [(0.0, 1.0)], grid_n=41)


def test_scale_definition(factorial_builder):
    b = factorial_builder
    for n in range(b.n_terms):
        assert b.lam[n] == pytest.approx(min(1.0 / (n + 1), 1.0 / b.L[n]))
    # factorial growth shrinks the scales
    assert b.lam[7] < 1e-3


def test_sum_zero_coefficients():
    b = BO.BorelBuilder([lambda x: np.zeros_like(x) for _ in range(4)],
                        [(0.0, 1.0)], grid_n=21)
    assert b.sum_at(b.axes[0][5], 0.3) == 0.0


def test_sum_at_lambda_zero_is_h0(factorial_builder):
    x0 = factorial_builder.axes[0][10]
    assert factorial_builder.sum_at(x0, 0.0) == pytest.approx(1.0)


def test_sum_matches_direct_summation():
    n_terms = 24
    b = BO.BorelBuilder([(lambda x, n=n: np.ones_like(x))
                         for n in range(n_terms)], [(0.0, 1.0)], grid_n=64)
    x0 = b.axes[0][3]
    lam = 0.05
    chi = BO.build_cutoff()
    direct = sum((1j ** n) * chi(lam / b.lam[n]) * lam ** n
                 for n in range(n_terms))
    assert b.sum_at(x0, lam) == pytest.approx(direct)
    # for fixed λ only finitely many cutoffs survive
    surviving = [n for n in range(n_terms) if chi(lam / b.lam[n]) > 0]
    assert max(surviving) < n_terms - 1


def test_taylor_match_finite_for_factorial_growth(factorial_builder):
    b = factorial_builder
    x0 = b.axes[0][10]
    defect = b.taylor_match_check(x0, 3, [0.001, 0.002, 0.005, 0.01, 0.02])
    assert np.isfinite(defect)


def test_taylor_match_zero_for_single_term():
    b = BO.BorelBuilder([lambda x: 2.5 * np.ones_like(x),
                         lambda x: np.zeros_like(x),
                         lambda x: np.zeros_like(x)], [(0.0, 1.0)],
                        grid_n=21)
    defect = b.taylor_match_check(b.axes[0][4], 1, [0.01, 0.05])
    assert defect == pytest.approx(0.0, abs=1e-12)


def test_taylor_match_requires_valid_lambda_window(factorial_builder):
    with pytest.raises(ConfigError):
        factorial_builder.taylor_match_check(
            factorial_builder.axes[0][10], 3, [0.9])


def test_lambda_derivatives_recover_taylor_data():
    b = BO.BorelBuilder([(lambda x, n=n: np.cos((n + 1) * x) / 4.0 ** n)
                         for n in range(6)], [(0.0, 1.0)], grid_n=81)
    x0 = b.axes[0][20]
    ders = b.lambda_derivatives_at_zero(x0, 3)
    for n, d in enumerate(ders):
        expect = (1j ** n) * math.factorial(n) * np.cos((n + 1) * x0) / 4 ** n
        assert abs(d - expect) < 1e-6


def test_off_grid_point_rejected(factorial_builder):
    with pytest.raises(ConfigError):
        factorial_builder.sum_at(0.012345, 0.1)
