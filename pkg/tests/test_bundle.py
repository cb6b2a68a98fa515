"""Fiber form, gauge validation, and the modified parallel transport."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdewitt import bundle as BU
from sdewitt import geodesic as GE
from sdewitt import geometry as G
from sdewitt import hadamard as HA
from sdewitt.errors import ConfigError

FLAT2 = G.MetricField(2, [["1", "0"], ["0", "1"]])
SPHERE = G.MetricField(2, [["1", "0"], ["0", "sin(x0)^2"]])
LINE = G.MetricField(1, [["1"]])
for _m, _pts in ((FLAT2, [np.zeros(2)]), (SPHERE, [np.array([1.0, 0.3])]),
                 (LINE, [np.array([0.2])])):
    _m.validate(_pts)

FORM_I = BU.FiberForm(np.eye(2))
FORM_IND = BU.FiberForm(np.diag([1.0, -1.0]))

A_CURVED = [
    [[{"re": "0", "im": "0.4 * sin(x0)"}, {"re": "0.3", "im": "0.1 * x1"}],
     [{"re": "-0.3", "im": "0.1 * x1"}, {"re": "0", "im": "-0.2"}]],
    [[{"re": "0", "im": "0.2 * x1"}, {"re": "-0.1", "im": "0.25 * cos(x0)"}],
     [{"re": "0.1", "im": "0.25 * cos(x0)"}, {"re": "0", "im": "0.15"}]],
]
B_CURVED = [[{"re": "1.0", "im": "0"}, {"re": "0.2 * cos(x1)", "im": "0.1"}],
            [{"re": "0.2 * cos(x1)", "im": "-0.1"}, {"re": "-0.5", "im": "0"}]]


def test_adjoint_identity_form_is_conjugate_transpose():
    M = np.array([[1 + 2j, 3], [4j, -1]], dtype=complex)
    assert np.allclose(BU.adjoint(M, FORM_I), M.conj().T)


def test_adjoint_indefinite_example():
    M = np.array([[0, 1], [0, 0]], dtype=complex)
    out = BU.adjoint(M, FORM_IND)
    assert np.allclose(out, [[0, 0], [-1, 0]])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_adjoint_involution(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    for form in (FORM_I, FORM_IND):
        assert np.allclose(BU.adjoint(BU.adjoint(M, form), form), M)


def test_form_validation():
    with pytest.raises(ConfigError):
        BU.FiberForm(np.array([[0, 1], [0, 0]]))   # not hermitian
    with pytest.raises(ConfigError):
        BU.FiberForm(np.zeros((2, 2)))             # degenerate


def test_gauge_validation_rejects_bad_A():
    bad_A = [[[{"re": "1", "im": "0"}]], [[{"re": "0", "im": "0"}]]]
    B = [[{"re": "0", "im": "0"}]]
    g = BU.GaugeFields(2, 1, bad_A, B)
    with pytest.raises(ConfigError):
        g.validate([np.zeros(2)])


def test_gauge_validation_rejects_bad_B():
    zero = [[{"re": "0", "im": "0"}]]
    g = BU.GaugeFields(2, 1, [zero, zero], [[{"re": "0", "im": "1"}]])
    with pytest.raises(ConfigError):
        g.validate([np.zeros(2)])


def test_gauge_validation_with_indefinite_form():
    gauge = BU.GaugeFields(2, 2, A_CURVED, B_CURVED, form=FORM_I)
    gauge.validate([np.array([0.3, 0.4]), np.array([1.2, 0.9])], tol=1e-10)


def test_transport_zero_gauge_identity():
    gauge = BU.GaugeFields.zero(2, 2)
    sol = GE.shoot_bvp(SPHERE, [1.0, 0.2], [1.4, 1.1], steps=100)
    tr = BU.parallel_transport(sol, gauge)
    assert np.abs(tr.H - np.eye(2)).max() < 1e-12


def test_transport_constant_gauge_closed_form():
    # d = 1, k = 1, A = i, Δx = π: ordered exponential collapses to e^{-iπ}
    gauge = BU.GaugeFields(1, 1, [[[{"re": "0", "im": "1"}]]],
                           [[{"re": "0", "im": "0"}]])
    gauge.validate([np.array([0.1])])
    sol = GE.integrate_flow(LINE, [0.0], [np.pi], 200)
    tr = BU.parallel_transport(sol, gauge)
    assert abs(tr.H[0, 0] + 1.0) < 1e-8
    assert tr.product_defect() < 1e-9


def test_transport_flat_constant_matrix_exponential():
    A0 = [[{"re": "0", "im": "0.4"}, {"re": "0.3", "im": "0.1"}],
          [{"re": "-0.3", "im": "0.1"}, {"re": "0", "im": "-0.2"}]]
    A1 = [[{"re": "0", "im": "0.2"}, {"re": "-0.1", "im": "0.25"}],
          [{"re": "0.1", "im": "0.25"}, {"re": "0", "im": "0.15"}]]
    Bz = [[{"re": "0", "im": "0"}, {"re": "0", "im": "0"}],
          [{"re": "0", "im": "0"}, {"re": "0", "im": "0"}]]
    gauge = BU.GaugeFields(2, 2, [A0, A1], Bz)
    gauge.validate([np.zeros(2)])
    x0 = np.array([0.1, -0.2])
    x1 = np.array([0.8, 0.5])
    sol = GE.shoot_bvp(FLAT2, x0, x1, steps=200)
    tr = BU.parallel_transport(sol, gauge)
    dx = x1 - x0
    Av = gauge.eval_A(x0)
    M = -(dx[0] * Av[0] + dx[1] * Av[1])
    from scipy.linalg import expm
    assert np.abs(tr.H - expm(M)).max() < 1e-9


def _random_scenarios(count, seed=11):
    rng = np.random.default_rng(seed)
    gauge = BU.GaugeFields(2, 2, A_CURVED, B_CURVED)
    out = []
    for _ in range(count):
        xp = np.array([0.9, 0.2]) + 0.6 * rng.random(2)
        x = xp + 0.3 + 0.5 * rng.random(2) * np.array([1, -1])
        out.append((SPHERE, gauge, x, xp))
    return out


def test_transport_inverse_and_adjoint_identities():
    for metric, gauge, x, xp in _random_scenarios(12):
        sol = GE.shoot_bvp(metric, xp, x, steps=200)
        tr = BU.parallel_transport(sol, gauge)
        assert tr.product_defect() < 1e-9
        assert np.abs(tr.H - BU.adjoint(tr.H_inv, FORM_I)).max() < 1e-9


def test_transport_unitarity_positive_form():
    for metric, gauge, x, xp in _random_scenarios(5, seed=3):
        sol = GE.shoot_bvp(metric, xp, x, steps=200)
        tr = BU.parallel_transport(sol, gauge)
        HdH = BU.adjoint(tr.H, FORM_I) @ tr.H
        assert np.abs(HdH - np.eye(2)).max() < 1e-9


def test_transport_coincidence_identity():
    gauge = BU.GaugeFields(2, 2, A_CURVED, B_CURVED)
    x0 = np.array([1.1, 0.4])
    sol = GE.integrate_flow(SPHERE, x0, [0.0, 0.0], 1)
    tr = BU.parallel_transport(sol, gauge)
    assert np.abs(tr.H - np.eye(2)).max() == 0.0


def test_transport_gradient_coincidence_is_minus_A():
    # ⌊(Δ^{1/2}H)_{;μ}⌋ = -A_μ, by extrapolation over shrinking separations
    gauge = BU.GaugeFields(2, 2, A_CURVED, B_CURVED)
    xp = np.array([1.1, 0.4])
    u = np.array([0.7, 0.4])
    u /= np.linalg.norm(u)
    grads = []
    for i in range(3):
        rho = 0.2 / 2 ** i
        _, gp = HA.transport_pair_data(SPHERE, gauge, xp, rho * u)
        _, gm = HA.transport_pair_data(SPHERE, gauge, xp, -rho * u)
        grads.append(0.5 * (gp + gm))   # direction average kills odd orders
    limit = HA.coincidence_extrapolate(grads, power=2)
    Av = gauge.eval_A(xp)
    assert np.abs(limit + Av).max() < 1e-6
