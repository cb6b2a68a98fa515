"""World function and van Vleck determinant."""

import numpy as np
import pytest

from sdewitt import geodesic as GE
from sdewitt import geometry as G
from sdewitt import synge as SY
from sdewitt.errors import SignConventionError

FLAT = G.MetricField(2, [["1", "0"], ["0", "1"]])
MINK = G.MetricField(2, [["-1", "0"], ["0", "1"]])
SPHERE = G.MetricField(2, [["1", "0"], ["0", "sin(x0)^2"]])
HYP = G.MetricField(2, [["1", "0"], ["0", "sinh(x0)^2"]])
for _m in (FLAT, MINK, SPHERE, HYP):
    _m.validate([np.array([0.9, 0.2]), np.array([1.7, 1.1])])


def test_flat_world_function():
    sol = GE.shoot_bvp(FLAT, [0, 0], [1, 2])
    wf = SY.world_function(sol)
    assert wf.sigma == pytest.approx(2.5)
    assert np.allclose(wf.grad_x, [1, 2])
    assert np.allclose(wf.grad_xp, [-1, -2])
    assert np.allclose(wf.mixed, -np.eye(2), atol=1e-12)
    vv = SY.van_vleck(FLAT, wf, [1, 2], [0, 0])
    assert vv.delta == pytest.approx(1.0)
    assert vv.delta_sqrt == pytest.approx(1.0)


def test_minkowski_world_function_and_sign_rule():
    sol = GE.shoot_bvp(MINK, [0, 0], [1, 0])
    wf = SY.world_function(sol)
    assert wf.sigma == pytest.approx(-0.5)
    assert np.allclose(wf.mixed, np.diag([1.0, -1.0]), atol=1e-12)
    vv = SY.van_vleck(MINK, wf, [1, 0], [0, 0])
    # d = 2, sign g = 0: sign of Δ is (-1)^1
    assert vv.delta == pytest.approx(-1.0, abs=1e-9)
    assert vv.delta_sqrt == pytest.approx(1.0, abs=1e-9)
    assert SY.vvm_sign(2, 0) == -1
    assert SY.vvm_sign(2, 2) == 1
    assert SY.vvm_sign(4, 2) == -1


def test_sphere_quarter_arc():
    sol = GE.shoot_bvp(SPHERE, [np.pi / 2, 0], [np.pi / 2, np.pi / 2],
                       steps=200)
    wf = SY.world_function(sol)
    assert wf.sigma == pytest.approx(np.pi ** 2 / 8, abs=1e-10)
    vv = SY.van_vleck(SPHERE, wf, [np.pi / 2, np.pi / 2], [np.pi / 2, 0])
    rho = np.pi / 2
    assert vv.delta == pytest.approx(rho / np.sin(rho), abs=1e-8)


def _constant_curvature_delta(metric, x, xp, sinlike):
    sol = GE.shoot_bvp(metric, xp, x, steps=200)
    wf = SY.world_function(sol)
    vv = SY.van_vleck(metric, wf, x, xp)
    rho = np.sqrt(2 * abs(wf.sigma))
    return vv.delta, rho / sinlike(rho)


def test_sphere_delta_generic_pair():
    delta, expect = _constant_curvature_delta(
        SPHERE, [1.4, 1.1], [1.0, 0.2], np.sin)
    assert delta == pytest.approx(expect, abs=1e-8)


def test_hyperbolic_delta():
    delta, expect = _constant_curvature_delta(
        HYP, [1.0, 1.0], [1.0, 0.0], np.sinh)
    assert delta == pytest.approx(expect, abs=1e-8)


def test_jacobi_closed_form_cross_check():
    # independent route: Δ from the propagator velocity block directly
    sol = GE.shoot_bvp(SPHERE, [1.0, 0.2], [1.4, 1.1], steps=200)
    wf = SY.world_function(sol)
    d = 2
    B = sol.propagator[-1][:d, d:]
    g_start = SPHERE.eval_base(sol.x_start).real
    g_end = SPHERE.eval_base(sol.x_end).real
    E = B @ g_start
    delta_indep = np.linalg.det(g_start) / (
        np.linalg.det(E)
        * np.sqrt(abs(np.linalg.det(g_start)) * abs(np.linalg.det(g_end))))
    vv = SY.van_vleck(SPHERE, wf, sol.x_end, sol.x_start)
    assert vv.delta == pytest.approx(delta_indep, rel=1e-9)


def test_delta_symmetry():
    for metric in (SPHERE, HYP):
        fwd = GE.shoot_bvp(metric, [1.0, 0.2], [1.4, 1.1], steps=200)
        rev = GE.shoot_bvp(metric, [1.4, 1.1], [1.0, 0.2],
                           v_guess=-fwd.velocity(-1), steps=200)
        d_f = SY.van_vleck(metric, SY.world_function(fwd),
                           [1.4, 1.1], [1.0, 0.2]).delta
        d_r = SY.van_vleck(metric, SY.world_function(rev),
                           [1.0, 0.2], [1.4, 1.1]).delta
        assert abs(d_f - d_r) < 1e-7


def test_coincidence_limits_by_extrapolation():
    xp = np.array([1.1, 0.4])
    u = np.array([0.6, 0.5])
    u /= np.linalg.norm(u)
    vals = []
    grads = []
    for i in range(3):
        rho = 0.2 / 2 ** i
        sol = GE.integrate_flow(SPHERE, xp, rho * u, 200)
        wf = SY.world_function(sol)
        vv = SY.van_vleck(SPHERE, wf, sol.x_end, xp)
        vals.append(vv.delta_sqrt)
        # forward difference of Δ^{1/2} along the ray, at fixed x'
        sol2 = GE.integrate_flow(SPHERE, xp, (rho + 1e-5) * u, 200)
        wf2 = SY.world_function(sol2)
        vv2 = SY.van_vleck(SPHERE, wf2, sol2.x_end, xp)
        grads.append((vv2.delta_sqrt - vv.delta_sqrt) / 1e-5)
    # Δ^{1/2} is even in ρ on a constant-curvature space
    from sdewitt.hadamard import coincidence_extrapolate
    extrap = coincidence_extrapolate(vals, power=2)
    assert extrap == pytest.approx(1.0, abs=1e-6)
    gextrap = (8 * grads[2] - 6 * grads[1] + grads[0]) / 3
    assert abs(gextrap) < 1e-4


def test_sign_violation_detected():
    sol = GE.shoot_bvp(MINK, [0, 0], [1, 0])
    wf = SY.world_function(sol)
    wf.mixed = wf.mixed.copy()
    wf.mixed[0] *= -1.0  # corrupt the data (flips the determinant sign)
    with pytest.raises(SignConventionError):
        SY.van_vleck(MINK, wf, [1, 0], [0, 0])
