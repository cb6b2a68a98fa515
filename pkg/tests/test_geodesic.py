"""Geodesic flow, shooting, and conjugate-point diagnostics."""

import numpy as np
import pytest

from sdewitt import geodesic as GE
from sdewitt import geometry as G
from sdewitt.errors import ConjugatePointError

FLAT = G.MetricField(2, [["1", "0"], ["0", "1"]])
MINK = G.MetricField(2, [["-1", "0"], ["0", "1"]])
SPHERE = G.MetricField(2, [["1", "0"], ["0", "sin(x0)^2"]])
for _m in (FLAT, MINK, SPHERE):
    _m.validate([np.array([0.9, 0.2]), np.array([1.7, 1.1])])


def test_flat_straight_line():
    sol = GE.integrate_flow(FLAT, [0, 0], [1, 2], 50)
    assert np.allclose(sol.x_end, [1, 2])
    assert np.allclose(sol.p[0], sol.p[-1])
    assert np.allclose(sol.propagator[-1][:2, 2:], np.eye(2))
    mid = len(sol.s) // 2
    assert np.allclose(sol.gamma[mid], [0.5, 1.0])


def test_minkowski_invariant_conserved():
    sol = GE.integrate_flow(MINK, [0, 0], [1, 0], 100)
    H = GE.hamiltonian_values(sol)
    assert H[0] == pytest.approx(-0.5)
    assert np.abs(H - H[0]).max() < 1e-12


def test_sphere_equator_great_circle():
    sol = GE.integrate_flow(SPHERE, [np.pi / 2, 0], [0, 1.0], 200)
    assert np.abs(sol.x_end - [np.pi / 2, 1.0]).max() < 1e-10


def test_hamiltonian_conservation_on_catalog():
    for metric, x0, v0 in ((SPHERE, [1.0, 0.2], [0.3, 0.7]),
                           (MINK, [0.1, -0.2], [0.8, 0.3]),
                           (FLAT, [0.0, 0.0], [1.0, 2.0])):
        sol = GE.integrate_flow(metric, x0, v0, 200)
        H = GE.hamiltonian_values(sol)
        assert np.abs(H - H[0]).max() <= 1e-9


def test_rk4_convergence_order():
    errs = []
    for steps in (50, 100):
        sol = GE.integrate_flow(SPHERE, [np.pi / 2, 0], [0.3, 0.7], steps)
        ref = GE.integrate_flow(SPHERE, [np.pi / 2, 0], [0.3, 0.7], 1600)
        errs.append(np.abs(sol.x_end - ref.x_end).max())
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.25)


def test_shoot_flat_one_step():
    sol = GE.shoot_bvp(FLAT, [0, 0], [1, 2])
    assert np.allclose(sol.v0, [1, 2])
    assert sol.bvp_residual < 1e-12


def test_shoot_sphere_quarter_equator():
    sol = GE.shoot_bvp(SPHERE, [np.pi / 2, 0], [np.pi / 2, np.pi / 2],
                       steps=200)
    assert np.abs(sol.v0 - [0, np.pi / 2]).max() < 1e-9
    g0 = SPHERE.eval_base(sol.x_start).real
    sigma = 0.5 * sol.v0 @ g0 @ sol.v0
    assert sigma == pytest.approx(0.5 * (np.pi / 2) ** 2, abs=1e-10)


def test_shoot_antipodal_raises():
    with pytest.raises(ConjugatePointError):
        GE.shoot_bvp(SPHERE, [np.pi / 2, 0], [np.pi / 2, np.pi], steps=200)


def test_propagator_matches_finite_differences():
    x0 = np.array([1.0, 0.2])
    v0 = np.array([0.3, 0.7])
    base = GE.integrate_flow(SPHERE, x0, v0, 200)
    phi = base.propagator[-1]
    g0 = SPHERE.eval_base(x0).real
    eps = 1e-6
    worst = 0.0
    for k in range(2):
        dv = np.zeros(2)
        dv[k] = eps
        up = GE.integrate_flow(SPHERE, x0, v0 + dv, 200)
        fd = (np.concatenate([up.gamma[-1], up.p[-1]])
              - np.concatenate([base.gamma[-1], base.p[-1]])) / eps
        worst = max(worst, np.abs(fd - phi[:, 2:] @ g0[:, k]).max())
    for k in range(2):
        dx = np.zeros(2)
        dx[k] = eps
        up = GE.integrate_flow(SPHERE, x0 + dx, v0, 200)
        fd = (np.concatenate([up.gamma[-1], up.p[-1]])
              - np.concatenate([base.gamma[-1], base.p[-1]])) / eps
        dp0 = (SPHERE.eval_base(x0 + dx).real
               - SPHERE.eval_base(x0).real) @ v0 / eps
        worst = max(worst, np.abs(
            fd - phi[:, :2] @ np.eye(2)[:, k] - phi[:, 2:] @ dp0).max())
    assert worst < 1e-5


def test_time_reversal():
    fwd = GE.shoot_bvp(SPHERE, [1.0, 0.2], [1.4, 1.1], steps=200)
    v_end = fwd.velocity(-1)
    rev = GE.shoot_bvp(SPHERE, [1.4, 1.1], [1.0, 0.2], v_guess=-v_end,
                       steps=200)
    assert np.abs(rev.v0 + v_end).max() < 1e-8
    assert np.abs(rev.x_end - fwd.x_start).max() < 1e-10


def test_propagator_symplectic():
    sol = GE.integrate_flow(SPHERE, [1.0, 0.2], [0.3, 0.7], 200)
    dets = np.linalg.det(sol.propagator)
    assert np.abs(dets - 1.0).max() < 1e-9


def test_jacobi_block_flat():
    sol = GE.integrate_flow(FLAT, [0, 0], [1, 2], 100)
    blk = GE.jacobi_block(sol, 70, 20)
    assert np.allclose(blk, 0.5 * np.eye(2))
    assert np.linalg.det(blk) == pytest.approx(0.25)
    assert np.abs(GE.jacobi_block(sol, 30, 30)).max() == 0.0


def test_jacobi_block_sphere_transverse_zero():
    # transverse Jacobi determinant first vanishes at arc separation π
    sol = GE.integrate_flow(SPHERE, [np.pi / 2, 0], [0, 1.2 * np.pi], 240)
    arc = 1.2 * np.pi
    idx = int(round((np.pi / arc) * 240))
    vals = [abs(np.linalg.det(GE.jacobi_block(sol, i, 0)))
            for i in (idx - 4, idx, idx + 4)]
    assert vals[1] < vals[0] and vals[1] < vals[2]


def test_conjugate_check_pass_and_fail():
    short = GE.integrate_flow(SPHERE, [np.pi / 2, 0], [0, 0.9 * np.pi], 200)
    rep = GE.check_conjugate_free(short)
    assert rep.passed and rep.min_norm_det > 1e-2

    longer = GE.integrate_flow(SPHERE, [np.pi / 2, 0], [0, 1.2 * np.pi], 200)
    rep2 = GE.check_conjugate_free(longer)
    assert not rep2.passed
    arc_sep = abs(rep2.s_value - rep2.t_value) * 1.2 * np.pi
    assert abs(arc_sep - np.pi) < 1e-2


def test_flat_conjugate_normalized_det_one():
    sol = GE.integrate_flow(FLAT, [0, 0], [1, 2], 60)
    rep = GE.check_conjugate_free(sol)
    assert rep.passed
    assert rep.min_norm_det == pytest.approx(1.0, rel=1e-9)
