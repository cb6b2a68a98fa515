"""Acceptance suite: one quantitative criterion per test, printed pass/fail.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines.  Tolerances are fixed here, not tuned at runtime.
"""

import math
import time

import numpy as np
import pytest

from sdewitt import borel as BO
from sdewitt import bundle as BU
from sdewitt import geodesic as GE
from sdewitt import hadamard as HA
from sdewitt import scenarios as SC
from sdewitt import synge as SY

DEFAULT = HA.NumericParams()                  # steps=200, quad_nodes=16


def _line(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _gauge_scenario(name):
    metric, box = SC.catalog_metric(name)
    pts = SC._validation_points(box, n=16)
    metric.validate(pts)
    form_S = np.diag([1.0, -1.0]) if name == "minkowski2" else np.eye(2)
    gauge = SC.catalog_gauge_k2(2, form_S=None if name != "minkowski2"
                                else form_S)
    gauge.validate(pts)
    cfg = SC.ScenarioConfig(
        name=name, metric=metric, gauge=gauge, form=gauge.form,
        numerics=DEFAULT, points=[], box=box)
    return cfg


GAUGE_SCENARIOS = ("sphere2", "hyperbolic2", "desitter2", "minkowski2")


def test_criterion_1_flat_closed_form():
    t0 = time.time()
    metric, box = SC.catalog_metric("flat")
    metric.validate(SC._validation_points(box, n=8))
    gauge = BU.GaugeFields(
        2, 1, [[[{"re": "0", "im": "0"}]], [[{"re": "0", "im": "0"}]]],
        [[{"re": "-1", "im": "0"}]])
    # the hand-solved recursion is exact at any quadrature order (the
    # integrand is polynomial in s), so a lean node count keeps the budget
    params = HA.NumericParams(steps=200, quad_nodes=8)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10):
        x = -1.0 + 2.0 * rng.random(2)
        xp = -1.0 + 2.0 * rng.random(2)
        if np.linalg.norm(x - xp) < 0.2:
            xp = x + 0.5
        tab = HA.seeley_dewitt(metric, gauge, x, xp, 3, params=params)
        for n in range(4):
            expect = (-1.0) ** n / math.factorial(n)
            worst = max(worst, abs(tab.f[n][0, 0] - expect) / abs(expect))
    elapsed = time.time() - t0
    _line("criterion 1 (flat closed form)",
          worst <= 1e-8 and elapsed <= 60.0,
          f"max rel err {worst:.2e} <= 1e-8, runtime {elapsed:.1f}s <= 60s")


def test_criterion_2_constant_curvature_world_function():
    sphere, _ = SC.catalog_metric("sphere2")
    sphere.validate(SC._validation_points([(0.8, 2.3), (0.0, 1.8)], n=8))
    sol = GE.shoot_bvp(sphere, [np.pi / 2, 0], [np.pi / 2, np.pi / 2],
                       steps=DEFAULT.steps)
    wf = SY.world_function(sol)
    vv = SY.van_vleck(sphere, wf, [np.pi / 2, np.pi / 2], [np.pi / 2, 0])
    sig_err = abs(wf.sigma - np.pi ** 2 / 8)
    del_err = abs(vv.delta - (np.pi / 2) / np.sin(np.pi / 2))

    hyp, _ = SC.catalog_metric("hyperbolic2")
    hyp.validate(SC._validation_points([(0.5, 2.0), (-1.0, 1.0)], n=8))
    solh = GE.shoot_bvp(hyp, [1.0, 0.0], [1.2, 0.9], steps=DEFAULT.steps)
    wfh = SY.world_function(solh)
    vvh = SY.van_vleck(hyp, wfh, [1.2, 0.9], [1.0, 0.0])
    rho = np.sqrt(2 * wfh.sigma)
    hyp_err = abs(vvh.delta - rho / np.sinh(rho))
    _line("criterion 2 (constant-curvature σ and Δ)",
          sig_err <= 1e-8 and del_err <= 1e-6 and hyp_err <= 1e-6,
          f"σ err {sig_err:.2e} <= 1e-8, S² Δ err {del_err:.2e} <= 1e-6, "
          f"H² Δ err {hyp_err:.2e} <= 1e-6")


def test_criterion_3_signature_sign_rule():
    mink, box = SC.catalog_metric("minkowski2")
    mink.validate(SC._validation_points(box, n=8))
    sol = GE.shoot_bvp(mink, [0.0, 0.0], [0.3, 0.8], steps=DEFAULT.steps)
    vv = SY.van_vleck(mink, SY.world_function(sol), [0.3, 0.8], [0.0, 0.0])
    err = abs(vv.delta - (-1.0))
    _line("criterion 3 (Minkowski Δ = -1)", err <= 1e-9,
          f"|Δ + 1| = {err:.2e} <= 1e-9")


@pytest.mark.parametrize("name", GAUGE_SCENARIOS)
def test_criterion_4_sesqui_symmetry(name):
    t0 = time.time()
    cfg = _gauge_scenario(name)
    pairs = SC.sample_conjugate_free_pairs(cfg, 20, seed=5, max_arc=1.4)
    worst = 0.0
    residuals = []
    for pt in pairs:
        res, _, _ = HA.symmetry_residual(
            cfg.metric, cfg.gauge, cfg.form, pt["x"], pt["xp"], 2,
            params=DEFAULT)
        residuals.append(max(res))
        worst = max(worst, max(res))
    # refinement factor on the two pairs with the largest base residual
    refined = DEFAULT.copy(steps=2 * DEFAULT.steps,
                           quad_nodes=2 * DEFAULT.quad_nodes)
    order = np.argsort(residuals)[::-1]
    ratios = []
    for idx in order[:2]:
        pt = pairs[int(idx)]
        base = residuals[int(idx)]
        res2, _, _ = HA.symmetry_residual(
            cfg.metric, cfg.gauge, cfg.form, pt["x"], pt["xp"], 2,
            params=refined)
        ratios.append(base / max(max(res2), 1e-300))
    elapsed = time.time() - t0
    _line(f"criterion 4 (sesqui-symmetry, {name})",
          worst <= 1e-6 and min(ratios) >= 8.0,
          f"max residual {worst:.2e} <= 1e-6 over 20 pairs, refinement "
          f"ratios {[f'{r:.0f}x' for r in ratios]} >= 8x, {elapsed:.0f}s")


def test_criterion_5_identity_suite():
    rng = np.random.default_rng(77)
    worst = {"sigma_grad": 0.0, "vvm": 0.0, "prod": 0.0, "adj": 0.0,
             "pde": 0.0}
    count = 0
    for name in GAUGE_SCENARIOS:
        cfg = _gauge_scenario(name)
        pairs = SC.sample_conjugate_free_pairs(
            cfg, 13 if name in ("sphere2", "hyperbolic2") else 12,
            seed=int(rng.integers(1 << 30)), max_arc=1.3)
        for pt in pairs:
            x, xp = pt["x"], pt["xp"]
            gd, vd = HA.sigma_identity_residuals(
                cfg.metric, cfg.gauge, x, xp, params=DEFAULT)
            prod, adj = HA.transport_identity_residuals(
                cfg.metric, cfg.gauge, cfg.form, x, xp, params=DEFAULT)
            pde = HA.hadamard_pde_residual(
                cfg.metric, cfg.gauge, x, xp, 1, params=DEFAULT)
            worst["sigma_grad"] = max(worst["sigma_grad"], gd)
            worst["vvm"] = max(worst["vvm"], vd)
            worst["prod"] = max(worst["prod"], prod)
            worst["adj"] = max(worst["adj"], adj)
            worst["pde"] = max(worst["pde"], pde)
            count += 1
    ok = (worst["sigma_grad"] <= 1e-8 and worst["vvm"] <= 1e-6
          and worst["prod"] <= 1e-9 and worst["adj"] <= 1e-9
          and worst["pde"] <= 1e-6)
    _line("criterion 5 (identity suite)", ok and count >= 50,
          f"{count} samples: σσ=2σ {worst['sigma_grad']:.2e} <= 1e-8, "
          f"Δ-transport {worst['vvm']:.2e} <= 1e-6, "
          f"H·H {worst['prod']:.2e} <= 1e-9, "
          f"H-adjoint {worst['adj']:.2e} <= 1e-9, "
          f"PDE n=1 {worst['pde']:.2e} <= 1e-6")


def test_criterion_6_lemma2_identity():
    flat, fbox = SC.catalog_metric("flat")
    flat.validate(SC._validation_points(fbox, n=8))
    massive = BU.GaugeFields(
        2, 1, [[[{"re": "0", "im": "0"}]], [[{"re": "0", "im": "0"}]]],
        [[{"re": "-1", "im": "0"}]])
    sphere_cfg = _gauge_scenario("sphere2")
    worst = 0.0
    for lam in (0.3, 1.0):
        worst = max(worst, HA.lemma2_identity_check(
            flat, massive, [0.7, 0.3], [0.1, -0.2], lam, n_trunc=2,
            params=DEFAULT))
        worst = max(worst, HA.lemma2_identity_check(
            sphere_cfg.metric, sphere_cfg.gauge, [1.35, 1.0], [1.0, 0.25],
            lam, n_trunc=2, params=DEFAULT))
    _line("criterion 6 (oscillatory-factor identity)", worst <= 1e-9,
          f"max residual {worst:.2e} <= 1e-9 at λ in {{0.3, 1.0}}")


def test_criterion_7_lemma5_and_lemma4():
    worst5 = 0.0
    worst4 = 0.0
    pair_of = {
        "sphere2": ([1.35, 1.0], [1.0, 0.25]),
        "hyperbolic2": ([1.2, 0.6], [0.9, 0.1]),
        "desitter2": ([0.25, 0.4], [-0.1, 0.0]),
        "minkowski2": ([0.3, 0.8], [0.0, 0.0]),
    }
    for name in GAUGE_SCENARIOS:
        cfg = _gauge_scenario(name)
        x, xp = [np.asarray(v, float) for v in pair_of[name]]
        defect, _ = HA.lemma5_check(cfg.metric, cfg.gauge, cfg.form, xp,
                                    direction=x - xp, params=DEFAULT)
        worst5 = max(worst5, defect)
        worst4 = max(worst4, HA.lemma4_order0_defect(
            cfg.metric, cfg.gauge, cfg.form, x, xp, params=DEFAULT))
    _line("criterion 7 (coincidence hermiticity / P' order-0)",
          worst5 <= 1e-6 and worst4 <= 1e-6,
          f"lemma5 defect {worst5:.2e} <= 1e-6, "
          f"P'(F) order-0 {worst4:.2e} <= 1e-6")


def test_criterion_8_conjugate_point_detection():
    sphere, _ = SC.catalog_metric("sphere2")
    sphere.validate(SC._validation_points([(0.8, 2.3), (0.0, 1.8)], n=8))
    ok = True
    details = []
    for arc in (0.8 * np.pi, 0.89 * np.pi):
        sol = GE.integrate_flow(sphere, [np.pi / 2, 0], [0, arc],
                                DEFAULT.steps)
        rep = GE.check_conjugate_free(sol, tol=DEFAULT.conjugate_tol)
        ok &= rep.passed
        details.append(f"arc {arc / np.pi:.2f}π PASS={rep.passed}")
    for arc in (1.11 * np.pi, 1.2 * np.pi):
        sol = GE.integrate_flow(sphere, [np.pi / 2, 0], [0, arc],
                                DEFAULT.steps)
        rep = GE.check_conjugate_free(sol, tol=DEFAULT.conjugate_tol)
        sep = abs(rep.s_value - rep.t_value) * arc
        ok &= (not rep.passed) and abs(sep - np.pi) <= 1e-2
        details.append(
            f"arc {arc / np.pi:.2f}π FAIL={not rep.passed} "
            f"sep-π={sep - np.pi:+.1e}")
    _line("criterion 8 (conjugate detection)", ok, "; ".join(details))


def test_criterion_9_borel_construction():
    factorial = BO.BorelBuilder(
        [(lambda x, n=n: math.factorial(n) * np.ones_like(x))
         for n in range(8)], [(0.0, 1.0)], grid_n=41)
    x0 = factorial.axes[0][10]
    defect = factorial.taylor_match_check(
        x0, 3, [0.001, 0.002, 0.005, 0.01, 0.02])
    smooth = BO.BorelBuilder(
        [(lambda x, n=n: np.cos((n + 1) * x) / 4.0 ** n) for n in range(6)],
        [(0.0, 1.0)], grid_n=81)
    xs = smooth.axes[0][20]
    ders = smooth.lambda_derivatives_at_zero(xs, 3)
    rec = max(abs(d - (1j ** n) * math.factorial(n)
                  * np.cos((n + 1) * xs) / 4.0 ** n)
              for n, d in enumerate(ders))
    _line("criterion 9 (Borel construction)",
          np.isfinite(defect) and rec <= 1e-6,
          f"factorial-growth Taylor-match defect {defect:.3g} finite, "
          f"∂_λ^n recovery {rec:.2e} <= 1e-6")


def test_criterion_10_seeding_linearity():
    rng = np.random.default_rng(31)
    pair_of = {
        "sphere2": ([1.35, 1.0], [1.0, 0.25]),
        "hyperbolic2": ([1.2, 0.6], [0.9, 0.1]),
        "desitter2": ([0.25, 0.4], [-0.1, 0.0]),
        "minkowski2": ([0.3, 0.8], [0.0, 0.0]),
    }
    worst = 0.0
    for name in GAUGE_SCENARIOS:
        cfg = _gauge_scenario(name)
        x, xp = pair_of[name]
        seeds = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
                 for _ in range(3)]
        worst = max(worst, HA.lemma1_seeding_residual(
            cfg.metric, cfg.gauge, x, xp, 2, seeds, params=DEFAULT))
    _line("criterion 10 (seeding linearity)", worst <= 1e-9,
          f"max ‖g_n(c) − g_n·c‖ = {worst:.2e} <= 1e-9 (3 seeds × 4 scenarios)")
