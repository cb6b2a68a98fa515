"""Command-line driver: scenario audits and report emission.

Subcommands::

    geodesic           BVP solve, world function, conjugate diagnostics
    coefficients       coefficient table per point pair
    audit-symmetry     sesqui-symmetry residuals; exit 1 above --tol
    verify-identities  gradient/transport identities and lemma checks
    borel-demo         cutoff construction and Taylor-match report

Exit codes: 0 success, 1 residual exceedance in an audit, 2 configuration
rejected, 3 numerical failure.  Reports are deterministic for a fixed seed
and config (byte-identical JSON).
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, borel, bundle, geodesic, hadamard, scenarios, synge
from .errors import ConfigError, SdewittError

EXIT_RESIDUAL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _matrix_payload(mat):
    mat = np.asarray(mat, dtype=np.complex128)
    return {
        "rows": mat.shape[0],
        "cols": mat.shape[1],
        "re": [[float(v.real) for v in row] for row in mat],
        "im": [[float(v.imag) for v in row] for row in mat],
    }


def _emit(report, args):
    if args.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2)
    else:
        text = _to_csv(report)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text + "\n")


def _to_csv(report):
    """Flatten results one row per (pair, n); matrices row-major re/im."""
    rows = []
    fieldnames = ["pair", "n", "sigma", "delta", "conjugate_passed"]
    extra = set()
    for i, res in enumerate(report.get("results", [])):
        fs = res.get("f")
        ns = range(len(fs)) if fs else [0]
        for n in ns:
            row = {
                "pair": i,
                "n": n,
                "sigma": res.get("sigma"),
                "delta": res.get("delta"),
                "conjugate_passed": res.get(
                    "conjugate_report", {}).get("passed"),
            }
            if fs:
                mat = fs[n]
                k = mat["rows"]
                for a in range(k):
                    for b in range(k):
                        row[f"f_re_{a}{b}"] = mat["re"][a][b]
                        row[f"f_im_{a}{b}"] = mat["im"][a][b]
            resid = res.get("residuals", {})
            sym = resid.get("symmetry")
            if sym and n < len(sym):
                row["symmetry_residual"] = sym[n]
            for key, val in resid.get("identities", {}).items():
                row[f"id_{key}"] = val
            extra.update(row)
            rows.append(row)
    fieldnames += sorted(extra - set(fieldnames))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue().rstrip("\n")


def _base_report(cfg):
    return {
        "scenario": cfg.name,
        "version": __version__,
        "config_resolved": cfg.resolved(),
        "results": [],
    }


def _resolve_points(cfg, args):
    points = list(cfg.points)
    spec = cfg.sample_pairs
    if spec.get("count"):
        points += scenarios.sample_conjugate_free_pairs(
            cfg, int(spec["count"]), seed=args.seed,
            min_sep=float(spec.get("min_sep", 0.25)),
            max_arc=float(spec.get("max_arc", 1.6)))
    if not points:
        raise ConfigError("no point pairs: give points[] or sample_pairs")
    return points


def cmd_geodesic(cfg, args):
    report = _base_report(cfg)
    for pt in _resolve_points(cfg, args):
        sol = geodesic.shoot_bvp(
            cfg.metric, pt["xp"], pt["x"], v_guess=pt.get("v_guess"),
            steps=cfg.numerics.steps, tol=cfg.numerics.newton_tol,
            max_iter=cfg.numerics.newton_max_iter)
        rep = geodesic.check_conjugate_free(sol, cfg.numerics.conjugate_tol)
        wf = synge.world_function(sol)
        entry = {
            "pair": {"x": pt["x"].tolist(), "xp": pt["xp"].tolist()},
            "v0": sol.v0.tolist(),
            "sigma": wf.sigma,
            "conjugate_report": rep.as_dict(),
        }
        if rep.passed:
            vv = synge.van_vleck(cfg.metric, wf, pt["x"], pt["xp"])
            entry["delta"] = vv.delta
            entry["delta_sqrt"] = vv.delta_sqrt
        else:
            raise SdewittError(
                "conjugate pair detected on the requested geodesic at "
                f"(s, t) = ({rep.s_value:.4f}, {rep.t_value:.4f})")
        report["results"].append(entry)
    _emit(report, args)
    return 0


def cmd_coefficients(cfg, args):
    report = _base_report(cfg)
    for pt in _resolve_points(cfg, args):
        tab = hadamard.seeley_dewitt(
            cfg.metric, cfg.gauge, pt["x"], pt["xp"], args.order,
            params=cfg.numerics, v_guess=pt.get("v_guess"))
        report["results"].append({
            "pair": {"x": pt["x"].tolist(), "xp": pt["xp"].tolist()},
            "sigma": tab.sigma,
            "delta": tab.delta,
            "delta_sqrt": tab.delta_sqrt,
            "conjugate_report": tab.diagnostics["conjugate"],
            "f": [_matrix_payload(f) for f in tab.f],
        })
    _emit(report, args)
    return 0


def cmd_audit_symmetry(cfg, args):
    report = _base_report(cfg)
    worst = 0.0
    for pt in _resolve_points(cfg, args):
        res, fwd, rev = hadamard.symmetry_residual(
            cfg.metric, cfg.gauge, cfg.form, pt["x"], pt["xp"], args.order,
            params=cfg.numerics)
        worst = max(worst, max(res))
        report["results"].append({
            "pair": {"x": pt["x"].tolist(), "xp": pt["xp"].tolist()},
            "sigma": fwd.sigma,
            "delta": fwd.delta,
            "conjugate_report": fwd.diagnostics["conjugate"],
            "f": [_matrix_payload(f) for f in fwd.f],
            "residuals": {"symmetry": res},
        })
    report["max_symmetry_residual"] = worst
    report["tol"] = args.tol
    _emit(report, args)
    return 0 if worst <= args.tol else EXIT_RESIDUAL


def cmd_verify_identities(cfg, args):
    report = _base_report(cfg)
    worst = 0.0
    n_pde = max(1, min(args.order, 2))
    for pt in _resolve_points(cfg, args):
        x, xp = pt["x"], pt["xp"]
        grad_defect, vvm_defect = hadamard.sigma_identity_residuals(
            cfg.metric, cfg.gauge, x, xp, params=cfg.numerics)
        prod, sym = hadamard.transport_identity_residuals(
            cfg.metric, cfg.gauge, cfg.form, x, xp, params=cfg.numerics)
        pde = hadamard.hadamard_pde_residual(
            cfg.metric, cfg.gauge, x, xp, n_pde, params=cfg.numerics)
        lem2 = hadamard.lemma2_identity_check(
            cfg.metric, cfg.gauge, x, xp, 0.3, n_trunc=min(args.order, 2),
            params=cfg.numerics)
        lem4 = hadamard.lemma4_order0_defect(
            cfg.metric, cfg.gauge, cfg.form, x, xp, params=cfg.numerics)
        lem5, _ = hadamard.lemma5_check(
            cfg.metric, cfg.gauge, cfg.form, xp, direction=x - xp,
            params=cfg.numerics)
        ids = {
            "sigma_gradient": grad_defect,
            "vvm_transport": vvm_defect,
            "transport_product": prod,
            "transport_adjoint": sym,
            f"pde_n{n_pde}": pde,
            "lemma2": lem2,
            "lemma4_order0": lem4,
            "lemma5": lem5,
        }
        entry = {
            "pair": {"x": x.tolist(), "xp": xp.tolist()},
            "residuals": {"identities": ids},
        }
        if args.fd_crosscheck:
            entry["residuals"]["fd_crosscheck"] = hadamard.fd_crosscheck(
                cfg.metric, cfg.gauge, x, xp, 1, params=cfg.numerics)
        worst = max(worst, max(ids.values()))
        report["results"].append(entry)
    report["max_identity_residual"] = worst
    report["tol"] = args.tol
    _emit(report, args)
    return 0 if worst <= args.tol else EXIT_RESIDUAL


def cmd_borel_demo(cfg, args):
    n_terms = max(args.order + 1, 4)
    builder = borel.BorelBuilder(
        [(lambda x, n=n: math.factorial(n) * np.ones_like(x))
         for n in range(n_terms)], [(0.0, 1.0)], grid_n=41)
    x0 = builder.axes[0][10]
    defect = builder.taylor_match_check(
        x0, min(args.order, n_terms - 2), [0.002, 0.005, 0.01])
    smooth = borel.BorelBuilder(
        [(lambda x, n=n: np.cos((n + 1) * x) / 4.0 ** n)
         for n in range(n_terms)], [(0.0, 1.0)], grid_n=81)
    xs = smooth.axes[0][20]
    ders = smooth.lambda_derivatives_at_zero(xs, min(3, n_terms - 1))
    recovery = max(
        abs(dv - (1j ** n) * math.factorial(n) * np.cos((n + 1) * xs)
            / 4.0 ** n)
        for n, dv in enumerate(ders))
    report = {
        "scenario": "borel-demo",
        "version": __version__,
        "config_resolved": {"order": args.order, "n_terms": n_terms},
        "results": [{
            "scales": list(builder.lam),
            "sup_estimates": list(builder.L),
            "taylor_match_defect": float(defect),
            "derivative_recovery_defect": float(recovery),
        }],
    }
    _emit(report, args)
    return 0 if recovery <= args.tol else EXIT_RESIDUAL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdewitt",
        description="geodesic-transport wave-kernel coefficients and audits")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="scenario JSON path")
        p.add_argument("--order", type=int, default=2,
                       help="highest coefficient order n")
        p.add_argument("--tol", type=float, default=1e-6,
                       help="audit pass/fail threshold")
        p.add_argument("--output", default=None, help="report file path")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for random point sampling")
        p.add_argument("--fd-crosscheck", action="store_true",
                       help="enable the finite-difference derivative mode")

    for name, fn in (("geodesic", cmd_geodesic),
                     ("coefficients", cmd_coefficients),
                     ("audit-symmetry", cmd_audit_symmetry),
                     ("verify-identities", cmd_verify_identities)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn, needs_config=True)
    p = sub.add_parser("borel-demo")
    common(p, config_required=False)
    p.set_defaults(fn=cmd_borel_demo, needs_config=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = None
    if args.needs_config:
        try:
            cfg = scenarios.load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SdewittError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
