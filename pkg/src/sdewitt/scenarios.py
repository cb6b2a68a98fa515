"""Scenario catalog and configuration ingestion.

A scenario bundles a metric chart, fiber data, numeric knobs, and point
pairs.  Configs are single JSON documents with the exact key names below;
complex entries are {re, im} pairs whose values are numbers or expression
strings in the coordinate DSL.  Catalog metrics come with a chart box used
for validation sampling and random pair drawing.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import bundle, geodesic, geometry
from ._engine import NumericParams
from .errors import (ConfigError, ConjugatePointError, ConvergenceError,
                     IntegrationError, ParseError, SingularMetricError)

__all__ = ["ScenarioConfig", "load_config", "catalog_metric",
           "sample_conjugate_free_pairs", "catalog_gauge_k2", "CATALOG"]


def _metric_flat(params):
    d = int(params.get("dim", 2))
    comps = [["1" if i == j else "0" for j in range(d)] for i in range(d)]
    box = [(-1.0, 1.0)] * d
    return geometry.MetricField(d, comps, name="flat"), box


def _metric_minkowski2(params):
    comps = [["-1", "0"], ["0", "1"]]
    return geometry.MetricField(2, comps, name="minkowski2"), \
        [(-1.0, 1.0), (-1.0, 1.0)]


def _metric_sphere2(params):
    r = float(params.get("radius", 1.0))
    rr = repr(r * r)
    comps = [[rr, "0"], ["0", f"{rr} * sin(x0)^2"]]
    # keep the default chart box away from the coordinate poles, where the
    # azimuthal coordinate degenerates and quadrature accuracy collapses
    return geometry.MetricField(2, comps, name="sphere2"), \
        [(0.8, np.pi - 0.8), (0.0, 1.8)]


def _metric_hyperbolic2(params):
    r = float(params.get("radius", 1.0))
    rr = repr(r * r)
    comps = [[rr, "0"], ["0", f"{rr} * sinh(x0)^2"]]
    return geometry.MetricField(2, comps, name="hyperbolic2"), \
        [(0.5, 2.0), (-1.0, 1.0)]


def _metric_desitter2(params):
    h = float(params.get("hubble", 1.0))
    comps = [["-1", "0"], ["0", f"cosh({h!r} * x0)^2 / {h * h!r}"]]
    return geometry.MetricField(2, comps, name="desitter2"), \
        [(-0.5, 0.5), (-0.8, 0.8)]


CATALOG = {
    "flat": _metric_flat,
    "minkowski2": _metric_minkowski2,
    "sphere2": _metric_sphere2,
    "hyperbolic2": _metric_hyperbolic2,
    "desitter2": _metric_desitter2,
}


def catalog_metric(name, params=None):
    """Catalog metric by name, with its default chart box."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(
            f"unknown catalog metric {name!r}; choose from "
            f"{sorted(CATALOG)}") from None
    return factory(params or {})


def catalog_gauge_k2(d=2, form_S=None):
    """A position-dependent anti-hermitian A and hermitian B with k = 2.

    When an indefinite form S is supplied, entries are conjugated so the
    hermiticity conditions hold with respect to that form.
    """
    # i * (hermitian expression matrix) per component, standard-hermitian
    A_h = [
        [[{"re": "0", "im": "0.4 * sin(x0)"},
          {"re": "0.3", "im": "0.1 * x1"}],
         [{"re": "-0.3", "im": "0.1 * x1"},
          {"re": "0", "im": "-0.2"}]],
        [[{"re": "0", "im": "0.2 * x1"},
          {"re": "-0.1", "im": "0.25 * cos(x0)"}],
         [{"re": "0.1", "im": "0.25 * cos(x0)"},
          {"re": "0", "im": "0.15"}]],
    ][:d] + [
        [[{"re": "0", "im": "0.1"}, {"re": "0.05", "im": "0"}],
         [{"re": "-0.05", "im": "0"}, {"re": "0", "im": "-0.1"}]]
    ] * max(0, d - 2)
    B_h = [[{"re": "1.0", "im": "0"},
            {"re": "0.2 * cos(x1)", "im": "0.1"}],
           [{"re": "0.2 * cos(x1)", "im": "-0.1"},
            {"re": "-0.5", "im": "0"}]]
    if form_S is None:
        return bundle.GaugeFields(d, 2, A_h, B_h)
    # For S-hermiticity: if K is standard-(anti)hermitian then S^{-1}K
    # is (anti)hermitian w.r.t. S.  With diagonal ±1 forms this is a row
    # sign flip, expressible back in the {re, im} string format.
    S = np.asarray(form_S, dtype=np.complex128)
    if not np.allclose(S, np.diag(np.diag(S))) or \
            not np.allclose(np.abs(np.diag(S)), 1.0):
        raise ConfigError("catalog gauge supports diagonal ±1 forms only")
    signs = np.real(np.diag(np.linalg.inv(S)))

    def flip(mat):
        out = []
        for i, row in enumerate(mat):
            s = signs[i]
            out.append([
                {"re": e["re"] if s > 0 else f"-({e['re']})",
                 "im": e["im"] if s > 0 else f"-({e['im']})"}
                for e in row])
        return out

    form = bundle.FiberForm(S)
    return bundle.GaugeFields(d, 2, [flip(a) for a in A_h], flip(B_h),
                              form=form)


def _entry_to_pair(entry):
    if isinstance(entry, dict):
        return entry.get("re", 0), entry.get("im", 0)
    if isinstance(entry, (int, float)):
        return entry, 0
    if isinstance(entry, (list, tuple)) and len(entry) == 2:
        return entry[0], entry[1]
    raise ConfigError(f"cannot parse complex entry {entry!r}")


def _const_matrix(rows):
    out = []
    for row in rows:
        out.append([complex(float(_entry_to_pair(e)[0]),
                            float(_entry_to_pair(e)[1])) for e in row])
    return np.array(out, dtype=np.complex128)


@dataclass
class ScenarioConfig:
    """Validated scenario: metric, fiber data, numerics, and point pairs."""
    name: str
    metric: geometry.MetricField
    gauge: bundle.GaugeFields
    form: bundle.FiberForm
    numerics: NumericParams
    points: list
    box: list
    sample_pairs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def resolved(self):
        """Full configuration with defaults, for report reproducibility."""
        out = dict(self.raw)
        out["numerics"] = self.numerics.as_dict()
        out.setdefault("scenario", self.name)
        out["manifold"] = dict(out.get("manifold", {}))
        out["manifold"]["signature"] = self.metric.signature
        out["manifold"]["box"] = [list(b) for b in self.box]
        return out


def _validation_points(box, n=64, seed=0):
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((n, len(box)))


def load_config(source):
    """Parse and validate a scenario configuration.

    ``source``: a path, a JSON string, or an already-parsed dict.  Raises
    ConfigError on any validation failure (non-symmetric metric, signature
    drift, hermiticity violations, malformed points).
    """
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            try:
                with open(text) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    man = raw.get("manifold")
    if not isinstance(man, dict) or "dim" not in man:
        raise ConfigError("config requires manifold.dim")
    d = int(man["dim"])
    metric_spec = man.get("metric", "flat")
    try:
        if isinstance(metric_spec, str):
            metric, box = catalog_metric(metric_spec,
                                         man.get("parameters", {}))
            if metric.d != d:
                raise ConfigError(
                    f"catalog metric {metric_spec!r} has dim {metric.d}, "
                    f"config says {d}")
        else:
            metric = geometry.MetricField(d, metric_spec)
            box = [tuple(b) for b in man.get(
                "box", [(-1.0, 1.0)] * d)]
        if "box" in man:
            box = [tuple(map(float, b)) for b in man["box"]]
        metric.validate(_validation_points(box))
    except (ParseError, SingularMetricError, ValueError) as exc:
        raise ConfigError(f"metric rejected: {exc}") from exc

    bun = raw.get("bundle", {})
    k = int(bun.get("k", 1))
    try:
        form = bundle.FiberForm(_const_matrix(bun["form_S"])
                                if "form_S" in bun else np.eye(k))
        if "A" in bun or "B" in bun:
            zrow = [[{"re": "0", "im": "0"}] * k for _ in range(k)]
            gauge = bundle.GaugeFields(
                d, k,
                bun.get("A", [zrow] * d),
                bun.get("B", zrow),
                form=form)
        else:
            gauge = bundle.GaugeFields.zero(d, k, form=form)
        gauge.validate(_validation_points(box), tol=1e-10)
    except ParseError as exc:
        raise ConfigError(f"gauge rejected: {exc}") from exc

    try:
        numerics = NumericParams(**raw.get("numerics", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"numerics rejected: {exc}") from exc

    points = []
    for i, entry in enumerate(raw.get("points", [])):
        try:
            x = np.asarray(entry["x"], dtype=np.float64)
            xp = np.asarray(entry["xp"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"points[{i}] malformed: {exc}") from exc
        if x.shape != (d,) or xp.shape != (d,):
            raise ConfigError(f"points[{i}] must give dim-{d} vectors")
        v_guess = entry.get("v_guess")
        if v_guess is not None:
            v_guess = np.asarray(v_guess, dtype=np.float64)
        points.append({"x": x, "xp": xp, "v_guess": v_guess})

    return ScenarioConfig(
        name=str(raw.get("scenario", "unnamed")),
        metric=metric,
        gauge=gauge,
        form=form,
        numerics=numerics,
        points=points,
        box=box,
        sample_pairs=dict(raw.get("sample_pairs", {})),
        raw=raw,
    )


def sample_conjugate_free_pairs(cfg, count, seed=0, min_sep=0.25,
                                max_arc=1.6, max_attempts=400):
    """Draw conjugate-free point pairs inside the chart box, reproducibly.

    ``max_arc`` bounds |2σ|^{1/2} of the connecting geodesic so the fixed
    default resolution stays adequate; pass inf to disable.
    """
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in cfg.box])
    hi = np.array([b[1] for b in cfg.box])
    pairs = []
    attempts = 0
    while len(pairs) < count and attempts < max_attempts:
        attempts += 1
        x = lo + (hi - lo) * rng.random(len(cfg.box))
        xp = lo + (hi - lo) * rng.random(len(cfg.box))
        if np.linalg.norm(x - xp) < min_sep:
            continue
        try:
            sol = geodesic.shoot_bvp(
                cfg.metric, xp, x, steps=cfg.numerics.steps,
                tol=cfg.numerics.newton_tol,
                max_iter=cfg.numerics.newton_max_iter)
            g0 = cfg.metric.eval_base(xp).real
            sigma = 0.5 * sol.v0 @ g0 @ sol.v0
            if np.sqrt(2.0 * abs(sigma)) > max_arc:
                continue
            rep = geodesic.check_conjugate_free(
                sol, tol=cfg.numerics.conjugate_tol)
            rev = geodesic.shoot_bvp(
                cfg.metric, x, xp, v_guess=-sol.velocity(-1),
                steps=cfg.numerics.steps, tol=cfg.numerics.newton_tol,
                max_iter=cfg.numerics.newton_max_iter)
            rep_rev = geodesic.check_conjugate_free(
                rev, tol=cfg.numerics.conjugate_tol)
        except (ConjugatePointError, ConvergenceError, IntegrationError):
            continue
        if rep.passed and rep_rev.passed:
            pairs.append({"x": x, "xp": xp, "v_guess": None})
    if len(pairs) < count:
        raise ConfigError(
            f"could only sample {len(pairs)}/{count} conjugate-free pairs "
            f"in {max_attempts} attempts; shrink the box or separation")
    return pairs
