"""Metric fields over a small smooth-expression DSL.

Expressions are parsed from strings like ``"sin(x0)^2"`` into immutable ASTs
built from real literals, coordinates ``x0..x{d-1}``, the binary operators
``+ - * / ^`` (``^`` right-associative, binding tighter than unary minus),
and the functions sin, cos, tan, exp, ln, sqrt, sinh, cosh, atan.  They
evaluate over any scalar supporting arithmetic — floats, complex arrays, or
jets — which is what lets one metric definition feed both plain geodesic
integration and nested-jet differentiation.
"""

from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import OrderError, ParseError, SingularMetricError

__all__ = [
    "Expression", "parse_expression", "expr_to_str", "MetricField",
    "metric_at", "christoffel", "scalar_curvature", "detect_signature",
]

_FUNCTIONS = {
    "sin": jets.sin, "cos": jets.cos, "tan": jets.tan, "exp": jets.exp,
    "ln": jets.ln, "sqrt": jets.sqrt, "sinh": jets.sinh, "cosh": jets.cosh,
    "atan": jets.atan,
}


# -- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    v: float


@dataclass(frozen=True)
class Coord:
    i: int


@dataclass(frozen=True)
class Neg:
    a: "Expression"


@dataclass(frozen=True)
class Bin:
    op: str
    a: "Expression"
    b: "Expression"


@dataclass(frozen=True)
class Fn:
    name: str
    a: "Expression"


Expression = (Lit, Coord, Neg, Bin, Fn)


# -- tokenizer / parser ----------------------------------------------------

def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*/^()":
            toks.append((ch, ch, i))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            try:
                val = float(src[i:j])
            except ValueError:
                raise ParseError(f"malformed number {src[i:j]!r}", i)
            toks.append(("num", val, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(("name", src[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    toks.append(("end", None, n))
    return toks


class _Parser:
    """Precedence climbing; ^ (40, right) > unary - (30) > * / (20) > + - (10)."""

    def __init__(self, toks, dim):
        self.toks = toks
        self.pos = 0
        self.dim = dim

    def peek(self):
        return self.toks[self.pos]

    def advance(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def parse(self):
        node = self.expression(0)
        kind, _, off = self.peek()
        if kind != "end":
            raise ParseError("unexpected trailing input", off)
        return node

    def expression(self, min_bp):
        node = self.prefix()
        while True:
            kind, _, off = self.peek()
            bp = {"^": 40, "*": 20, "/": 20, "+": 10, "-": 10}.get(kind)
            if bp is None or bp < min_bp:
                return node
            self.advance()
            # right-assoc for ^, left-assoc otherwise
            rhs = self.expression(bp if kind == "^" else bp + 1)
            node = Bin(kind, node, rhs)

    def prefix(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Lit(val)
        if kind == "-":
            return Neg(self.expression(30))
        if kind == "(":
            node = self.expression(0)
            k2, _, off2 = self.advance()
            if k2 != ")":
                raise ParseError("expected ')'", off2)
            return node
        if kind == "name":
            if val in _FUNCTIONS:
                k2, _, off2 = self.advance()
                if k2 != "(":
                    raise ParseError(f"function {val!r} requires '('", off2)
                arg = self.expression(0)
                k3, _, off3 = self.advance()
                if k3 != ")":
                    raise ParseError("expected ')'", off3)
                return Fn(val, arg)
            if val.startswith("x") and val[1:].isdigit():
                idx = int(val[1:])
                if idx >= self.dim:
                    raise ParseError(
                        f"coordinate {val!r} out of range for dim {self.dim}", off)
                return Coord(idx)
            raise ParseError(f"unknown symbol {val!r}", off)
        raise ParseError(f"expected operand, found {kind!r}", off)


def parse_expression(src, dim):
    """Parse a DSL string into an AST; coordinates are validated against dim."""
    return _Parser(_tokenize(src), dim).parse()


def expr_to_str(node):
    """Minimal-parentheses printer; parse(expr_to_str(e), d) round-trips."""

    def prec(nd):
        if isinstance(nd, Bin):
            return {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}[nd.op]
        if isinstance(nd, Neg):
            return 30
        return 100

    def render(nd):
        if isinstance(nd, Lit):
            return repr(nd.v)
        if isinstance(nd, Coord):
            return f"x{nd.i}"
        if isinstance(nd, Neg):
            inner = render(nd.a)
            if prec(nd.a) < 30 or isinstance(nd.a, Neg):
                inner = f"({inner})"
            return f"-{inner}"
        if isinstance(nd, Fn):
            return f"{nd.name}({render(nd.a)})"
        la, ra = render(nd.a), render(nd.b)
        p = prec(nd)
        # left child needs parens if looser; right child if looser-or-equal
        # (except ^ which is right-assoc: parenthesize a looser-or-equal left)
        if nd.op == "^":
            if prec(nd.a) <= p:
                la = f"({la})"
            if prec(nd.b) < p:
                ra = f"({ra})"
        else:
            if prec(nd.a) < p:
                la = f"({la})"
            if prec(nd.b) <= p:
                ra = f"({ra})"
        return f"{la} {nd.op} {ra}"

    return render(node)


def eval_expression(node, coords):
    """Evaluate an AST on a list of per-coordinate scalars (numbers or jets)."""
    if isinstance(node, Lit):
        return node.v
    if isinstance(node, Coord):
        return coords[node.i]
    if isinstance(node, Neg):
        return -eval_expression(node.a, coords)
    if isinstance(node, Fn):
        return _FUNCTIONS[node.name](eval_expression(node.a, coords))
    a = eval_expression(node.a, coords)
    b = eval_expression(node.b, coords)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    # integer-literal exponents stay polynomial (valid at zero base values)
    if isinstance(node.b, Lit) and float(node.b.v).is_integer():
        return a ** int(node.b.v)
    if isinstance(a, jets.Jet):
        return a ** b if not isinstance(b, jets.Jet) else jets.exp(b * jets.ln(a))
    return a ** b


def _is_zero_literal(node):
    return isinstance(node, Lit) and node.v == 0.0


class MetricField:
    """A d×d symmetric matrix of expressions with a fixed signature.

    The signature (sum of eigenvalue signs) is detected once at validation
    sample points and then trusted; the metric must stay nondegenerate with
    constant signature on the chart region being used.
    """

    def __init__(self, dim, components, signature=None, name=None):
        self.d = int(dim)
        if len(components) != self.d or any(len(r) != self.d for r in components):
            raise ValueError("metric components must form a d×d matrix")
        parsed = []
        for row in components:
            parsed.append([
                parse_expression(e, self.d) if isinstance(e, str) else e
                for e in row])
        for i in range(self.d):
            for j in range(self.d):
                if expr_to_str(parsed[i][j]) != expr_to_str(parsed[j][i]):
                    raise ValueError(
                        f"metric not structurally symmetric at ({i},{j})")
        self.components = parsed
        self.signature = signature
        self.name = name

    def validate(self, sample_points, tol=1e-9):
        """Check nondegeneracy and constant signature at the sample points."""
        sig = None
        for x in sample_points:
            g = self.eval_base(x)
            if not np.allclose(g.imag, 0.0, atol=tol):
                raise SingularMetricError("metric has complex values at sample point")
            gr = g.real
            if abs(np.linalg.det(gr)) < tol:
                raise SingularMetricError(
                    f"metric singular at sample point {np.asarray(x).tolist()}")
            eig = np.linalg.eigvalsh(0.5 * (gr + gr.T))
            s = int(np.sum(np.sign(eig)))
            if sig is None:
                sig = s
            elif s != sig:
                raise SingularMetricError("metric signature varies across samples")
        if self.signature is not None and sig != self.signature:
            raise SingularMetricError(
                f"declared signature {self.signature} != detected {sig}")
        self.signature = sig
        return sig

    def eval_base(self, x):
        """Plain numeric metric matrix at a real point."""
        coords = list(np.asarray(x, dtype=np.complex128))
        g = np.empty((self.d, self.d), dtype=np.complex128)
        for i in range(self.d):
            for j in range(self.d):
                g[i, j] = eval_expression(self.components[i][j], coords)
        return g

    def eval_jets(self, x):
        """Metric as a (…, d, d) jet matrix at jet coordinates.

        ``x`` is a Jet with trailing component axis of length d (or a plain
        complex array, in which case a constant-metric shortcut applies).
        """
        d = self.d
        if not isinstance(x, jets.Jet):
            x = np.asarray(x, dtype=np.complex128)
            coords = [x[..., i] for i in range(d)]
            lead = x.shape[:-1]
            out = np.zeros(lead + (d, d), dtype=np.complex128)
            for i in range(d):
                for j in range(i, d):
                    out[..., i, j] = eval_expression(self.components[i][j], coords)
                    if j > i:
                        out[..., j, i] = out[..., i, j]
            return out
        coords = [x[..., i] for i in range(d)]
        lead = x.lead_shape[:-1]
        n = x.space.n_terms
        out = np.zeros(lead + (d, d, n), dtype=np.complex128)
        deg = 0
        for i in range(d):
            for j in range(i, d):
                e = self.components[i][j]
                if isinstance(e, Lit):
                    out[..., i, j, 0] = e.v
                else:
                    v = eval_expression(e, coords)
                    if isinstance(v, jets.Jet):
                        out[..., i, j, :] = v.c
                        deg = max(deg, v.deg)
                    else:
                        out[..., i, j, 0] = v
                if j > i:
                    out[..., j, i, :] = out[..., i, j, :]
        return jets.Jet(x.space, out, deg)


def detect_signature(metric, sample_points, tol=1e-9):
    return metric.validate(sample_points, tol=tol)


def metric_at(m, x):
    """Metric, inverse and determinant at jet coordinates.

    ``x``: list of d jets sharing a space (as from lift_point) or a Jet with
    trailing component axis.  Returns (g, g_inv, det_g) as jet values.
    """
    if isinstance(x, (list, tuple)):
        x = jets.jstack(list(x), axis=-1)
    g = m.eval_jets(x)
    det = jets.jet_det(g) if isinstance(g, jets.Jet) else np.linalg.det(g)
    base = det.value() if isinstance(det, jets.Jet) else det
    if np.any(base == 0):
        raise SingularMetricError("metric singular at evaluation point")
    ginv = jets.jet_matinv(g)
    return g, ginv, det


def christoffel(m, x):
    """Levi-Civita connection coefficients Γ^λ_{μν} at jet coordinates.

    One metric derivative is consumed: the input jets must have order ≥ 1 in
    their last block and the result lives at order reduced by one.
    """
    if isinstance(x, (list, tuple)):
        x = jets.jstack(list(x), axis=-1)
    if x.space.blocks[-1][1] < 1:
        raise OrderError("christoffel requires jet order ≥ 1")
    g, ginv, _ = metric_at(m, x)
    d = m.d
    dg = jets.jstack([jets.derivative(g, mu) for mu in range(d)], axis=-3)
    ginv_r = jets.truncate_last(ginv, x.space.blocks[-1][1] - 1)
    # bracket_{ρμν} = ∂_μ g_{ρν} + ∂_ν g_{ρμ} − ∂_ρ g_{μν};  dg[μ,ρ,ν] = ∂_μ g_{ρν}
    t1 = dg.swap(-3, -2)
    t2 = t1.swap(-1, -2)
    bracket = t1 + t2 - dg
    gam = (ginv_r.expand(-1).expand(-1) * bracket.expand(-4)).sum(-3) * 0.5
    return gam


def scalar_curvature(m, x):
    """Ricci scalar at jet coordinates (input order ≥ 2, output order − 2)."""
    if isinstance(x, (list, tuple)):
        x = jets.jstack(list(x), axis=-1)
    if x.space.blocks[-1][1] < 2:
        raise OrderError("scalar_curvature requires jet order ≥ 2")
    d = m.d
    gam = christoffel(m, x)
    dgam = jets.jstack([jets.derivative(gam, mu) for mu in range(d)], axis=-4)
    gam_t = jets.truncate_last(gam, gam.space.blocks[-1][1] - 1)
    _, ginv, _ = metric_at(m, x)
    ginv_t = jets.truncate_last(ginv, x.space.blocks[-1][1] - 2)

    def G(l, mu, nu):
        return gam_t[..., l, mu, nu]

    def dG(s, l, mu, nu):
        return dgam[..., s, l, mu, nu]

    ric = None
    for s in range(d):
        for n in range(d):
            # R_{σν} = ∂_μ Γ^μ_{νσ} − ∂_ν Γ^μ_{μσ} + Γ^μ_{μλ}Γ^λ_{νσ} − Γ^μ_{νλ}Γ^λ_{μσ}
            term = None
            for mu in range(d):
                t = dG(mu, mu, n, s) - dG(n, mu, mu, s)
                for lam in range(d):
                    t = t + G(mu, mu, lam) * G(lam, n, s) \
                        - G(mu, n, lam) * G(lam, mu, s)
                term = t if term is None else term + t
            contrib = ginv_t[..., s, n] * term
            ric = contrib if ric is None else ric + contrib
    return ric
