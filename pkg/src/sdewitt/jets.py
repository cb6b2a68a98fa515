"""Truncated multivariate Taylor ("jet") arithmetic.

A :class:`Jet` stores the Taylor coefficients ``∂^α f / α!`` of a smooth
function at a base point, for every multi-index α inside a fixed truncation.
Truncations are products of per-block total-degree caps held by a
:class:`JetSpace`: a single block ``(d, N)`` is the usual "all partials of
total degree ≤ N in d variables"; appending further blocks realizes nested
(jet-over-jet) differentiation as one flat coefficient algebra, which is how
second-order operators get applied to functions that are themselves defined
through boundary-value solves.

Coefficients are complex128 throughout.  Arbitrary leading axes on the
coefficient array broadcast like numpy, so a "matrix of jets" is just a Jet
whose coefficient array has two extra leading axes; hot products run through
:mod:`sdewitt._backend`.
"""

import math
from functools import lru_cache

import numpy as np

from . import _backend
from .errors import DomainError, OrderError, SpaceMismatchError

__all__ = [
    "JetSpace", "Jet", "jetspace", "lift_point", "lift_coords", "promote",
    "elementary", "extract", "derivative", "truncate_last", "jstack",
    "jet_matmul", "jet_matinv", "jet_det", "jet_transpose", "jet_conj",
    "value", "sin", "cos", "tan", "exp", "ln", "sqrt", "sinh", "cosh",
    "atan", "recip",
]

_MAX_TABLE = 4_000_000  # triples; guards accidental huge truncations


def _enum_block(dim, order):
    """Multi-indices of ``dim`` variables with total degree ≤ order, graded lex."""
    out = []
    for total in range(order + 1):
        stack = [((), total)]
        level = []

        def rec(prefix, rem, slots):
            if slots == 1:
                level.append(prefix + (rem,))
                return
            for v in range(rem, -1, -1):
                rec(prefix + (v,), rem - v, slots - 1)

        rec((), total, dim)
        out.extend(level)
    return out


class _MulTable:
    """Index triples (i, j, k) with α_i + α_j = α_k, grouped by degree pair."""

    __slots__ = ("ti", "tj", "tk", "glo", "ghi", "gdi", "gdj", "_windows",
                 "deg")

    def __init__(self, ti, tj, tk, deg):
        di = deg[ti]
        dj = deg[tj]
        order = np.lexsort((tj, ti, dj, di))
        ti, tj, tk, di, dj = ti[order], tj[order], tk[order], di[order], dj[order]
        pair = di.astype(np.int64) * (deg.max() + 1) + dj
        bounds = np.flatnonzero(np.diff(pair)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [len(ti)]))
        self.ti = np.ascontiguousarray(ti, dtype=np.int64)
        self.tj = np.ascontiguousarray(tj, dtype=np.int64)
        self.tk = np.ascontiguousarray(tk, dtype=np.int64)
        self.glo = np.ascontiguousarray(starts, dtype=np.int64)
        self.ghi = np.ascontiguousarray(ends, dtype=np.int64)
        self.gdi = np.ascontiguousarray(di[starts], dtype=np.int64)
        self.gdj = np.ascontiguousarray(dj[starts], dtype=np.int64)
        self.deg = deg
        self._windows = {}

    def window(self, da, db):
        """Numpy-fallback view: triples with deg_i ≤ da, deg_j ≤ db, k-sorted."""
        key = (int(da), int(db))
        win = self._windows.get(key)
        if win is None:
            mask = (self.deg[self.ti] <= da) & (self.deg[self.tj] <= db)
            ii, jj, kk = self.ti[mask], self.tj[mask], self.tk[mask]
            order = np.argsort(kk, kind="stable")
            ii, jj, kk = ii[order], jj[order], kk[order]
            starts = np.concatenate(([0], np.flatnonzero(np.diff(kk)) + 1)) \
                if kk.size else np.zeros(0, dtype=np.int64)
            cols = kk[starts] if kk.size else np.zeros(0, dtype=np.int64)
            win = (ii, jj, starts, cols)
            self._windows[key] = win
        return win


class JetSpace:
    """Interned truncation descriptor: a tuple of (dim, order) blocks."""

    _registry = {}

    def __new__(cls, blocks):
        blocks = tuple((int(d), int(n)) for d, n in blocks)
        cached = cls._registry.get(blocks)
        if cached is not None:
            return cached
        self = super().__new__(cls)
        self.blocks = blocks
        for d, n in blocks:
            if d < 1 or n < 0:
                raise ValueError(f"invalid jet block {(d, n)}")
        self.nvars = sum(d for d, _ in blocks)
        self.total_order = sum(n for _, n in blocks)
        self._block_alphas = [_enum_block(d, n) for d, n in blocks]
        self._block_sizes = [len(a) for a in self._block_alphas]
        self.n_terms = int(np.prod(self._block_sizes)) if blocks else 1
        # global index = block-0 slowest, last block fastest
        alphas = [()]
        degs = np.zeros(1, dtype=np.int64)
        for ba in self._block_alphas:
            bd = np.array([sum(a) for a in ba], dtype=np.int64)
            alphas = [p + a for p in alphas for a in ba]
            degs = (degs[:, None] + bd[None, :]).ravel()
        self.alphas = alphas
        self.deg_of = degs
        self.index_of = {a: i for i, a in enumerate(alphas)}
        self._mul = None
        self._deriv_maps = {}
        self._trunc_maps = {}
        cls._registry[blocks] = self
        return self

    def __repr__(self):
        return f"JetSpace{self.blocks}"

    def __reduce__(self):
        return (JetSpace, (self.blocks,))

    @property
    def parent(self):
        if not self.blocks:
            raise ValueError("empty space has no parent")
        return JetSpace(self.blocks[:-1])

    def extend(self, dim, order):
        return JetSpace(self.blocks + ((dim, order),))

    def with_last_order(self, order):
        d, _ = self.blocks[-1]
        return JetSpace(self.blocks[:-1] + ((d, order),))

    @property
    def mul_table(self):
        if self._mul is None:
            ti = np.zeros(1, dtype=np.int64)
            tj = np.zeros(1, dtype=np.int64)
            tk = np.zeros(1, dtype=np.int64)
            for ba, nb in zip(self._block_alphas, self._block_sizes):
                idx = {a: i for i, a in enumerate(ba)}
                bi, bj, bk = [], [], []
                for i, ai in enumerate(ba):
                    for j, aj in enumerate(ba):
                        s = tuple(x + y for x, y in zip(ai, aj))
                        k = idx.get(s)
                        if k is not None:
                            bi.append(i)
                            bj.append(j)
                            bk.append(k)
                bi = np.array(bi, dtype=np.int64)
                bj = np.array(bj, dtype=np.int64)
                bk = np.array(bk, dtype=np.int64)
                ti = (ti[:, None] * nb + bi[None, :]).ravel()
                tj = (tj[:, None] * nb + bj[None, :]).ravel()
                tk = (tk[:, None] * nb + bk[None, :]).ravel()
                if ti.size > _MAX_TABLE:
                    raise MemoryError(
                        f"jet multiplication table too large for {self!r}")
            self._mul = _MulTable(ti, tj, tk, self.deg_of)
        return self._mul

    def var_index(self, block, var):
        """Global index of the degree-1 multi-index e_var in the given block."""
        d, n = self.blocks[block]
        if n < 1:
            raise OrderError(f"block {block} of {self!r} has order 0")
        local = self._block_alphas[block].index(
            tuple(1 if t == var else 0 for t in range(d)))
        idx = local
        for b in range(block % len(self.blocks) + 1, len(self.blocks)):
            idx *= self._block_sizes[b]
        return idx

    def deriv_map(self, block, var):
        """Gather indices and factors realizing ∂/∂(block var) structurally.

        Returns (target_space, gather, scale): the derivative of Taylor
        coefficients lands in the space whose ``block`` order is one lower.
        """
        block = block % len(self.blocks)
        key = (block, var)
        cached = self._deriv_maps.get(key)
        if cached is not None:
            return cached
        d, n = self.blocks[block]
        if n < 1:
            raise OrderError("cannot differentiate an order-0 block")
        tgt = JetSpace(tuple(
            (bd, bn - 1) if b == block else (bd, bn)
            for b, (bd, bn) in enumerate(self.blocks)))
        off = sum(self.blocks[b][0] for b in range(block))
        gather = np.empty(tgt.n_terms, dtype=np.int64)
        scale = np.empty(tgt.n_terms, dtype=np.float64)
        for i, alpha in enumerate(tgt.alphas):
            src = list(alpha)
            src[off + var] += 1
            gather[i] = self.index_of[tuple(src)]
            scale[i] = src[off + var]
        cached = (tgt, gather, scale)
        self._deriv_maps[key] = cached
        return cached

    def trunc_map(self, order):
        """Gather indices embedding the last block truncated to ``order``."""
        cached = self._trunc_maps.get(order)
        if cached is not None:
            return cached
        tgt = self.with_last_order(order)
        gather = np.array([self.index_of[a] for a in tgt.alphas], dtype=np.int64)
        cached = (tgt, gather)
        self._trunc_maps[order] = cached
        return cached


def jetspace(dim, order):
    """Single-block truncation: all partials of total degree ≤ order."""
    return JetSpace(((dim, order),))


_EMPTY = JetSpace(())


class Jet:
    """A truncated Taylor value; immutable by convention.

    ``c`` has shape ``(*lead, space.n_terms)``; leading axes broadcast.
    ``deg`` is a conservative upper bound on the total degree of nonzero
    coefficients (-1 for identically zero), used to prune products.
    """

    __slots__ = ("space", "c", "deg")
    __array_ufunc__ = None  # force ndarray ops to defer to Jet reflected ops
    __array_priority__ = 100

    def __init__(self, space, c, deg=None):
        self.space = space
        self.c = c
        self.deg = space.total_order if deg is None else min(deg, space.total_order)

    # -- basic accessors -------------------------------------------------
    @property
    def lead_shape(self):
        return self.c.shape[:-1]

    def value(self):
        """Degree-0 coefficient (the base value), as a complex array/scalar."""
        return self.c[..., 0]

    def copy(self):
        return Jet(self.space, self.c.copy(), self.deg)

    def __getitem__(self, key):
        return Jet(self.space, self.c[np.index_exp[key] + (slice(None),)], self.deg)

    def expand(self, axis):
        """Insert a broadcast axis among the leading axes."""
        ax = axis if axis >= 0 else axis - 1
        return Jet(self.space, np.expand_dims(self.c, ax), self.deg)

    def sum(self, axis):
        ax = axis if axis >= 0 else axis - 1
        return Jet(self.space, self.c.sum(axis=ax), self.deg)

    def swap(self, ax1, ax2):
        a1 = ax1 if ax1 >= 0 else ax1 - 1
        a2 = ax2 if ax2 >= 0 else ax2 - 1
        return Jet(self.space, np.swapaxes(self.c, a1, a2), self.deg)

    def conj(self):
        """Complex conjugate (variables are real, so conjugation commutes)."""
        return Jet(self.space, np.conj(self.c), self.deg)

    def isfinite(self):
        return bool(np.isfinite(self.c).all())

    # -- arithmetic ------------------------------------------------------
    def _check(self, other):
        if other.space is not self.space:
            raise SpaceMismatchError(
                f"jet spaces differ: {self.space!r} vs {other.space!r}")

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return _mul_jets(self, other)
        return _scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return Jet(self.space, -self.c, self.deg)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __truediv__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return _mul_jets(self, recip(other))
        arr = np.asarray(other, dtype=np.complex128)
        return _scale(self, 1.0 / arr)

    def __rtruediv__(self, other):
        return _scale(recip(self), other)

    def __matmul__(self, other):
        return jet_matmul(self, other)

    def __pow__(self, r):
        return _jet_pow(self, r)

    def __repr__(self):
        return (f"Jet({self.space!r}, lead={self.lead_shape}, "
                f"value≈{np.round(self.value(), 6)})")


def _radd_impl(self, other):
    # addition with scalars/ndarrays touches only the degree-0 coefficient
    other = np.asarray(other, dtype=np.complex128)
    lead = np.broadcast_shapes(self.lead_shape, other.shape)
    c = np.zeros(lead + (self.space.n_terms,), dtype=np.complex128)
    c += self.c
    c[..., 0] += other
    return Jet(self.space, c, max(self.deg, 0))


def _add_impl(self, other):
    if isinstance(other, Jet):
        self._check(other)
        return Jet(self.space, self.c + other.c, max(self.deg, other.deg))
    return _radd_impl(self, other)


Jet.__add__ = _add_impl
Jet.__radd__ = _radd_impl


def _scale(j, arr):
    """Multiply a jet by a scalar/ndarray factor (broadcast over leading axes)."""
    arr = np.asarray(arr, dtype=np.complex128)
    return Jet(j.space, j.c * arr[..., None], j.deg)


def _mul_jets(a, b):
    space = a.space
    if a.deg < 0 or b.deg < 0:
        lead = np.broadcast_shapes(a.lead_shape, b.lead_shape)
        return Jet(space, np.zeros(lead + (space.n_terms,), dtype=np.complex128), -1)
    if a.deg == 0:
        return _scale(b, a.c[..., 0])
    if b.deg == 0:
        return _scale(a, b.c[..., 0])
    n = space.n_terms
    if a.c.shape == b.c.shape:
        lead = a.lead_shape
        a2 = np.ascontiguousarray(a.c).reshape(-1, n)
        b2 = np.ascontiguousarray(b.c).reshape(-1, n)
    else:
        lead = np.broadcast_shapes(a.lead_shape, b.lead_shape)
        a2 = np.ascontiguousarray(np.broadcast_to(a.c, lead + (n,))).reshape(-1, n)
        b2 = np.ascontiguousarray(np.broadcast_to(b.c, lead + (n,))).reshape(-1, n)
    out = np.zeros((a2.shape[0], n), dtype=np.complex128)
    _backend.mul_into(a2, b2, out, space.mul_table, a.deg, b.deg)
    return Jet(space, out.reshape(lead + (n,)), a.deg + b.deg)


def promote(space, values, deg=0):
    """Embed plain complex values as degree-0 jets of ``space``."""
    arr = np.asarray(values, dtype=np.complex128)
    c = np.zeros(arr.shape + (space.n_terms,), dtype=np.complex128)
    c[..., 0] = arr
    return Jet(space, c, deg)


def promote_last(j, ext_space):
    """Embed a jet of the parent space into ``ext_space`` (appended block)."""
    if ext_space.parent is not j.space:
        raise SpaceMismatchError("ext_space must extend the jet's space by one block")
    nb = ext_space.n_terms // j.space.n_terms
    c = np.zeros(j.lead_shape + (j.space.n_terms, nb), dtype=np.complex128)
    c[..., 0] = j.c
    return Jet(ext_space, c.reshape(j.lead_shape + (ext_space.n_terms,)), j.deg)


def lift_coords(x, order):
    """Attach a fresh coordinate block to a position vector.

    ``x`` is either a complex array of shape (*lead, d) or a Jet with a
    trailing component axis of length d.  Returns a Jet over the extended
    space whose last block carries unit first-order coefficients, i.e. the
    point ``x + t`` with t the new block's variables.
    """
    if isinstance(x, Jet):
        d = x.c.shape[-2]
        ext = x.space.extend(d, order)
        base = promote_last(x, ext)
    else:
        x = np.asarray(x, dtype=np.complex128)
        d = x.shape[-1]
        ext = JetSpace(((d, order),))
        base = promote(ext, x)
    c = base.c.copy()
    for i in range(d):
        c[..., i, ext.var_index(-1, i)] += 1.0
    return Jet(ext, c, max(base.deg, 1))


def lift_point(x, order):
    """Lift a real point to coordinate jets: the i-th jet is x_i + t_i."""
    if order < 0:
        raise OrderError("jet order must be ≥ 0")
    x = np.atleast_1d(np.asarray(x, dtype=np.complex128))
    lifted = lift_coords(x, order)
    return [lifted[..., i] for i in range(x.shape[-1])]


def last_coeff(j, local_idx):
    """Taylor coefficient of the last block at local index, as a parent jet."""
    parent = j.space.parent
    nb = j.space.n_terms // parent.n_terms
    view = j.c.reshape(j.lead_shape + (parent.n_terms, nb))
    return Jet(parent, np.ascontiguousarray(view[..., local_idx]), j.deg)


def last_block_index(space, alpha):
    """Local index of a multi-index within the last block of ``space``."""
    return space._block_alphas[-1].index(tuple(alpha))


def collapse_value(j):
    """Drop the last block, keeping its degree-0 part."""
    return last_coeff(j, 0)


def truncate_last(j, order):
    tgt, gather = j.space.trunc_map(order)
    return Jet(tgt, np.ascontiguousarray(j.c[..., gather]), j.deg)


def derivative(j, var, block=-1):
    """Structural derivative w.r.t. one variable of one block.

    The result lives in the space whose block order is reduced by one,
    mirroring that one order of the truncation is consumed.
    """
    tgt, gather, scale = j.space.deriv_map(block, var)
    return Jet(tgt, j.c[..., gather] * scale, max(j.deg - 1, -1))


def extract(j, alpha):
    """∂^α of the represented function at the base point (coeff times α!)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != j.space.nvars:
        raise OrderError(
            f"multi-index length {len(alpha)} != {j.space.nvars} variables")
    idx = j.space.index_of.get(alpha)
    if idx is None:
        raise OrderError(f"multi-index {alpha} outside truncation of {j.space!r}")
    fact = 1.0
    for a in alpha:
        fact *= math.factorial(a)
    out = j.c[..., idx] * fact
    return complex(out) if out.ndim == 0 else out


def value(x):
    """Base value of a jet, or the argument itself for plain arrays."""
    return x.value() if isinstance(x, Jet) else x


# -- reciprocal / powers ------------------------------------------------

def _newton_iters(order):
    return 0 if order <= 0 else int(math.ceil(math.log2(order + 1)))


def recip(j):
    if not isinstance(j, Jet):
        return 1.0 / np.asarray(j)
    base = j.value()
    if np.any(base == 0):
        raise DomainError("division by a jet with zero base value")
    y = promote(j.space, 1.0 / base)
    for _ in range(_newton_iters(j.space.total_order if j.deg != 0 else 0)):
        y = y * (2.0 - j * y)
    return y


def _jet_pow(j, r):
    if isinstance(r, (int, np.integer)) or (
            isinstance(r, float) and r.is_integer()):
        n = int(r)
        if n < 0:
            return _jet_pow(recip(j), -n)
        out = promote(j.space, np.ones(j.lead_shape))
        basepow = j
        while n:
            if n & 1:
                out = out * basepow
            n >>= 1
            if n:
                basepow = basepow * basepow
        return out
    return elementary("pow", j, exponent=r)


# -- elementary functions ------------------------------------------------

def _cycle_series(fns, signs, a0, order):
    coeffs = []
    fact = 1.0
    for m in range(order + 1):
        if m:
            fact *= m
        f = fns[m % len(fns)]
        s = signs[m % len(signs)]
        coeffs.append(s * f(a0) / fact)
    return coeffs


def _real_branch_error(name, a0, strict_positive):
    real = np.isclose(a0.imag, 0.0, atol=1e-300)
    bad = (a0.real <= 0) if strict_positive else (a0.real < 0)
    if np.any(real & bad):
        raise DomainError(f"{name} off the real branch (base value not positive)")


def _series_ln(a0, order):
    if np.any(a0 == 0):
        raise DomainError("ln of a jet with zero base value")
    _real_branch_error("ln", a0, strict_positive=True)
    coeffs = [np.log(a0)]
    p = np.ones_like(a0)
    for m in range(1, order + 1):
        p = p / a0
        coeffs.append(((-1.0) ** (m + 1)) * p / m)
    return coeffs


def _series_sqrt(a0, order):
    if np.any(a0 == 0):
        raise DomainError("sqrt of a jet with zero base value")
    _real_branch_error("sqrt", a0, strict_positive=True)
    coeffs = [np.sqrt(a0)]
    for m in range(1, order + 1):
        coeffs.append(coeffs[-1] * (1.5 / m - 1.0) / a0)
    return coeffs


def _series_pow(a0, order, r):
    if np.any(a0 == 0):
        raise DomainError("non-integer power of a jet with zero base value")
    _real_branch_error("pow", a0, strict_positive=True)
    coeffs = [np.power(a0, complex(r))]
    for m in range(1, order + 1):
        coeffs.append(coeffs[-1] * ((r - m + 1.0) / m) / a0)
    return coeffs


def _series_recip(a0, order):
    if np.any(a0 == 0):
        raise DomainError("division by a jet with zero base value")
    coeffs = [1.0 / a0]
    for m in range(1, order + 1):
        coeffs.append(-coeffs[-1] / a0)
    return coeffs


def _series_atan(a0, order):
    den = 1.0 + a0 * a0
    if np.any(den == 0):
        raise DomainError("atan of a jet with base value ±i")
    coeffs = [np.arctan(a0.real) + 0j if np.all(a0.imag == 0) else np.arctan(a0)]
    if order >= 1:
        coeffs.append(1.0 / den)
    for m in range(1, order):
        nxt = -(2.0 * a0 * m * coeffs[m] + (m - 1) * coeffs[m - 1]) / (den * (m + 1))
        coeffs.append(nxt)
    return coeffs


_SERIES = {
    "exp": lambda a0, n: _cycle_series([np.exp], [1.0], a0, n),
    "sin": lambda a0, n: _cycle_series([np.sin, np.cos], [1.0, 1.0, -1.0, -1.0],
                                       a0, n),
    "cos": lambda a0, n: _cycle_series([np.cos, np.sin], [1.0, -1.0, -1.0, 1.0],
                                       a0, n),
    "sinh": lambda a0, n: _cycle_series([np.sinh, np.cosh], [1.0], a0, n),
    "cosh": lambda a0, n: _cycle_series([np.cosh, np.sinh], [1.0], a0, n),
    "ln": _series_ln,
    "sqrt": _series_sqrt,
    "recip": _series_recip,
    "atan": _series_atan,
}


def elementary(name, j, exponent=None):
    """Compose an elementary function with a jet (Taylor composition)."""
    if name == "neg":
        return -j
    if not isinstance(j, Jet):
        arr = np.asarray(j, dtype=np.complex128)
        return elementary(name, promote(_EMPTY, arr)).value()
    if name == "tan":
        return elementary("sin", j) / elementary("cos", j)
    order = j.space.total_order
    a0 = j.value()
    if name == "pow":
        coeffs = _series_pow(a0, order, exponent)
    else:
        gen = _SERIES.get(name)
        if gen is None:
            raise DomainError(f"unknown elementary function {name!r}")
        coeffs = gen(a0, order)
    if j.deg == 0:
        return promote(j.space, coeffs[0] * np.ones(j.lead_shape))
    z = j - a0  # nilpotent part
    acc = promote(j.space, coeffs[order] * np.ones(j.lead_shape))
    for m in range(order - 1, -1, -1):
        acc = acc * z + coeffs[m]
    return acc


def sin(x):
    return elementary("sin", x) if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return elementary("cos", x) if isinstance(x, Jet) else np.cos(x)


def tan(x):
    return elementary("tan", x) if isinstance(x, Jet) else np.tan(x)


def exp(x):
    return elementary("exp", x) if isinstance(x, Jet) else np.exp(x)


def ln(x):
    return elementary("ln", x) if isinstance(x, Jet) else np.log(x)


def sqrt(x):
    return elementary("sqrt", x) if isinstance(x, Jet) else np.sqrt(x)


def sinh(x):
    return elementary("sinh", x) if isinstance(x, Jet) else np.sinh(x)


def cosh(x):
    return elementary("cosh", x) if isinstance(x, Jet) else np.cosh(x)


def atan(x):
    return elementary("atan", x) if isinstance(x, Jet) else np.arctan(x)


# -- small linear algebra over jets ---------------------------------------

def jstack(jets, axis=0):
    """Stack jets over a new leading axis."""
    space = jets[0].space
    for j in jets[1:]:
        if j.space is not space:
            raise SpaceMismatchError("jstack requires a common jet space")
    ax = axis if axis >= 0 else axis - 1
    cs = np.broadcast_arrays(*[j.c for j in jets])
    return Jet(space, np.stack(cs, axis=ax), max(j.deg for j in jets))


def jet_matmul(a, b):
    """Matrix product over the trailing two leading axes."""
    if isinstance(a, Jet) or isinstance(b, Jet):
        aj = a if isinstance(a, Jet) else promote(b.space, a)
        bj = b if isinstance(b, Jet) else promote(a.space, b)
        return (aj.expand(-1) * bj.expand(-3)).sum(-2)
    return np.matmul(a, b)


def jet_transpose(a):
    return a.swap(-1, -2) if isinstance(a, Jet) else np.swapaxes(a, -1, -2)


def jet_conj(a):
    return a.conj() if isinstance(a, Jet) else np.conj(a)


def jet_matinv(mat):
    """Inverse of a matrix of jets via Newton iteration from the base inverse."""
    if not isinstance(mat, Jet):
        return np.linalg.inv(mat)
    base_inv = np.linalg.inv(mat.value())
    x = promote(mat.space, base_inv)
    if mat.deg <= 0:
        return x
    m = mat.c.shape[-2]
    eye2 = 2.0 * np.eye(m)
    for _ in range(_newton_iters(mat.space.total_order)):
        x = jet_matmul(x, eye2 - jet_matmul(mat, x))
    return x


def jet_det(mat):
    """Determinant of a small matrix of jets (cofactor expansion, m ≤ 4)."""
    if not isinstance(mat, Jet):
        return np.linalg.det(mat)
    m = mat.c.shape[-2]
    if m == 1:
        return mat[..., 0, 0]

    def minor_det(rows, cols):
        if len(rows) == 1:
            return mat[..., rows[0], cols[0]]
        acc = None
        r = rows[0]
        for t, cc in enumerate(cols):
            sub = minor_det(rows[1:], cols[:t] + cols[t + 1:])
            term = mat[..., r, cc] * sub
            if t % 2:
                term = -term
            acc = term if acc is None else acc + term
        return acc

    if m > 4:
        raise OrderError("jet_det supports matrices up to 4x4")
    idx = tuple(range(m))
    return minor_det(idx, idx)
