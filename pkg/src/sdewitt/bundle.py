"""Fiber-bundle data: sesquilinear form, gauge potential, and the modified
parallel transport along geodesics.

The bundle is a trivialized rank-k complex bundle over the chart; any
SO/Spin connection must be supplied inside the gauge potential A, so the
covariant derivative on fiber-valued scalars is the plain coordinate
derivative plus A.  The adjoint is taken with respect to a fixed hermitian
(possibly indefinite) form S: M† = S^{-1} M^H S.
"""

from dataclasses import dataclass

import numpy as np

from . import geodesic, geometry, jets
from .errors import ConfigError, IntegrationError

__all__ = ["FiberForm", "GaugeFields", "TransportResult", "adjoint",
           "parallel_transport"]


class FiberForm:
    """Nondegenerate hermitian sesquilinear form defining the adjoint."""

    def __init__(self, S):
        S = np.asarray(S, dtype=np.complex128)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ConfigError("form matrix must be square")
        if not np.allclose(S, S.conj().T, atol=1e-12):
            raise ConfigError("sesquilinear form must be hermitian")
        if abs(np.linalg.det(S)) < 1e-12:
            raise ConfigError("sesquilinear form must be nondegenerate")
        self.S = S
        self.S_inv = np.linalg.inv(S)
        self.k = S.shape[0]

    def adjoint(self, M):
        return adjoint(M, self)


def adjoint(M, form):
    """S^{-1} M^H S for a fiber matrix (ndarray or matrix of jets)."""
    if isinstance(M, jets.Jet):
        MH = M.conj().swap(-1, -2)
        return jets.jet_matmul(jets.jet_matmul(
            jets.promote(M.space, form.S_inv), MH), jets.promote(M.space, form.S))
    M = np.asarray(M, dtype=np.complex128)
    return form.S_inv @ np.swapaxes(M.conj(), -1, -2) @ form.S


def _parse_entry(entry, dim):
    """An entry is a {re, im} pair of expression strings (or a number)."""
    if isinstance(entry, dict):
        re_s, im_s = entry.get("re", "0"), entry.get("im", "0")
    elif isinstance(entry, (list, tuple)):
        re_s, im_s = entry
    elif isinstance(entry, (int, float)):
        re_s, im_s = repr(float(entry)), "0"
    elif isinstance(entry, complex):
        re_s, im_s = repr(entry.real), repr(entry.imag)
    elif isinstance(entry, str):
        re_s, im_s = entry, "0"
    else:
        raise ConfigError(f"cannot parse gauge entry {entry!r}")

    def as_ast(src):
        if isinstance(src, (int, float)):
            return geometry.Lit(float(src))
        return geometry.parse_expression(src, dim)

    return as_ast(re_s), as_ast(im_s)


def _is_zero(ast_pair):
    return all(isinstance(a, geometry.Lit) and a.v == 0.0 for a in ast_pair)


class GaugeFields:
    """Gauge potential A_mu(x) and scalar potential B(x), k×k complex.

    Entries are pairs of smooth real expressions (real and imaginary part).
    Validation enforces the hermiticity assumptions (A_mu)† = -A_mu and
    B† = B with respect to the supplied form, without which the transport
    symmetry identities fail.
    """

    def __init__(self, dim, k, A, B, form=None):
        self.d = int(dim)
        self.k = int(k)
        self.form = form if form is not None else FiberForm(np.eye(k))
        if len(A) != self.d:
            raise ConfigError("gauge potential must supply d component matrices")
        self.A_exprs = [[[_parse_entry(A[mu][i][j], self.d)
                          for j in range(k)] for i in range(k)]
                        for mu in range(self.d)]
        self.B_exprs = [[_parse_entry(B[i][j], self.d)
                         for j in range(k)] for i in range(k)]
        self.A_is_zero = all(
            _is_zero(self.A_exprs[mu][i][j])
            for mu in range(self.d) for i in range(k) for j in range(k))

    @classmethod
    def zero(cls, dim, k, form=None):
        z = [[{"re": "0", "im": "0"} for _ in range(k)] for _ in range(k)]
        return cls(dim, k, [z for _ in range(dim)],
                   [[{"re": "0", "im": "0"} for _ in range(k)] for _ in range(k)],
                   form=form)

    # -- evaluation --------------------------------------------------------
    def _eval_block(self, exprs, coords, lead, n_terms, space):
        k = self.k
        is_jet = space is not None
        shape = lead + ((k, k, n_terms) if is_jet else (k, k))
        out = np.zeros(shape, dtype=np.complex128)
        deg = 0
        for i in range(k):
            for j in range(k):
                re_a, im_a = exprs[i][j]
                for part, fac in ((re_a, 1.0), (im_a, 1j)):
                    if isinstance(part, geometry.Lit):
                        if part.v != 0.0:
                            if is_jet:
                                out[..., i, j, 0] += fac * part.v
                            else:
                                out[..., i, j] += fac * part.v
                        continue
                    v = geometry.eval_expression(part, coords)
                    if isinstance(v, jets.Jet):
                        out[..., i, j, :] += fac * v.c
                        deg = max(deg, v.deg)
                    elif is_jet:
                        out[..., i, j, 0] += fac * v
                    else:
                        out[..., i, j] += fac * v
        if not is_jet:
            return out
        return jets.Jet(space, out, deg)

    def eval_A(self, x):
        """A as a complex array (..., d, k, k) at float positions."""
        x = np.asarray(x, dtype=np.complex128)
        coords = [x[..., i] for i in range(self.d)]
        mats = [self._eval_block(self.A_exprs[mu], coords, x.shape[:-1],
                                 None, None)
                for mu in range(self.d)]
        return np.stack(mats, axis=-3)

    def eval_B(self, x):
        x = np.asarray(x, dtype=np.complex128)
        coords = [x[..., i] for i in range(self.d)]
        return self._eval_block(self.B_exprs, coords, x.shape[:-1], None, None)

    def eval_A_jets(self, x):
        """A as a jet matrix (..., d, k, k) at jet positions."""
        coords = [x[..., i] for i in range(self.d)]
        lead = x.lead_shape[:-1]
        n = x.space.n_terms
        mats = [self._eval_block(self.A_exprs[mu], coords, lead, n, x.space)
                for mu in range(self.d)]
        return jets.jstack(mats, axis=-3)

    def eval_B_jets(self, x):
        coords = [x[..., i] for i in range(self.d)]
        return self._eval_block(self.B_exprs, coords, x.lead_shape[:-1],
                                x.space.n_terms, x.space)

    # -- validation ----------------------------------------------------------
    def validate(self, sample_points, tol=1e-10):
        """Reject gauge data violating (A_mu)† = -A_mu or B† = B."""
        for x in sample_points:
            A = self.eval_A(np.asarray(x, dtype=np.float64))
            B = self.eval_B(np.asarray(x, dtype=np.float64))
            for mu in range(self.d):
                if np.abs(adjoint(A[mu], self.form) + A[mu]).max() > tol:
                    raise ConfigError(
                        f"A_{mu} is not anti-hermitian w.r.t. the form at "
                        f"sample point {np.asarray(x).tolist()}")
            if np.abs(adjoint(B, self.form) - B).max() > tol:
                raise ConfigError(
                    f"B is not hermitian w.r.t. the form at sample point "
                    f"{np.asarray(x).tolist()}")
        return True


@dataclass
class TransportResult:
    """Endpoint values of the modified parallel transport."""
    H: np.ndarray        # H(x, x'), transport from start fiber to end fiber
    H_inv: np.ndarray    # H(x', x), transport along the reversed geodesic

    def product_defect(self):
        k = self.H.shape[-1]
        return float(np.abs(self.H @ self.H_inv - np.eye(k)).max())


def parallel_transport(sol, gauge):
    """Solve dH/ds = -γ̇^μ A_μ(γ) H along a geodesic solution.

    The transport is co-integrated with the flow on the same RK4 grid (the
    stage positions must be consistent, so the stored nodes alone are not
    enough).  The reverse transport re-integrates along the reversed
    geodesic, giving H(x', x) independently of H(x, x').
    """
    m = sol.metric
    steps = sol.steps
    times = np.linspace(0.0, 1.0, steps + 1)

    def run(x0, p0):
        rec = {}

        def record(i, st):
            rec["H"] = st[2]

        geodesic._integrate(m, np.asarray(x0, dtype=np.complex128),
                            np.asarray(p0, dtype=np.complex128), times,
                            gauge=gauge, want_H=True,
                            record_idx=np.array([steps]), on_record=record)
        H = rec["H"]
        if not np.isfinite(H).all():
            raise IntegrationError("transport blew up along the geodesic")
        return H

    H_fwd = run(sol.x_start, sol.p[0])
    H_rev = run(sol.x_end, -sol.p[-1])
    return TransportResult(H=H_fwd, H_inv=H_rev)
