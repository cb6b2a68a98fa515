"""Hamiltonian geodesic flow, shooting BVP solver, and conjugate-point
diagnostics.

Geodesics are integrated in canonical form (position, covector momentum)
with fixed-step RK4; the linearized (variational) system is advanced with
the same tableau alongside the flow, so the stored propagator is exactly
the Jacobian Newton shooting needs.  Adaptive stepping is deliberately
avoided: step-size control is non-smooth and would poison jet
differentiation through the integrator.
"""

from dataclasses import dataclass, field

import numpy as np

from . import geometry, jets
from .errors import (ConjugatePointError, ConvergenceError, IntegrationError)

__all__ = [
    "GeodesicSolution", "ConjugateReport", "integrate_flow", "shoot_bvp",
    "jacobi_block", "check_conjugate_free", "hamiltonian_values",
]


def _e2_index(space, s, t):
    d = space.blocks[-1][0]
    alpha = tuple((1 if v == s else 0) + (1 if v == t else 0) for v in range(d))
    return jets.last_block_index(space, alpha)


def _metric_data(m, x, order):
    """Inverse-metric Taylor data at positions ``x`` (complex (..., d) array).

    Returns (ginv, dginv, ddginv, g) with derivative axes leading the matrix
    axes; ddginv is None unless order == 2.  Derivatives of the inverse come
    from ∂(g^{-1}) = -g^{-1} (∂g) g^{-1} on the extracted metric jets, which
    keeps the flow right-hand side in plain numpy.
    """
    d = m.d
    xhat = jets.lift_coords(x, order)
    gj = m.eval_jets(xhat)
    c = gj.c
    g0 = c[..., 0]
    dg = np.stack([c[..., 1 + s] for s in range(d)], axis=-3)
    if abs(np.linalg.det(g0)).min() == 0.0:
        raise IntegrationError("metric singular along the geodesic")
    ginv0 = np.linalg.inv(g0)
    gexp = ginv0[..., None, :, :]
    dginv = -(gexp @ dg @ gexp)
    ddginv = None
    if order >= 2:
        sp = xhat.space
        ddg = np.empty(dg.shape[:-3] + (d, d, d, d), dtype=np.complex128)
        for s in range(d):
            for t in range(d):
                fact = 2.0 if s == t else 1.0
                ddg[..., s, t, :, :] = c[..., _e2_index(sp, s, t)] * fact
        g2 = ginv0[..., None, None, :, :]
        m1 = -(g2 @ ddg @ g2)
        pt = dg @ gexp
        t2 = -(dginv[..., :, None, :, :] @ pt[..., None, :, :, :])
        ddginv = m1 + t2 + np.swapaxes(t2, -4, -3)
    return ginv0, dginv, ddginv, g0


def _gauge_matrix(gauge, x, xdot):
    """-xdot^mu A_mu(x) for the transport equation (float path)."""
    A = gauge.eval_A(x)  # (..., d, k, k)
    return -np.einsum("...m,...mij->...ij", xdot, A)


def _rhs_float(m, gauge, state, want_prop, want_H):
    x, p = state[0], state[1]
    order = 2 if want_prop else 1
    ginv0, dginv, ddginv, _ = _metric_data(m, x, order)
    pc = p[..., None]
    xdot = (ginv0 @ pc)[..., 0]
    z = (dginv @ pc[..., None, :, :])[..., 0]          # z[s,a] = ∂_s g^{ab} p_b
    pdot = -0.5 * (z @ pc)[..., 0]
    out = [xdot, pdot]
    idx = 2
    if want_prop:
        zz = (ddginv @ pc[..., None, None, :, :])[..., 0]
        A_blk = np.swapaxes(z, -1, -2)
        C_blk = -0.5 * (zz @ pc[..., None, :, :])[..., 0]
        D_blk = -z
        DF = np.concatenate([
            np.concatenate([A_blk, ginv0], axis=-1),
            np.concatenate([C_blk, D_blk], axis=-1),
        ], axis=-2)
        out.append(DF @ state[idx])
        idx += 1
    if want_H:
        out.append(_gauge_matrix(gauge, x, xdot) @ state[idx])
    return out


def _rhs_jet(m, gauge, state, want_H):
    x, p = state[0], state[1]
    d = m.d
    xhat = jets.lift_coords(x, 1)
    _, ginv, _ = geometry.metric_at(m, xhat)
    ginv0 = jets.last_coeff(ginv, 0)
    dginv = jets.jstack(
        [jets.last_coeff(ginv, 1 + s) for s in range(d)], axis=-3)
    xdot = (ginv0 * p.expand(-2)).sum(-1)
    pp = p.expand(-1) * p.expand(-2)
    pdot = -0.5 * (dginv * pp.expand(-3)).sum(-1).sum(-1)
    out = [xdot, pdot]
    if want_H:
        A = gauge.eval_A_jets(x)
        M = -(A * xdot.expand(-1).expand(-1)).sum(-3)
        out.append(jets.jet_matmul(M, state[2]))
    return out


def _integrate(m, x0, p0, times, *, gauge=None, want_prop=False, want_H=False,
               record_idx=None, on_record=None):
    """RK4 over an arbitrary sorted grid, optionally recording states.

    ``record_idx``: sorted array of grid indices to hand to ``on_record``.
    Returns the final state list.
    """
    is_jet = isinstance(x0, jets.Jet)
    state = [x0, p0]
    if want_prop:
        if is_jet:
            raise IntegrationError("propagator integration is float-path only")
        d = m.d
        eye = np.broadcast_to(np.eye(2 * d, dtype=np.complex128),
                              np.shape(x0)[:-1] + (2 * d, 2 * d)).copy()
        state.append(eye)
    if want_H:
        k = gauge.k
        if is_jet:
            state.append(jets.promote(
                x0.space, np.broadcast_to(np.eye(k, dtype=np.complex128),
                                          x0.lead_shape[:-1] + (k, k))))
        else:
            state.append(np.broadcast_to(
                np.eye(k, dtype=np.complex128),
                np.shape(x0)[:-1] + (k, k)).copy())

    def rhs(st):
        if is_jet:
            return _rhs_jet(m, gauge, st, want_H)
        return _rhs_float(m, gauge, st, want_prop, want_H)

    rec_pos = 0
    if record_idx is not None and len(record_idx) and record_idx[0] == 0:
        on_record(0, state)
        rec_pos = 1

    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        k1 = rhs(state)
        k2 = rhs([s + (0.5 * h) * k for s, k in zip(state, k1)])
        k3 = rhs([s + (0.5 * h) * k for s, k in zip(state, k2)])
        k4 = rhs([s + h * k for s, k in zip(state, k3)])
        state = [s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + dd)
                 for s, a, b, c, dd in zip(state, k1, k2, k3, k4)]
        if not is_jet and not np.isfinite(state[0]).all():
            raise IntegrationError(
                f"non-finite geodesic state at s={times[i + 1]:.6g} "
                "(blow-up or left the chart)")
        if record_idx is not None and rec_pos < len(record_idx) \
                and record_idx[rec_pos] == i + 1:
            if is_jet and not (state[0].isfinite() and state[1].isfinite()):
                raise IntegrationError("non-finite jet state in family integration")
            on_record(i + 1, state)
            rec_pos += 1
    return state


@dataclass
class ConjugateReport:
    """Outcome of the pairwise Jacobi-determinant scan along a geodesic."""
    passed: bool
    min_norm_det: float
    s_value: float
    t_value: float
    tol: float

    def as_dict(self):
        return {
            "passed": bool(self.passed),
            "min_norm_det": float(self.min_norm_det),
            "s": float(self.s_value),
            "t": float(self.t_value),
            "tol": float(self.tol),
        }


@dataclass
class GeodesicSolution:
    """Discrete affine-parametrized geodesic with momentum and propagator."""
    metric: geometry.MetricField
    x_start: np.ndarray
    x_end: np.ndarray
    v0: np.ndarray
    steps: int
    s: np.ndarray                      # (steps+1,)
    gamma: np.ndarray                  # (steps+1, d)
    p: np.ndarray                      # (steps+1, d)
    propagator: np.ndarray             # (steps+1, 2d, 2d)
    bvp_residual: float = 0.0

    @property
    def d(self):
        return self.gamma.shape[1]

    def velocity(self, idx=-1):
        """Contravariant velocity g^{-1} p at a grid node."""
        ginv0, _, _, _ = _metric_data(self.metric, self.gamma[idx] + 0j, 1)
        return np.real(ginv0 @ self.p[idx])


def _as_real(arr, what):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        if np.abs(arr.imag).max() > 1e-9:
            raise IntegrationError(f"unexpected imaginary part in {what}")
        arr = arr.real
    return arr.astype(np.float64)


def integrate_flow(m, x0, v0, steps):
    """Integrate the geodesic flow from (x0, v0) over s in [0, 1].

    The canonical equations dx/ds = g^{-1}p, dp/ds = -1/2 (∂g^{-1}) p p are
    advanced with fixed-step RK4 together with their linearization, giving
    the fundamental propagator Φ(s) = ∂(x(s),p(s))/∂(x0,p0) at every node.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.complex128)
    v0 = np.asarray(v0, dtype=np.complex128)
    d = m.d
    ginv0, _, _, g0 = _metric_data(m, x0, 1)
    p0 = g0 @ v0
    times = np.linspace(0.0, 1.0, steps + 1)
    gam = np.empty((steps + 1, d), dtype=np.complex128)
    mom = np.empty((steps + 1, d), dtype=np.complex128)
    prop = np.empty((steps + 1, 2 * d, 2 * d), dtype=np.complex128)

    def record(i, st):
        gam[i] = st[0]
        mom[i] = st[1]
        prop[i] = st[2]

    _integrate(m, x0, p0, times, want_prop=True,
               record_idx=np.arange(steps + 1), on_record=record)
    return GeodesicSolution(
        metric=m,
        x_start=_as_real(x0, "x_start"),
        x_end=_as_real(gam[-1], "x_end"),
        v0=_as_real(v0, "v0"),
        steps=steps,
        s=times,
        gamma=_as_real(gam, "gamma"),
        p=_as_real(mom, "momentum"),
        propagator=_as_real(prop, "propagator"),
    )


def shoot_bvp(m, x_start, x_end, v_guess=None, steps=200, tol=1e-10,
              max_iter=30):
    """Newton shooting for the geodesic two-point boundary value problem.

    Iterates on the initial velocity using the position-vs-initial-velocity
    block of the propagator as Jacobian.  A singular Jacobian signals a
    conjugate point between the endpoints and raises; among multiple
    connecting geodesics the solver converges to the one in the basin of
    ``v_guess`` (default: the chart straight line).
    """
    x_start = np.asarray(x_start, dtype=np.float64)
    x_end = np.asarray(x_end, dtype=np.float64)
    d = m.d
    v = np.asarray(v_guess if v_guess is not None else x_end - x_start,
                   dtype=np.float64)
    g0 = np.real(_metric_data(m, x_start + 0j, 1)[3])
    sol = None

    def jacobian(solution):
        jac = solution.propagator[-1][:d, d:] @ g0
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] < 1e-9 * max(sv[0], 1e-300):
            raise ConjugatePointError(
                "shooting Jacobian singular: endpoints conjugate along the "
                f"current geodesic (x_start={x_start.tolist()}, "
                f"x_end={x_end.tolist()})")
        return jac

    for it in range(max_iter):
        sol = integrate_flow(m, x_start, v, steps)
        res = sol.gamma[-1] - x_end
        rnorm = np.abs(res).max()
        if rnorm < tol:
            jacobian(sol)  # conjugate endpoints invalidate the solve even here
            sol.x_end = x_end.copy()
            sol.bvp_residual = float(rnorm)
            return sol
        v = v - np.linalg.solve(jacobian(sol), res)
    raise ConvergenceError(
        f"shooting did not converge in {max_iter} iterations "
        f"(last residual {np.abs(sol.gamma[-1] - x_end).max():.3e})")


def jacobi_block(sol, s_index, t_index):
    """∂γ(s)/∂γ̇(t) at fixed γ(t), from the relative propagator."""
    d = sol.d
    n = len(sol.s)
    if not (0 <= s_index < n and 0 <= t_index < n):
        raise IndexError("grid index out of range")
    phi_s = sol.propagator[s_index]
    phi_t = sol.propagator[t_index]
    try:
        rel = phi_s @ np.linalg.inv(phi_t)
    except np.linalg.LinAlgError as exc:
        raise IntegrationError("propagator numerically singular") from exc
    g_t = np.real(_metric_data(sol.metric, sol.gamma[t_index] + 0j, 1)[3])
    return rel[:d, d:] @ g_t


def check_conjugate_free(sol, tol=1e-6):
    """Scan all distinct grid pairs for vanishing Jacobi determinants.

    Evaluates |det ∂γ(s)/∂γ̇(t)| / |s-t|^d over the grid and reports the
    minimum; PASS iff it stays above ``tol``.  FAIL is a report state, not
    an exception.
    """
    d = sol.d
    n = len(sol.s)
    phi = sol.propagator
    phi_inv = np.linalg.inv(phi)
    g_t = np.real(np.stack([
        _metric_data(sol.metric, sol.gamma[t] + 0j, 1)[3] for t in range(n)]))
    # rel[s, t] = Φ(s) Φ(t)^{-1};  block = rel[:d, d:] @ g(γ(t))
    rel12 = np.einsum("sab,tbc->stac", phi[:, :d, :], phi_inv[:, :, d:])
    blocks = np.einsum("stac,tcb->stab", rel12, g_t)
    dets = np.linalg.det(blocks)
    svals = sol.s[:, None]
    tvals = sol.s[None, :]
    sep = svals - tvals
    with np.errstate(divide="ignore", invalid="ignore"):
        signed = dets / sep ** d
    np.fill_diagonal(signed, np.inf)
    norm = np.abs(signed)
    idx = np.unravel_index(np.argmin(norm), norm.shape)
    min_det = float(norm[idx])
    s_val, t_val = float(sol.s[idx[0]]), float(sol.s[idx[1]])
    # A sign change between scan-adjacent pairs brackets a true zero of the
    # continuum determinant, so the minimum over all (s, t) is 0 there even
    # when the grid straddles it.
    prod = signed[1:, :] * signed[:-1, :]
    srow = np.arange(1, n)[:, None]
    tcol = np.arange(n)[None, :]
    crossing = (prod < 0) & (srow - 1 > tcol)
    if crossing.any() and min_det >= tol:
        ci = np.unravel_index(np.argmax(crossing), crossing.shape)
        min_det = 0.0
        s_val = 0.5 * (sol.s[ci[0]] + sol.s[ci[0] + 1])
        t_val = float(sol.s[ci[1]])
    return ConjugateReport(
        passed=bool(min_det >= tol),
        min_norm_det=min_det,
        s_value=s_val,
        t_value=t_val,
        tol=float(tol),
    )


def hamiltonian_values(sol):
    """½ g^{μν} p_μ p_ν along the nodes (conserved up to integrator error)."""
    vals = []
    for i in range(len(sol.s)):
        ginv0 = np.real(_metric_data(sol.metric, sol.gamma[i] + 0j, 1)[0])
        vals.append(0.5 * sol.p[i] @ ginv0 @ sol.p[i])
    return np.array(vals)
