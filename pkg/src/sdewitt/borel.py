"""Smooth function of λ with prescribed (possibly divergent) Taylor data.

Given coefficient functions h_n on a compact chart box, builds
H(x, λ) = Σ iⁿ χ(λ/λ_n) λⁿ h_n(x) with a smooth plateau cutoff χ and
scales λ_n = min(1/(n+1), 1/L_n), where L_n bounds the coefficient
derivatives up to order n.  The scale-dependent cutoffs tame factorial
coefficient growth while leaving every finite Taylor order at λ = 0
untouched; a truncation-agreement checker certifies that behaviour.
"""

import numpy as np

from .errors import ConfigError

__all__ = ["build_cutoff", "estimate_sup", "BorelBuilder"]


def _bump(u):
    """exp(-1/u) for u > 0, else 0 (the standard smooth step ingredient)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def build_cutoff():
    """Smooth χ with χ = 1 on [-1/2, 1/2] and χ = 0 outside (-1, 1)."""

    def chi(t):
        t = np.abs(np.asarray(t, dtype=np.float64))
        a = _bump(2.0 * (1.0 - t))
        b = _bump(2.0 * t - 1.0)
        scalar = a.ndim == 0
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        out = np.zeros_like(a)
        nz = (a + b) > 0
        out[nz] = a[nz] / (a[nz] + b[nz])
        out[~nz] = 0.0
        return float(out[0]) if scalar else out

    return chi


def _fd_derivative(values, spacings, axis):
    """Central differences (one-sided at the box edges)."""
    return np.gradient(values, spacings, axis=axis, edge_order=2)


def estimate_sup(values, spacings, n):
    """Grid estimate of sup over |α| ≤ n of |∂^α h| times a safety factor.

    The true sup over the open box is not computable; overestimating it
    only shrinks λ_n, which preserves every bound, hence the 1.25 factor.
    """
    values = np.asarray(values, dtype=np.complex128)
    ndim = values.ndim
    if n > 0 and min(values.shape) < 2 * n + 1:
        raise ConfigError(
            f"grid too coarse for derivative order {n} "
            f"(need at least {2 * n + 1} points per axis)")
    best = float(np.abs(values).max())
    frontier = {(): values}
    for _ in range(n):
        nxt = {}
        for alpha, arr in frontier.items():
            for ax in range(ndim):
                key = tuple(sorted(alpha + (ax,)))
                if key in nxt:
                    continue
                der = _fd_derivative(arr, spacings[ax], ax)
                nxt[key] = der
                best = max(best, float(np.abs(der).max()))
        frontier = nxt
    return 1.25 * best


class BorelBuilder:
    """Borel-style constructor over a gridded chart box.

    ``h_fns``: list of callables (or gridded arrays) giving the coefficient
    functions; ``box``: list of (lo, hi) per axis; ``grid_n``: points per
    axis used both for sampling and the sup estimates.
    """

    def __init__(self, h_fns, box, grid_n=64):
        self.box = [(float(lo), float(hi)) for lo, hi in box]
        self.axes = [np.linspace(lo, hi, grid_n) for lo, hi in self.box]
        self.spacings = [ax[1] - ax[0] for ax in self.axes]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.h = []
        for h in h_fns:
            if callable(h):
                self.h.append(np.asarray(h(*mesh), dtype=np.complex128)
                              + np.zeros(mesh[0].shape, dtype=np.complex128))
            else:
                arr = np.asarray(h, dtype=np.complex128)
                if arr.shape != mesh[0].shape:
                    raise ConfigError("gridded coefficient shape mismatch")
                self.h.append(arr)
        self.chi = build_cutoff()
        self.L = [estimate_sup(self.h[n], self.spacings, n)
                  for n in range(len(self.h))]
        self.lam = [min(1.0 / (n + 1), 1.0 / L) if L > 0 else 1.0 / (n + 1)
                    for n, L in enumerate(self.L)]

    @property
    def n_terms(self):
        return len(self.h)

    def _grid_index(self, x):
        idx = []
        for c, ax in zip(np.atleast_1d(x), self.axes):
            i = int(np.argmin(np.abs(ax - c)))
            if abs(ax[i] - c) > 1e-9 * max(1.0, abs(c)):
                raise ConfigError(f"{x} is not a grid point of the chart box")
            idx.append(i)
        return tuple(idx)

    def coefficient(self, x, n):
        return self.h[n][self._grid_index(x)]

    def sum_at(self, x, lam, n_trunc=None):
        """Σ_{n≤N} iⁿ χ(λ/λ_n) λⁿ h_n(x).

        For fixed λ ≠ 0 only finitely many cutoffs are nonzero, so the
        truncation is exact once N passes the last surviving scale.
        """
        n_trunc = self.n_terms - 1 if n_trunc is None else n_trunc
        if n_trunc >= self.n_terms:
            raise ConfigError("truncation order exceeds available coefficients")
        idx = self._grid_index(x)
        out = 0.0 + 0.0j
        for n in range(n_trunc + 1):
            cut = self.chi(lam / self.lam[n])
            if cut == 0.0:
                continue
            out += (1j ** n) * cut * lam ** n * self.h[n][idx]
        return out

    def taylor_match_check(self, x, N, lam_grid):
        """max over the grid of |sum − Taylor_N| / λ^{N+1}.

        Valid on 0 < λ < ½·min_{n≤N} λ_n, where every retained cutoff is
        exactly one; a finite value certifies agreement to order N.
        """
        lam_max = 0.5 * min(self.lam[: N + 1])
        lam_grid = [lam for lam in lam_grid if 0 < lam < lam_max]
        if not lam_grid:
            raise ConfigError(
                f"no λ values inside (0, {lam_max:g}) after filtering")
        idx = self._grid_index(x)
        worst = 0.0
        for lam in lam_grid:
            total = self.sum_at(x, lam)
            taylor = sum((1j ** n) * lam ** n * self.h[n][idx]
                         for n in range(N + 1))
            worst = max(worst, abs(total - taylor) / lam ** (N + 1))
        return worst

    def lambda_derivatives_at_zero(self, x, n_max, h0=None):
        """∂_λ^n at λ = 0 via central differences with one Richardson pass.

        Recovers iⁿ n! h_n(x), which is the constructor's defining Taylor
        property.
        """
        # keep every sample inside the all-cutoffs-equal-one plateau while
        # staying large enough that the n-th difference beats roundoff
        base = min(self.lam)
        h0 = 0.2 * base if h0 is None else h0
        out = []
        for n in range(n_max + 1):
            if n == 0:
                out.append(self.sum_at(x, 0.0))
                continue

            def dn(step):
                # central n-th difference
                vals = [self.sum_at(x, (k - n / 2.0) * step)
                        for k in range(n + 1)]
                coeffs = [(-1) ** (n - k) * _binom(n, k)
                          for k in range(n + 1)]
                return sum(c * v for c, v in zip(coeffs, vals)) / step ** n

            d1, d2, d3 = dn(h0), dn(h0 / 2.0), dn(h0 / 4.0)
            r1 = (4.0 * d2 - d1) / 3.0
            r2 = (4.0 * d3 - d2) / 3.0
            out.append((16.0 * r2 - r1) / 15.0)
        return out


def _binom(n, k):
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out
