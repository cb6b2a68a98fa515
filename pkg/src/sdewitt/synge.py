"""World function and van Vleck determinant for a solved geodesic.

The world function is half the signed squared geodesic distance; as the
Hamilton generating function of the geodesic flow its endpoint gradients
are just the endpoint momenta, and its mixed second derivative block comes
from eliminating the initial-momentum variation in the stored propagator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConjugatePointError, SignConventionError
from .geodesic import _metric_data

__all__ = ["WorldFunctionData", "VanVleckData", "world_function", "van_vleck",
           "vvm_sign"]


@dataclass
class WorldFunctionData:
    sigma: float          # ½ signed squared geodesic distance
    grad_x: np.ndarray    # σ_{;μ}   = p_μ(1)
    grad_xp: np.ndarray   # σ_{;'μ'} = -p_μ(0)
    mixed: np.ndarray     # σ_{;μ;'ν'}


@dataclass
class VanVleckData:
    delta: float
    delta_sqrt: float     # always the positive root √|Δ|
    sign: int


def world_function(sol):
    """σ and its first/mixed-second covariant derivatives from a solution."""
    d = sol.d
    g0 = np.real(_metric_data(sol.metric, sol.x_start + 0j, 1)[3])
    sigma = 0.5 * float(sol.v0 @ g0 @ sol.v0)
    phi = sol.propagator[-1]
    A = phi[:d, :d]
    B = phi[:d, d:]
    C = phi[d:, :d]
    D = phi[d:, d:]
    if abs(np.linalg.det(B)) < 1e-14 * max(1.0, np.abs(B).max()) ** d:
        raise ConjugatePointError(
            "position-momentum propagator block singular: endpoints "
            "conjugate, van Vleck data undefined")
    mixed = C - D @ np.linalg.solve(B, A)
    return WorldFunctionData(
        sigma=sigma,
        grad_x=sol.p[-1].copy(),
        grad_xp=-sol.p[0].copy(),
        mixed=mixed,
    )


def vvm_sign(d, signature):
    """Expected sign of Δ: (-1)^((d + sign g)/2)."""
    return -1 if ((d + signature) // 2) % 2 else 1


def van_vleck(m, wf, x, xp):
    """Van Vleck determinant Δ = det(-σ_{;μ;'ν'}) / √|g(x)| √|g(x')|.

    The sign of Δ is fixed by the signature rule; a mismatch signals
    integrator or BVP corruption and raises.  The square root is always the
    positive branch, which is the unique continuous choice equal to one at
    coincidence.
    """
    det_g_x = np.real(np.linalg.det(np.real(
        _metric_data(m, np.asarray(x, dtype=np.complex128), 1)[3])))
    det_g_xp = np.real(np.linalg.det(np.real(
        _metric_data(m, np.asarray(xp, dtype=np.complex128), 1)[3])))
    delta = float(np.real(np.linalg.det(-wf.mixed))
                  / np.sqrt(abs(det_g_x) * abs(det_g_xp)))
    if m.signature is None:
        raise SignConventionError("metric signature not validated")
    expected = vvm_sign(m.d, m.signature)
    if delta * expected <= 0:
        raise SignConventionError(
            f"van Vleck sign {np.sign(delta):+.0f} violates the signature "
            f"rule (expected {expected:+d}); geodesic data corrupt")
    return VanVleckData(delta=delta, delta_sqrt=float(np.sqrt(abs(delta))),
                        sign=expected)
