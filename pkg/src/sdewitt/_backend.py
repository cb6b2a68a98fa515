"""Coefficient-convolution backends for jet arithmetic.

The single hot kernel of the package is the truncated-polynomial product
``out[k] += a[i] * b[j]`` over a precomputed table of index triples.  It is
compiled with numba when available; a pure-numpy fallback (gather, multiply,
segmented reduce) can be forced with the environment variable::

    SDEWITT_BACKEND = auto | numba | numpy     (default: auto)

``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np

__all__ = ["BACKEND", "HAVE_NUMBA", "mul_into"]

_requested = os.environ.get("SDEWITT_BACKEND", "auto").strip().lower()
if _requested not in {"auto", "numba", "numpy"}:
    raise RuntimeError(
        f"SDEWITT_BACKEND must be one of auto/numba/numpy, got {_requested!r}")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via SDEWITT_BACKEND=numpy
    numba = None
    HAVE_NUMBA = False

if _requested == "numba" and not HAVE_NUMBA:
    raise RuntimeError("SDEWITT_BACKEND=numba requested but numba is not importable")

BACKEND = "numba" if (HAVE_NUMBA and _requested != "numpy") else "numpy"


if BACKEND == "numba":

    @numba.njit(cache=True)
    def _mul_kernel(a, b, out, ti, tj, tk, glo, ghi, gdi, gdj, da, db):
        ngroups = glo.shape[0]
        for r in range(a.shape[0]):
            ar = a[r]
            br = b[r]
            outr = out[r]
            for g in range(ngroups):
                if gdi[g] > da or gdj[g] > db:
                    continue
                for t in range(glo[g], ghi[g]):
                    outr[tk[t]] += ar[ti[t]] * br[tj[t]]

else:
    _mul_kernel = None


def _mul_numpy(a, b, out, window):
    ii, jj, starts, cols = window
    if ii.size == 0:
        return
    prod = a[:, ii] * b[:, jj]
    out[:, cols] = np.add.reduceat(prod, starts, axis=1)


def mul_into(a2, b2, out2, table, da, db):
    """Accumulate the truncated product of coefficient rows into ``out2``.

    ``a2``, ``b2``, ``out2`` are C-contiguous complex128 arrays of shape
    (batch, n_terms); ``da``/``db`` bound the nonzero total degree of the
    operands so the kernel can skip unreachable table entries.
    """
    if BACKEND == "numba":
        _mul_kernel(a2, b2, out2, table.ti, table.tj, table.tk,
                    table.glo, table.ghi, table.gdi, table.gdj, da, db)
    else:
        _mul_numpy(a2, b2, out2, table.window(da, db))
