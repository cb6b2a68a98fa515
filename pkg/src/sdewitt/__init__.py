"""Numerical Seeley-DeWitt coefficients on pseudo-Riemannian charts.

Computes the off-diagonal coefficients of the short-distance wave-kernel
expansion by geodesic transport (world function, van Vleck determinant,
gauge parallel transport, Hadamard recursion) on metrics of arbitrary
nondegenerate signature, and audits the sesqui-symmetry and transport
identities the construction is supposed to satisfy.
"""

__version__ = "0.1.0"
