"""foliate - transverse Riemannian geometry, Ricci flow and solitons on foliated manifolds."""

__version__ = "0.1.0"
