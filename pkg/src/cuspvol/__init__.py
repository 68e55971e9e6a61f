"""Renormalized volumes of hyperbolic 3-manifolds near a degenerating cusp.

Modules: moebius, schottky, cusp_model, uniformize, hamilton_jacobi, renvol,
degeneration, cli.
"""
__version__ = "0.1.0"
