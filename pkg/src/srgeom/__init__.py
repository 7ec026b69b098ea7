"""srgeom: symbolic-plus-numeric sub-Riemannian geometry engine.

Computes nonholonomic symbols, canonical gradings and affine connections,
torsion/curvature, and flatness verdicts for sub-Riemannian manifolds given by
coordinate frames with expression coefficients, with complete constructions
for contact manifolds and (2,3,5)-manifolds.
"""

from . import expr
from .expr import Expr, parse, differentiate, evaluate

__all__ = ["expr", "Expr", "parse", "differentiate", "evaluate"]

__version__ = "0.1.0"
