"""Numerical toolkit for radial asymptotically hyperbolic metrics: curvature
decompositions, weighted boundary norms, Fredholm diagnostics for shifted
Laplacians, and a constructive solver for the constant-scalar-curvature
conformal problem."""

__version__ = "0.1.0"
