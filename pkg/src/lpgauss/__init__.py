"""L_p Gauss image measures of convex polytopes and a variational solver for
the L_p Gauss image problem in dimensions 2 and 3."""

__version__ = "0.1.0"
