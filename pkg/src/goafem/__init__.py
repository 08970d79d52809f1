"""Goal-oriented adaptive finite elements for semilinear elliptic problems.

The package follows the adaptive loop solve -> estimate -> mark -> refine:

- :mod:`goafem.mesh`: simplicial meshes in 1D/2D, bisection refinement
- :mod:`goafem.space`: Lagrange spaces, prolongation
- :mod:`goafem.problem`: problem data and the two built-in examples
- :mod:`goafem.assembly`, :mod:`goafem.solvers`: discrete systems, Newton
- :mod:`goafem.estimator`, :mod:`goafem.marking`: indicators and marking
- :mod:`goafem.driver`: the adaptive loop, histories and rates
"""
from .driver import AdaptiveHistory, RunConfig, adaptive_solve, eoc, mean_rate
from .problem import get_problem

__all__ = ["AdaptiveHistory", "RunConfig", "adaptive_solve", "eoc", "get_problem", "mean_rate"]
