"""Problem data for ``-div(A grad u) + b(u) = f - div F`` with ``u = 0`` on
the boundary, and the goal ``G(v) = int g v + int G_flux . grad v``.

All data callables take points of shape (..., d).  Reactions take the point
and the solution value.  Built-in problems are registered in ``PROBLEMS``.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import initial_mesh_1d, initial_mesh_unit_square, uniform_refine


def _zero_scalar(x):
    return np.zeros(np.shape(x)[:-1])


def _zero_vector(x):
    return np.zeros(np.shape(x))


def _identity(x):
    d = np.shape(x)[-1]
    return np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d))


@dataclass(frozen=True)
class ProblemSpec:
    """Semilinear elliptic problem plus goal functional.

    ``diffusion_is_constant`` tells the estimator that ``div(A grad v)``
    reduces to ``A : hess(v)`` on every element; otherwise
    ``diffusion_gradient`` must be given.  Flux divergences default to
    zero, i.e. fluxes are assumed piecewise constant on the initial mesh.
    """

    name: str
    dimension: int
    reaction: Callable
    reaction_derivative: Callable
    source: Callable = _zero_scalar
    source_flux: Callable = _zero_vector
    goal_weight: Callable = _zero_scalar
    goal_flux: Callable = _zero_vector
    diffusion: Callable = _identity
    diffusion_is_constant: bool = True
    diffusion_gradient: Optional[Callable] = None  # [..., k, i, j] = d_k A_ij
    source_flux_divergence: Optional[Callable] = None
    goal_flux_divergence: Optional[Callable] = None
    singular_goal_exponent: Optional[float] = None
    reference_goal: Optional[float] = None
    # more digits of the same value, for errors below double resolution
    reference_goal_digits: Optional[str] = None
    reference_note: str = ""
    exact_solution: Optional[Callable] = None
    initial_mesh: Optional[Callable] = None

    def b(self, x, u):
        return self.reaction(x, u)

    def db(self, x, u):
        return self.reaction_derivative(x, u)

    def reference_goal_extended(self):
        """``reference_goal`` as ``np.longdouble`` (None when unknown)."""
        if self.reference_goal_digits is not None:
            return np.longdouble(self.reference_goal_digits)
        if self.reference_goal is None:
            return None
        return np.longdouble(self.reference_goal)

    def make_initial_mesh(self):
        if self.initial_mesh is None:
            raise ValueError(f"problem {self.name!r} has no initial mesh")
        return self.initial_mesh()


def check_assumptions(problem, points, values=np.linspace(-100.0, 100.0, 201)):
    """Sample the structural assumptions on ``problem``.

    Returns a list of violated properties: ``b(x, 0) = 0``, ``b' >= 0`` and
    a uniformly positive definite symmetric ``A``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    violations = []
    if np.any(problem.b(points, np.zeros(len(points))) != 0):
        violations.append("b(x, 0) != 0")
    X = np.repeat(points, len(values), axis=0)
    U = np.tile(values, len(points))
    if np.any(problem.db(X, U) < 0):
        violations.append("b' < 0")
    A = np.asarray(problem.diffusion(points))
    if not np.allclose(A, np.swapaxes(A, -1, -2)):
        violations.append("A not symmetric")
    elif np.linalg.eigvalsh(A).min() <= 0:
        violations.append("A not positive definite")
    return violations


# pi and -9/20 in extended precision; their double roundings would bias the
# 1D data by about one ulp
_PI = np.longdouble("3.14159265358979323846264338327950288")
_GOAL_EXPONENT = np.longdouble(-9) / 20


def example_1d_arctan():
    """``-u'' + arctan(u) = f`` on (0, 1) with ``u = sin(pi x)`` and the
    singular goal weight ``g = x**(-9/20)``.

    The data callables compute in ``np.longdouble``."""

    def source(x):
        s = np.sin(_PI * x[..., 0])
        return _PI ** 2 * s + np.arctan(s)

    def goal_weight(x):
        with np.errstate(divide="ignore"):
            return x[..., 0] ** _GOAL_EXPONENT

    return ProblemSpec(
        name="arctan1d",
        dimension=1,
        reaction=lambda x, u: np.arctan(u),
        reaction_derivative=lambda x, u: 1.0 / (1.0 + np.asarray(u) ** 2),
        source=source,
        goal_weight=goal_weight,
        singular_goal_exponent=-9.0 / 20.0,
        reference_goal=0.95925303932778833,
        reference_goal_digits="0.95925303932778832546478568721864535",
        reference_note="int_0^1 sin(pi x) x^(-9/20) dx",
        exact_solution=lambda x: np.sin(_PI * x[..., 0]),
        initial_mesh=lambda: initial_mesh_1d(0.0, 1.0, 5),
    )


def _aligned_square_mesh():
    # three bisection rounds make x1 + x2 = 1/2 and 3/2 unions of edges
    mesh = initial_mesh_unit_square()
    for _ in range(3):
        mesh, _ = uniform_refine(mesh)
    return mesh


def example_2d_cubic():
    """``-lap u + u**3 = -div F`` on the unit square with
    ``F = (-1, 0)`` where ``x1 + x2 <= 1/2`` and goal flux ``(-1, 0)`` where
    ``x1 + x2 >= 3/2``."""

    def source_flux(x):
        out = np.zeros(np.shape(x))
        out[..., 0] = np.where(x[..., 0] + x[..., 1] <= 0.5, -1.0, 0.0)
        return out

    def goal_flux(x):
        out = np.zeros(np.shape(x))
        out[..., 0] = np.where(x[..., 0] + x[..., 1] >= 1.5, -1.0, 0.0)
        return out

    return ProblemSpec(
        name="cubic2d",
        dimension=2,
        reaction=lambda x, u: np.asarray(u) ** 3,
        reaction_derivative=lambda x, u: 3.0 * np.asarray(u) ** 2,
        source_flux=source_flux,
        goal_flux=goal_flux,
        reference_goal=-0.001584951808832,
        reference_note="extrapolated from P2 goal-oriented runs",
        initial_mesh=_aligned_square_mesh,
    )


PROBLEMS = {
    "arctan1d": example_1d_arctan,
    "cubic2d": example_2d_cubic,
}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
