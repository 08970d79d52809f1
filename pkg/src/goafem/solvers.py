"""Linear SPD solves, damped Newton for the primal problem and the linear
solve for the practical dual problem."""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (assemble_primal_load, assemble_reaction_jacobian,
                       assemble_stiffness, linear_residual, nonlinear_residual)

log = logging.getLogger(__name__)

#: above this many unknowns the direct factorization is replaced by PCG
ITERATIVE_THRESHOLD = 200_000


class SolverError(RuntimeError):
    pass


class NotSPD(SolverError):
    """A nonpositive pivot showed up while factorizing."""


class DimensionMismatch(SolverError, ValueError):
    pass


class NoConvergence(SolverError):
    """Newton ran out of iterations; ``residual_norm`` is the last one."""

    def __init__(self, message, residual_norm, iterations, history=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations
        self.history = history


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_iter: int = 50
    damping: bool = True
    min_step: float = 2.0 ** -10
    #: corrections applied after convergence while each cuts the residual
    #: at least tenfold; they remove the algebraic error left by the
    #: tolerance (0 disables them)
    polish_steps: int = 3

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.polish_steps < 0:
            raise ValueError("polish_steps must be nonnegative")


@dataclass
class SolutionPair:
    """Discrete primal and dual solutions on one space.

    ``u_coeffs`` is the double rounding of the extended-precision iterate
    ``u_extended``; ``residual_norm`` belongs to the latter.
    """

    u_coeffs: np.ndarray
    z_coeffs: np.ndarray = None
    newton_iters: int = 0
    residual_norm: float = 0.0
    residual_history: tuple = ()
    u_extended: np.ndarray = None
    polish_steps: int = 0


def _factorize(A):
    # Symmetric ordering without row pivoting: for SPD input the LU pivots
    # are those of Cholesky, so a nonpositive one certifies "not SPD".
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise NotSPD(f"factorization failed: {exc}") from None
    pivots = lu.U.diagonal()
    if not np.all(pivots > 0):
        raise NotSPD(f"nonpositive pivot {pivots.min():.3e}")
    return lu


def solve_spd(A, b):
    """Solve ``A x = b`` for sparse symmetric positive definite ``A``.

    Direct sparse factorization with one step of iterative refinement;
    diagonally preconditioned CG above :data:`ITERATIVE_THRESHOLD` unknowns.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise DimensionMismatch(f"matrix {A.shape} and right-hand side {b.shape} do not match")
    if n == 0:
        return np.zeros(0)
    if n > ITERATIVE_THRESHOLD:
        d = A.diagonal()
        if np.any(d <= 0):
            raise NotSPD("nonpositive diagonal entry")
        M = sp.diags(1.0 / d)
        x, info = spla.cg(A, b, M=M, rtol=1e-14, atol=1e-13 * (np.linalg.norm(b) + 1),
                          maxiter=10 * n)
        if info != 0:
            raise SolverError(f"CG did not converge (info={info})")
        return x
    lu = _factorize(A)
    x = lu.solve(b)
    x += lu.solve(b - A @ x)
    return x


def _restricted(space, matrix):
    idx = space.interior_dofs
    return matrix[idx][:, idx]


def newton_primal(space, problem, u0=None, config=NewtonConfig()):
    """Damped Newton iteration for the discrete primal problem.

    Each step solves ``(K + M[b'(u)]) delta = r(u)`` on interior DOFs and
    halves the step from 1 until the residual norm decreases; below
    ``config.min_step`` the full step is taken.  Iteration stops once
    ``||r|| <= max(abs_tol, rel_tol ||r_0||)``; then up to
    ``config.polish_steps`` further full steps follow while each reduces
    the residual at least tenfold.  These are not counted in
    ``newton_iters``.

    The iterate is carried in extended precision and the corrections are
    solved for in double precision (mixed-precision refinement): in double,
    one unit of roundoff in ``u`` alone produces residual entries of order
    ``eps / h``.

    Returns a :class:`SolutionPair` with ``z_coeffs`` unset.
    """
    n = space.n_dofs
    u = np.zeros(n, dtype=np.longdouble) if u0 is None else np.array(u0, dtype=np.longdouble)
    if u.shape != (n,):
        raise DimensionMismatch(f"initial guess has shape {u.shape}, expected ({n},)")
    u[space.boundary_dofs] = 0.0
    idx = space.interior_dofs
    K = assemble_stiffness(space, problem)
    F = assemble_primal_load(space, problem)

    def residual(v):
        return nonlinear_residual(space, problem, v, load=F)

    def correction(v, r):
        J = _restricted(space, K + assemble_reaction_jacobian(space, problem, v.astype(float)))
        delta = np.zeros(n)
        delta[idx] = solve_spd(J, r[idx].astype(float))
        return delta

    r = residual(u)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    tol = max(config.abs_tol, config.rel_tol * rnorm)
    it = 0
    while rnorm > tol:
        if it >= config.max_iter:
            raise NoConvergence(f"Newton did not converge in {config.max_iter} iterations "
                                f"(residual {rnorm:.3e})", rnorm, it, tuple(history))
        delta = correction(u, r)
        step = 1.0
        trial = u + delta
        r_new = residual(trial)
        if config.damping:
            while np.linalg.norm(r_new) >= rnorm and step >= config.min_step:
                step /= 2.0
                trial = u + step * delta
                r_new = residual(trial)
            if step < config.min_step:
                trial = u + delta
                r_new = residual(trial)
        u, r = trial, r_new
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        it += 1
        log.debug("newton %d: step %.4g residual %.3e", it, step, rnorm)
    u, rnorm, polished = _polish(u, r, rnorm, residual, correction, config.polish_steps)
    return SolutionPair(u_coeffs=u.astype(float), newton_iters=it, residual_norm=rnorm,
                        residual_history=tuple(history), u_extended=u, polish_steps=polished)


def _polish(x, r, rnorm, residual, correction, steps):
    done = 0
    while done < steps and rnorm > 0.0:
        trial = x + correction(x, r)
        r_new = residual(trial)
        norm_new = float(np.linalg.norm(r_new))
        if not norm_new <= 0.1 * rnorm:
            break
        x, r, rnorm = trial, r_new, norm_new
        done += 1
    return x, rnorm, done


def solve_dual(space, problem, u_coeffs, goal_load, polish_steps=0):
    """Discrete practical dual solution ``z_H[u_H]``: one linear solve with
    the operator linearized at ``u_H``.

    With ``polish_steps > 0`` the solution is refined against the residual
    evaluated in extended precision (as in :func:`newton_primal`) and
    returned as a ``np.longdouble`` array.
    """
    goal_load = np.asarray(goal_load)
    if goal_load.shape != (space.n_dofs,):
        raise DimensionMismatch("goal load does not match the space")
    idx = space.interior_dofs
    A = assemble_stiffness(space, problem) + assemble_reaction_jacobian(
        space, problem, np.asarray(u_coeffs).astype(float))
    A_int = _restricted(space, A)

    def correction(_, r):
        out = np.zeros(space.n_dofs)
        out[idx] = solve_spd(A_int, r[idx].astype(float))
        return out

    z = correction(None, goal_load)
    if polish_steps <= 0:
        return z

    def residual(v):
        return linear_residual(space, problem, u_coeffs, v, goal_load)

    z = z.astype(np.longdouble)
    r = residual(z)
    z, _, _ = _polish(z, r, float(np.linalg.norm(r)), residual, correction, polish_steps)
    return z
