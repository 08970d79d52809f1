"""Sparse assembly of the primal, linearized and dual operators.

Matrices are returned over all DOFs as ``scipy.sparse.csr_matrix`` in
canonical form (sorted, duplicate-free indices); the Dirichlet condition is
imposed downstream by restricting to ``space.interior_dofs``.
"""
import numpy as np
import scipy.sparse as sp

from .quadrature import gauss_jacobi_rule, quad_rule


def volume_order(space):
    return 2 * space.degree + 2


def extended_tables(space):
    """Whether loads and residuals on ``space`` use extended-precision
    quadrature tables (1D).

    Rounded double tables bias every integral by a few ulps in the same
    direction on every element; in 1D the goal error is resolved far enough
    for that bias to show.
    """
    return space.dimension == 1


class VolumeData:
    """Basis values, physical gradients and scaled weights at the quadrature
    points of every element (``np.longdouble`` for an extended rule)."""

    def __init__(self, space, rule):
        self.rule = rule
        self.points = space.to_physical(rule.points)  # (ne, nq, d)
        self.phi, self.grad = space.tabulate(rule.points)  # (nq, n), (ne, nq, n, d)
        measures = np.abs(space.mesh.measures).astype(rule.weights.dtype)
        self.weights = measures[:, None] * rule.weights[None, :]
        if space.dimension == 2:
            self.weights = 2.0 * self.weights  # reference triangle has area 1/2


def volume_data(space, order=None, extended=False):
    """Cached :class:`VolumeData` for ``space`` at the given exactness."""
    order = volume_order(space) if order is None else order
    cache = space.__dict__.setdefault("_volume_cache", {})
    key = (order, extended)
    if key not in cache:
        cache[key] = VolumeData(space, quad_rule(space.dimension, order, extended))
    return cache[key]


def scatter_matrix(space, local):
    """Sum local (ne, n, n) blocks into a global CSR matrix."""
    dofs = space.element_dofs
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    A = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs))
    A.sum_duplicates()
    return A


def scatter_vector(space, local):
    """Sum local (ne, n) contributions into a global vector, keeping the
    dtype (bincount would round extended precision to double)."""
    if local.dtype == np.float64:
        return np.bincount(space.element_dofs.ravel(), weights=local.ravel(),
                           minlength=space.n_dofs)
    cache = space.__dict__
    if "_dof_order" not in cache:
        flat = space.element_dofs.ravel()
        order = np.argsort(flat, kind="stable")
        starts = np.flatnonzero(np.r_[True, np.diff(flat[order]) != 0])
        cache["_dof_order"] = (order, starts, flat[order][starts])
    order, starts, dofs = cache["_dof_order"]
    out = np.zeros(space.n_dofs, dtype=local.dtype)
    out[dofs] = np.add.reduceat(local.ravel()[order], starts)
    return out


def derivative_coefficients(loc):
    """Local coefficients shifted by their first entry.

    Basis derivatives sum to zero, so derivatives are unchanged, but the
    rounding error no longer scales with ``|v| / h``.
    """
    return loc - loc[:, :1]


def gradient_part(local):
    """Remove the element sum from local vectors ``int q . grad(phi_a)``.

    The exact sum is ``int q . grad(sum_a phi_a) = 0``; with rounded
    gradient tables it is ``eps |q|`` per element, independent of ``h``,
    and would act on the solution like a source of density ``eps / h``.
    """
    return local - local.mean(axis=1, keepdims=True)


def function_at_quadrature(space, coeffs, data):
    """Values (ne, nq) and gradients (ne, nq, d) of a discrete function."""
    loc = space.local_coefficients(coeffs)
    vals = loc @ data.phi.T
    grads = np.einsum("kqad,ka->kqd", data.grad, derivative_coefficients(loc))
    return vals, grads


def assemble_stiffness(space, problem, order=None):
    """Matrix of ``int A grad(phi_j) . grad(phi_i)`` over all DOFs."""
    data = volume_data(space, order)
    A = np.asarray(problem.diffusion(data.points))
    Agrad = np.einsum("kqde,kqbe->kqbd", A, data.grad)
    local = np.einsum("kq,kqad,kqbd->kab", data.weights, data.grad, Agrad, optimize=True)
    return scatter_matrix(space, local)


def assemble_weighted_mass(space, weight, order=None):
    """Matrix of ``int c phi_j phi_i`` with ``c`` given at quadrature points
    (ne, nq) or as a scalar."""
    data = volume_data(space, order)
    c = np.broadcast_to(np.asarray(weight, dtype=float), data.weights.shape)
    local = np.einsum("kq,qa,qb->kab", data.weights * c, data.phi, data.phi, optimize=True)
    return scatter_matrix(space, local)


def assemble_mass(space, order=None):
    return assemble_weighted_mass(space, 1.0, order)


def assemble_reaction_jacobian(space, problem, w_coeffs, order=None):
    """Matrix of ``int b'(w_H) phi_j phi_i``; serves Newton and the dual."""
    data = volume_data(space, order)
    w, _ = function_at_quadrature(space, w_coeffs, data)
    return assemble_weighted_mass(space, problem.db(data.points, w), order)


def _load(space, scalar, flux, order=None):
    data = volume_data(space, order, extended_tables(space))
    s = np.asarray(scalar(data.points))
    F = np.asarray(flux(data.points))
    local = np.einsum("kq,kq,qa->ka", data.weights, s, data.phi, optimize=True)
    local += gradient_part(np.einsum("kq,kqd,kqad->ka", data.weights, F, data.grad,
                                     optimize=True))
    return scatter_vector(space, local)


def assemble_primal_load(space, problem, order=None):
    """Vector of ``F(phi_i) = int f phi_i + int F_flux . grad phi_i``."""
    return _load(space, problem.source, problem.source_flux, order)


def singular_elements(space):
    """Elements touching x = 0 (1D only), where the goal weight may blow up."""
    mesh = space.mesh
    if mesh.dimension != 1:
        return np.array([], dtype=np.int64)
    return np.flatnonzero(mesh.vertices[mesh.elements[:, 0], 0] == 0.0)


def _gauss_jacobi_points(space):
    # exact for x**alpha * p with deg p <= 2n - 1 >= 2m + 2
    return space.degree + 2


def assemble_goal_load(space, problem, order=None):
    """Vector of ``G(phi_i) = int g phi_i + int G_flux . grad phi_i``.

    With ``singular_goal_exponent = alpha`` the weight-term on elements
    touching x = 0 uses a Gauss-Jacobi rule for ``x**alpha``; the smooth
    factor ``g(x) x**(-alpha)`` is sampled at its nodes.
    """
    alpha = problem.singular_goal_exponent
    sing = singular_elements(space) if alpha is not None else np.array([], dtype=np.int64)
    if sing.size == 0:
        return _load(space, problem.goal_weight, problem.goal_flux, order)

    data = volume_data(space, order, extended_tables(space))
    s = np.array(problem.goal_weight(data.points))
    s[sing] = 0.0
    F = np.asarray(problem.goal_flux(data.points))
    local = np.einsum("kq,kq,qa->ka", data.weights, s, data.phi, optimize=True)
    local += gradient_part(np.einsum("kq,kqd,kqad->ka", data.weights, F, data.grad,
                                     optimize=True))

    rule = gauss_jacobi_rule(alpha, _gauss_jacobi_points(space))
    phi, _ = space.tabulate(rule.points, sing)
    x = space.to_physical(rule.points, sing)
    h = np.abs(space.mesh.measures[sing])
    smooth = problem.goal_weight(x) * x[..., 0] ** (-alpha)
    local[sing] += np.einsum("k,q,kq,qa->ka", h ** (1.0 + alpha), rule.weights, smooth, phi,
                             optimize=True)
    return scatter_vector(space, local)


def nonlinear_residual(space, problem, u_coeffs, load=None, order=None):
    """``F(phi_i) - <<u_H, phi_i>> - <b(u_H), phi_i>`` on interior DOFs,
    zero on boundary DOFs.

    The energy term is integrated element by element from the gradient of
    ``u_H`` rather than as ``K @ u``, which keeps the rounding floor of the
    residual independent of the mesh size.  Extended-precision
    ``u_coeffs`` give an extended-precision residual.
    """
    data = volume_data(space, order, extended_tables(space))
    F = assemble_primal_load(space, problem, order) if load is None else load
    u, gu = function_at_quadrature(space, u_coeffs, data)
    A = np.asarray(problem.diffusion(data.points))
    Agu = np.einsum("kqde,kqe->kqd", A, gu)
    bu = np.asarray(problem.b(data.points, u))
    local = gradient_part(np.einsum("kq,kqd,kqad->ka", data.weights, Agu, data.grad,
                                     optimize=True))
    local += np.einsum("kq,kq,qa->ka", data.weights, bu, data.phi, optimize=True)
    r = F - scatter_vector(space, local)
    r[space.boundary_dofs] = 0.0
    return r


def linear_residual(space, problem, w_coeffs, z_coeffs, load, order=None):
    """``G(phi_i) - <<z_H, phi_i>> - <b'(w_H) z_H, phi_i>`` on interior DOFs,
    zero on boundary DOFs: the residual of the dual system linearized at
    ``w_H``.  Element-wise like :func:`nonlinear_residual`."""
    data = volume_data(space, order, extended_tables(space))
    w, _ = function_at_quadrature(space, w_coeffs, data)
    z, gz = function_at_quadrature(space, z_coeffs, data)
    A = np.asarray(problem.diffusion(data.points))
    Agz = np.einsum("kqde,kqe->kqd", A, gz)
    cz = np.asarray(problem.db(data.points, w)) * z
    local = gradient_part(np.einsum("kq,kqd,kqad->ka", data.weights, Agz, data.grad,
                                     optimize=True))
    local += np.einsum("kq,kq,qa->ka", data.weights, cz, data.phi, optimize=True)
    r = load - scatter_vector(space, local)
    r[space.boundary_dofs] = 0.0
    return r


def energy_norm(space, problem, coeffs, stiffness=None):
    K = assemble_stiffness(space, problem) if stiffness is None else stiffness
    coeffs = np.asarray(coeffs, dtype=float)
    return float(np.sqrt(max(coeffs @ (K @ coeffs), 0.0)))
