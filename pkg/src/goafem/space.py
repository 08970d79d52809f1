"""Continuous Lagrange finite element spaces with zero boundary trace."""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

SUPPORTED_DEGREES = {1: (1, 2, 3, 4), 2: (1, 2)}


def _exponents(dim, degree):
    if dim == 1:
        return np.arange(degree + 1)[:, None]
    return np.array([(i, j) for k in range(degree + 1) for i in range(k, -1, -1)
                     for j in [k - i]])


def _monomials(points, exps):
    """Monomial values, gradients and Hessians at ``points`` (..., d)."""
    x = np.asarray(points)
    if x.dtype != np.longdouble:
        x = x.astype(float)
    d = x.shape[-1]
    e = exps  # (nm, d)

    def powk(k_shift):
        # x_i ** (e_i - k_shift_i) with zero where the exponent goes negative
        p = e - k_shift
        out = np.ones(x.shape[:-1] + (len(e),), dtype=x.dtype)
        for i in range(d):
            xi = x[..., i][..., None]
            pi = p[:, i]
            out = out * np.where(pi >= 0, xi ** np.maximum(pi, 0), 0.0)
        return out

    val = powk(np.zeros(d, dtype=int))
    grad = np.empty(val.shape + (d,), dtype=x.dtype)
    hess = np.empty(val.shape + (d, d), dtype=x.dtype)
    for i in range(d):
        s = np.zeros(d, dtype=int)
        s[i] = 1
        grad[..., i] = e[:, i] * powk(s)
        for j in range(d):
            s2 = s.copy()
            s2[j] += 1
            coef = e[:, i] * (e[:, j] - (1 if i == j else 0))
            hess[..., i, j] = coef * powk(s2)
    return val, grad, hess


def _inverse_extended(V):
    """Gauss-Jordan inverse with partial pivoting in ``np.longdouble``
    (LAPACK has no extended-precision routines)."""
    n = len(V)
    M = np.concatenate([np.array(V, dtype=np.longdouble), np.eye(n, dtype=np.longdouble)], axis=1)
    for c in range(n):
        p = c + int(np.argmax(np.abs(M[c:, c])))
        M[[c, p]] = M[[p, c]]
        M[c] /= M[c, c]
        for r in range(n):
            if r != c:
                M[r] -= M[r, c] * M[c]
    return M[:, n:]


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Nodal Lagrange basis on the reference simplex.

    Local node order: vertices first, then (2D) the midpoints of edges
    0-1, 1-2, 2-0, or (1D) the interior nodes from left to right.
    """

    dimension: int
    degree: int

    @cached_property
    def nodes(self):
        m = self.degree
        if self.dimension == 1:
            x = [0.0, 1.0] + [k / m for k in range(1, m)]
            return np.array(x)[:, None]
        verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        if m == 1:
            return np.array(verts)
        return np.array(verts + [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])

    @property
    def n_local(self):
        return len(self.nodes)

    @cached_property
    def _coefficients(self):
        exps = _exponents(self.dimension, self.degree)
        V, _, _ = _monomials(self.nodes, exps)
        return exps, np.linalg.inv(V)

    @cached_property
    def _coefficients_extended(self):
        exps = _exponents(self.dimension, self.degree)
        V, _, _ = _monomials(self.nodes.astype(np.longdouble), exps)
        return exps, _inverse_extended(V)

    def tabulate(self, points):
        """Basis values (..., n), gradients (..., n, d) and Hessians
        (..., n, d, d) at reference ``points`` of shape (..., d).

        ``np.longdouble`` points give extended-precision tables of the same
        basis (the nodes are the double-precision ones in both cases).
        """
        extended = np.asarray(points).dtype == np.longdouble
        exps, C = self._coefficients_extended if extended else self._coefficients
        val, grad, hess = _monomials(points, exps)
        phi = val @ C
        dphi = np.einsum("...kd,ka->...ad", grad, C)
        d2phi = np.einsum("...kde,ka->...ade", hess, C)
        return phi, dphi, d2phi


def _inverse_jacobians_extended(J):
    J = J.astype(np.longdouble)
    if J.shape[-1] == 1:
        return 1 / J
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    adj = np.stack([np.stack([J[:, 1, 1], -J[:, 0, 1]], -1),
                    np.stack([-J[:, 1, 0], J[:, 0, 0]], -1)], -2)
    return adj / det[:, None, None]


@lru_cache(maxsize=None)
def reference_element(dimension, degree):
    return ReferenceElement(dimension, degree)


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Degree-``m`` continuous Lagrange space on ``mesh``.

    ``element_dofs[e]`` lists global DOFs in the local node order of
    :class:`ReferenceElement`.  Boundary DOFs carry the homogeneous
    Dirichlet condition; only ``interior_dofs`` are unknowns.
    """

    mesh: object
    degree: int
    element_dofs: np.ndarray
    dof_coords: np.ndarray
    boundary_dofs: np.ndarray

    @property
    def n_dofs(self):
        return len(self.dof_coords)

    @property
    def dimension(self):
        return self.mesh.dimension

    @property
    def reference(self):
        return reference_element(self.mesh.dimension, self.degree)

    @cached_property
    def interior_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)

    def to_physical(self, ref_points, elements=None):
        """Map reference points (nq, d) or (k, nq, d) to physical ones."""
        mesh = self.mesh
        if elements is None:
            elements = np.arange(mesh.n_elements)
        v0 = mesh.vertices[mesh.elements[elements, 0]]
        J = mesh.jacobians[elements]
        ref = np.asarray(ref_points)
        if ref.dtype != np.longdouble:
            ref = ref.astype(float)
        if ref.ndim == 2:
            return v0[:, None, :] + np.einsum("kij,qj->kqi", J, ref)
        return v0[:, None, :] + np.einsum("kij,kqj->kqi", J, ref)

    def to_reference(self, points, elements):
        """Inverse affine map of physical ``points`` (k, nq, d)."""
        mesh = self.mesh
        v0 = mesh.vertices[mesh.elements[elements, 0]]
        inv = mesh.inverse_jacobians[elements]
        return np.einsum("kij,kqj->kqi", inv, points - v0[:, None, :])

    def tabulate(self, ref_points, elements=None, hessians=False):
        """Physical basis data at reference points.

        ``ref_points`` is shared (nq, d) or per element (k, nq, d).  Returns
        ``phi (.., nq, n)``, ``grad (k, nq, n, d)`` and optionally the
        Hessians ``(k, nq, n, d, d)``.
        """
        mesh = self.mesh
        if elements is None:
            elements = np.arange(mesh.n_elements)
        inv = mesh.inverse_jacobians[elements]
        if np.asarray(ref_points).dtype == np.longdouble:
            inv = _inverse_jacobians_extended(mesh.jacobians[elements])
        phi, dphi, d2phi = self.reference.tabulate(ref_points)
        if phi.ndim == 2:
            grad = np.einsum("qad,kde->kqae", dphi, inv)
        else:
            grad = np.einsum("kqad,kde->kqae", dphi, inv)
        if not hessians:
            return phi, grad
        if d2phi.ndim == 4:
            hess = np.einsum("kdi,qade,kej->kqaij", inv, d2phi, inv, optimize=True)
        else:
            hess = np.einsum("kdi,kqade,kej->kqaij", inv, d2phi, inv, optimize=True)
        return phi, grad, hess

    def local_coefficients(self, coeffs, elements=None):
        coeffs = np.asarray(coeffs)
        if coeffs.dtype != np.longdouble:
            coeffs = coeffs.astype(float, copy=False)
        if coeffs.shape != (self.n_dofs,):
            raise ValueError(f"expected {self.n_dofs} coefficients, got shape {coeffs.shape}")
        dofs = self.element_dofs if elements is None else self.element_dofs[elements]
        return coeffs[dofs]

    def interpolate(self, func):
        """Nodal interpolant of ``func`` (callable on (n, d) points), with the
        boundary values kept as given by ``func``."""
        return np.asarray(func(self.dof_coords), dtype=float).reshape(self.n_dofs)


def build_space(mesh, degree):
    """Lagrange space of the given degree on ``mesh``."""
    d = mesh.dimension
    if degree not in SUPPORTED_DEGREES[d]:
        raise ValueError(f"degree {degree} unsupported in {d}D; "
                         f"choose from {SUPPORTED_DEGREES[d]}")
    nv = mesh.n_vertices
    ne = mesh.n_elements
    ref = reference_element(d, degree)
    if d == 1:
        extra = degree - 1
        interior = nv + np.arange(ne * extra).reshape(ne, extra)
        element_dofs = np.hstack([mesh.elements, interior])
        n_dofs = nv + ne * extra
        boundary = mesh.boundary_vertices
    elif degree == 1:
        element_dofs = mesh.elements.copy()
        n_dofs = nv
        boundary = mesh.boundary_vertices
    else:
        element_dofs = np.hstack([mesh.elements, nv + mesh.element_edges])
        n_dofs = nv + len(mesh.edges)
        _, _, counts = mesh._facets
        boundary = np.concatenate([mesh.boundary_vertices, nv + np.flatnonzero(counts == 1)])

    coords = np.empty((n_dofs, d))
    x = mesh.vertices[mesh.elements[:, 0]][:, None, :] + np.einsum(
        "kij,qj->kqi", mesh.jacobians, ref.nodes)
    coords[element_dofs.ravel()] = x.reshape(-1, d)
    coords[:nv] = mesh.vertices
    element_dofs.flags.writeable = False
    coords.flags.writeable = False
    boundary = np.sort(boundary)
    boundary.flags.writeable = False
    return FeSpace(mesh, degree, element_dofs, coords, boundary)


def eval_local(space, coeffs, element, local_points):
    """Values and physical gradients of a discrete function on one element.

    Parameters
    ----------
    local_points : array_like, shape (nq, d)
        Points on the reference element.

    Returns
    -------
    values : ndarray (nq,)
    gradients : ndarray (nq, d)
    """
    if not 0 <= element < space.mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    pts = np.atleast_2d(np.asarray(local_points, dtype=float))
    phi, grad = space.tabulate(pts, elements=np.array([element]))
    loc = space.local_coefficients(coeffs, np.array([element]))[0]
    return phi @ loc, np.einsum("qad,a->qd", grad[0], loc)


def prolongate(coarse, fine, relation, coeffs):
    """Represent a coarse-space function exactly in the nested fine space."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (coarse.n_dofs,):
        raise ValueError(f"expected {coarse.n_dofs} coarse coefficients, got {coeffs.shape}")
    if len(relation.parent_of) != fine.mesh.n_elements or coarse.degree != fine.degree:
        raise ValueError("fine space does not match the refinement relation")
    parent = relation.parent_of
    x = fine.to_physical(fine.reference.nodes)
    xi = coarse.to_reference(x, parent)
    phi, _, _ = coarse.reference.tabulate(xi)
    vals = np.einsum("kqa,ka->kq", phi, coeffs[coarse.element_dofs[parent]])
    out = np.empty(fine.n_dofs)
    out[fine.element_dofs.ravel()] = vals.ravel()
    return out


def locate_points(mesh, points, tol=1e-12):
    """Element containing each physical point (first match), brute force."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    v0 = mesh.vertices[mesh.elements[:, 0]]
    out = np.full(len(points), -1, dtype=np.int64)
    for i, p in enumerate(points):
        xi = np.einsum("kij,kj->ki", mesh.inverse_jacobians, p - v0)
        inside = np.all(xi >= -tol, axis=1) & (xi.sum(axis=1) <= 1 + tol)
        hit = np.flatnonzero(inside)
        if hit.size == 0:
            raise ValueError(f"point {p} is outside the mesh")
        out[i] = hit[0]
    return out


def evaluate(space, coeffs, points):
    """Values of a discrete function at physical points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    elems = locate_points(space.mesh, points)
    xi = space.to_reference(points[:, None, :], elems)
    phi, _, _ = space.reference.tabulate(xi)
    loc = space.local_coefficients(coeffs, elems)
    return np.einsum("kqa,ka->k", phi, loc)
