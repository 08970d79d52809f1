"""Residual error indicators for the primal and the practical dual problem.

For an element T with ``h_T = |T|**(1/d)``::

    eta_T^2  = h_T^2 ||f + div(A grad u_H - F) - b(u_H)||_T^2
               + h_T ||[(A grad u_H - F) . n]||_{dT in Omega}^2
    zeta_T^2 = h_T^2 ||g + div(A grad z_H - G) - b'(u_H) z_H||_T^2
               + h_T ||[(A grad z_H - G) . n]||_{dT in Omega}^2

Jumps vanish in 1D.  Each interior edge integral is computed once and added
to both neighbours.  Coefficient vectors may be ``np.longdouble``; the
residuals are then formed in extended precision, which matters because
roundoff in the coefficients is amplified by ``1 / h**2`` in the second
derivatives.  Flux data on an edge is taken as the trace from inside
each neighbour, so data that is piecewise smooth on the initial mesh jumps
where it should and nowhere else.
"""
from dataclasses import dataclass

import numpy as np

from .assembly import derivative_coefficients, singular_elements
from .quadrature import gauss_jacobi_rule, gauss_points_on_segment, quad_rule

# relative shift of edge points towards the element centroid when sampling
# flux data; selects the one-sided trace of piecewise data
TRACE_SHIFT = 1e-8


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Squared local indicators bound to one mesh."""

    values: np.ndarray
    mesh: object
    kind: str

    def __post_init__(self):
        if len(self.values) != self.mesh.n_elements:
            raise ValueError("one indicator per element expected")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("indicators must be finite and nonnegative")

    def __len__(self):
        return len(self.values)

    def total(self, subset=None):
        return total(self, subset)


def total(field, subset=None):
    """``sqrt`` of the sum of squared indicators over ``subset`` (all by
    default)."""
    v = field.values if subset is None else field.values[np.asarray(subset, dtype=np.int64)]
    return float(np.sqrt(np.sum(v)))


def residual_order(space):
    # exact for squared residuals of cubic reactions of degree-m functions
    return max(2 * space.degree + 2, 6 * space.degree)


def _div_flux(space, problem, loc, pts, elements=None):
    """``div(A grad v)`` at volume points (ne, nq)."""
    rule_pts = pts
    phi, grad, hess = space.tabulate(rule_pts, elements, hessians=True)
    x = space.to_physical(rule_pts, elements)
    A = np.asarray(problem.diffusion(x))
    loc = derivative_coefficients(loc)
    hv = np.einsum("kqaij,ka->kqij", hess, loc)
    out = np.einsum("kqij,kqij->kq", A, hv)
    if not problem.diffusion_is_constant:
        dA = problem.diffusion_gradient
        if dA is None:
            raise ValueError("non-constant diffusion needs a diffusion_gradient")
        gv = np.einsum("kqad,ka->kqd", grad, loc)
        out += np.einsum("kqiij,kqj->kq", dA(x), gv)
    return out


def _volume_terms(space, problem, v_coeffs, w_coeffs, dual):
    mesh = space.mesh
    rule = quad_rule(mesh.dimension, residual_order(space))
    x = space.to_physical(rule.points)
    weights = 2.0 ** (mesh.dimension - 1) * np.abs(mesh.measures)[:, None] * rule.weights
    loc_v = space.local_coefficients(v_coeffs)
    phi, _ = space.tabulate(rule.points)
    v = loc_v @ phi.T
    div = _div_flux(space, problem, loc_v, rule.points)
    if dual:
        w = space.local_coefficients(w_coeffs) @ phi.T
        scalar, flux_div = problem.goal_weight, problem.goal_flux_divergence
        reaction = problem.db(x, w) * v
    else:
        scalar, flux_div = problem.source, problem.source_flux_divergence
        reaction = problem.b(x, v)
    r = div - reaction
    if flux_div is not None:
        r = r - flux_div(x)

    sing = np.array([], dtype=np.int64)
    alpha = problem.singular_goal_exponent
    if dual and alpha is not None:
        sing = singular_elements(space)
    s = np.asarray(scalar(x), dtype=float).copy()
    s[sing] = 0.0
    vol = np.einsum("kq,kq->k", weights, (s + r) ** 2)

    if sing.size:
        # (g + r)^2 = g^2 + 2 g r + r^2 with g = x**alpha * smooth(x); the
        # singular products are integrated with Gauss-Jacobi rules.
        n = 3 * space.degree + 4
        h = np.abs(mesh.measures[sing])
        for exponent, power in ((2 * alpha, 2), (alpha, 1)):
            gj = gauss_jacobi_rule(exponent, n)
            xs = space.to_physical(gj.points, sing)
            smooth = np.asarray(scalar(xs)) * xs[..., 0] ** (-alpha)
            scale = h ** (1.0 + exponent)
            if power == 2:
                vol[sing] += np.einsum("k,q,kq->k", scale, gj.weights, smooth ** 2,
                                       optimize=True)
            else:
                phi_s, _ = space.tabulate(gj.points, sing)
                ls = loc_v[sing]
                vs = ls @ phi_s.T
                ws = space.local_coefficients(w_coeffs, sing) @ phi_s.T
                rs = _div_flux(space, problem, ls, gj.points, sing) - problem.db(xs, ws) * vs
                if flux_div is not None:
                    rs = rs - flux_div(xs)
                vol[sing] += 2.0 * np.einsum("k,q,kq,kq->k", scale, gj.weights, smooth, rs,
                                             optimize=True)
    return mesh.h ** 2 * vol


def _jump_terms(space, problem, v_coeffs, dual):
    mesh = space.mesh
    out = np.zeros(mesh.n_elements)
    if mesh.dimension == 1:
        return out
    facets, nbr, _ = mesh.interior_facets
    if len(facets) == 0:
        return out
    a = mesh.vertices[facets[:, 0]]
    b = mesh.vertices[facets[:, 1]]
    pts, wts = gauss_points_on_segment(a, b, space.degree + 1)
    t = b - a
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / np.linalg.norm(t, axis=1)[:, None]
    flux = problem.goal_flux if dual else problem.source_flux
    dtype = np.result_type(np.asarray(v_coeffs).dtype, float)
    jump = np.zeros(pts.shape[:2], dtype=dtype)
    mid = 0.5 * (a + b)
    for side in range(2):
        el = nbr[:, side]
        c = mesh.centroids[el]
        sign = np.sign(np.einsum("kd,kd->k", normal, mid - c))
        n_out = normal * sign[:, None]
        xi = space.to_reference(pts, el)
        _, grad = space.tabulate(xi, el)
        loc = derivative_coefficients(space.local_coefficients(v_coeffs, el))
        g = np.einsum("kqad,ka->kqd", grad, loc)
        A = np.asarray(problem.diffusion(pts))
        inside = pts + TRACE_SHIFT * (c[:, None, :] - pts)
        q = np.einsum("kqde,kqe->kqd", A, g) - np.asarray(flux(inside))
        jump += np.einsum("kqd,kd->kq", q, n_out)
    integral = np.einsum("kq,kq->k", wts, jump ** 2).astype(float)
    for side in range(2):
        el = nbr[:, side]
        out += np.bincount(el, weights=mesh.h[el] * integral, minlength=mesh.n_elements)
    return out


def eta_local(space, problem, u_coeffs):
    """Squared primal indicators ``eta_T(u_H)^2``."""
    vals = (_volume_terms(space, problem, u_coeffs, None, dual=False)
            + _jump_terms(space, problem, u_coeffs, dual=False))
    return IndicatorField(np.maximum(vals, 0.0).astype(float), space.mesh, "primal")


def zeta_local(space, problem, u_coeffs, z_coeffs):
    """Squared dual indicators ``zeta_T(u_H; z_H)^2``, linearized at
    ``u_H``."""
    vals = (_volume_terms(space, problem, z_coeffs, u_coeffs, dual=True)
            + _jump_terms(space, problem, z_coeffs, dual=True))
    return IndicatorField(np.maximum(vals, 0.0).astype(float), space.mesh, "dual")
