"""Quadrature rules on the reference interval [0, 1] and the reference
triangle {(x, y) : x, y >= 0, x + y <= 1}.

1D rules are Gauss-Legendre.  Triangle rules are collapsed (Duffy) tensor
rules built from a Gauss-Jacobi rule in the collapsed direction, which gives
any exactness degree at the price of a few more points than a symmetric rule.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadRule:
    """Points (n, d) on the reference element and their positive weights."""

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def dimension(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def _frozen(a, dtype=float):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@lru_cache(maxsize=None)
def _gauss_legendre01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _legendre_and_derivative(n, t):
    p0, p1 = np.ones_like(t), t
    if n == 0:
        return p0, np.zeros_like(t)
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * t * p1 - (k - 1) * p0) / k
    return p1, n * (t * p1 - p0) / (t * t - 1)


@lru_cache(maxsize=None)
def gauss_legendre_extended(n):
    """Gauss-Legendre nodes and weights on [0, 1] in ``np.longdouble``.

    The double-precision nodes are refined by Newton's method on the
    Legendre polynomial evaluated in extended precision.
    """
    t = np.polynomial.legendre.leggauss(n)[0].astype(np.longdouble)
    for _ in range(3):
        p, dp = _legendre_and_derivative(n, t)
        t = t - p / dp
    _, dp = _legendre_and_derivative(n, t)
    w = 2 / ((1 - t * t) * dp * dp)
    return _frozen((t + 1) / 2, np.longdouble), _frozen(w / 2, np.longdouble)


@lru_cache(maxsize=None)
def quad_rule(dimension, order, extended=False):
    """Return a rule on the reference element exact for polynomials of
    total degree ``order``.

    ``extended=True`` (1D only) gives points and weights as
    ``np.longdouble``.

    Examples
    --------
    >>> rule = quad_rule(1, 3)
    >>> float(rule.weights @ rule.points[:, 0] ** 3)
    0.25
    """
    if order < 1 or int(order) != order:
        raise ValueError(f"quadrature order must be a positive integer, got {order!r}")
    n = (int(order) + 2) // 2  # 2n - 1 >= order
    if dimension == 1:
        if extended:
            x, w = gauss_legendre_extended(n)
            return QuadRule(_frozen(x[:, None], np.longdouble), w, 2 * n - 1)
        x, w = _gauss_legendre01(n)
        return QuadRule(_frozen(x[:, None]), _frozen(w), 2 * n - 1)
    if dimension == 2:
        if extended:
            raise ValueError("extended-precision rules exist in 1D only")
        # Collapse the square onto the triangle: x = s, y = t (1 - s).
        # The Jacobian (1 - s) is absorbed by a Gauss-Jacobi rule in s.
        s, ws = roots_jacobi(n, 1.0, 0.0)
        s = 0.5 * (s + 1.0)
        ws = ws / 4.0
        t, wt = _gauss_legendre01(n)
        S, T = np.meshgrid(s, t, indexing="ij")
        W = np.outer(ws, wt)
        pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
        return QuadRule(_frozen(pts), _frozen(W.ravel()), 2 * n - 1)
    raise ValueError(f"unsupported dimension {dimension!r}")


@lru_cache(maxsize=None)
def gauss_jacobi_rule(alpha, n):
    """Rule for ``int_0^1 x**alpha p(x) dx`` with the weight absorbed.

    Exact for polynomials ``p`` of degree ``<= 2n - 1``.
    """
    if alpha <= -1.0:
        raise ValueError(f"Gauss-Jacobi exponent must exceed -1, got {alpha}")
    if n < 1:
        raise ValueError(f"number of points must be positive, got {n}")
    # scipy's weight is (1 - t)^a (1 + t)^b on [-1, 1]; x = (1 + t) / 2.
    t, w = roots_jacobi(int(n), 0.0, float(alpha))
    x = 0.5 * (t + 1.0)
    w = w / 2.0 ** (alpha + 1.0)
    return QuadRule(_frozen(x[:, None]), _frozen(w), 2 * int(n) - 1)


def gauss_points_on_segment(a, b, n):
    """Gauss-Legendre points and weights on the segments ``a -> b``.

    ``a`` and ``b`` have shape (k, d); returns points (k, n, d) and
    weights (k, n) already scaled by the segment lengths.
    """
    x, w = _gauss_legendre01(n)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    return pts, length[:, None] * w[None, :]
