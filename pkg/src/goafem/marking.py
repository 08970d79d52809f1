"""Doerfler marking with exact minimal cardinality and the goal-oriented
combination rule.

Strategies:

``goafem``
    Doerfler sets for ``eta^2`` and for ``eta^2 + zeta^2``, both cut down to
    the smaller cardinality, then united.
``afem``
    Doerfler on ``eta^2`` only.
``afem_plus``
    Doerfler on ``eta^2 + zeta^2``.

Ties are broken by ascending element index everywhere.
"""
from dataclasses import dataclass

import numpy as np

STRATEGIES = ("goafem", "afem", "afem_plus")


def normalize_strategy(name):
    key = name.replace("-", "_").lower()
    if key not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; choose from goafem, afem, afem-plus")
    return key


@dataclass(frozen=True)
class MarkConfig:
    theta: float = 0.5
    strategy: str = "goafem"

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        object.__setattr__(self, "strategy", normalize_strategy(self.strategy))


@dataclass(frozen=True, eq=False)
class MarkResult:
    marked: np.ndarray
    set_u: np.ndarray
    set_uz: np.ndarray
    selected_u: np.ndarray
    selected_uz: np.ndarray


def _descending(values):
    values = np.asarray(values, dtype=float)
    return np.lexsort((np.arange(len(values)), -values))


def doerfler_min(values, theta):
    """Smallest set of indices whose values sum to at least ``theta`` times
    the total, in order of decreasing value.

    The descending prefix is a minimum-cardinality solution, so no search
    is needed.  All-zero input gives the empty set.
    """
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("Doerfler marking needs nonnegative values")
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    order = _descending(values)
    csum = np.cumsum(values[order])
    if csum.size == 0 or csum[-1] <= 0.0:
        return np.array([], dtype=np.int64)
    k = int(np.searchsorted(csum, theta * csum[-1], side="left")) + 1
    return order[:min(k, len(order))]


def mark(eta_sq, zeta_sq, config):
    """Select elements for refinement from squared indicator fields."""
    if eta_sq.mesh is not zeta_sq.mesh or len(eta_sq) != len(zeta_sq):
        raise ValueError("indicator fields live on different meshes")
    eta2 = eta_sq.values
    combined = eta2 + zeta_sq.values
    if config.strategy == "afem":
        s = doerfler_min(eta2, config.theta)
        return MarkResult(np.sort(s), s, s, s, s)
    if config.strategy == "afem_plus":
        s = doerfler_min(combined, config.theta)
        return MarkResult(np.sort(s), s, s, s, s)
    set_u = doerfler_min(eta2, config.theta)
    set_uz = doerfler_min(combined, config.theta)
    k = min(len(set_u), len(set_uz))
    # both sets come out sorted by decreasing indicator, so the k largest
    # members are the first k
    sel_u, sel_uz = set_u[:k], set_uz[:k]
    return MarkResult(np.union1d(sel_u, sel_uz), set_u, set_uz, sel_u, sel_uz)
