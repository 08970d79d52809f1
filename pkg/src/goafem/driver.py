"""The adaptive loop solve -> estimate -> mark -> refine and its bookkeeping."""
import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .assembly import assemble_goal_load
from .estimator import eta_local, total, zeta_local
from .marking import MarkConfig, mark
from .mesh import refine, write_vtk
from .problem import get_problem
from .solvers import NewtonConfig, NoConvergence, newton_primal, solve_dual
from .space import SUPPORTED_DEGREES, build_space, prolongate

log = logging.getLogger(__name__)

CSV_COLUMNS = ("level", "n_elements", "n_dofs", "eta", "zeta", "product", "goal_value",
               "goal_error", "newton_iters", "n_marked", "wall_ms")


@dataclass(frozen=True)
class RunConfig:
    """One adaptive run.  Exactly one of ``max_dofs``, ``max_levels`` and
    ``product_tol`` is the stop rule; with none given ``max_dofs = 1e5``."""

    problem: str = "arctan1d"
    degree: int = 1
    theta: float = 0.5
    strategy: str = "goafem"
    max_dofs: Optional[int] = None
    max_levels: Optional[int] = None
    product_tol: Optional[float] = None
    newton: NewtonConfig = NewtonConfig()
    csv_path: Optional[str] = None
    vtk_prefix: Optional[str] = None
    vtk_every: int = 0
    name: Optional[str] = None
    #: False writes wall_ms = 0, which makes history files byte-identical
    #: across repeated runs
    record_timing: bool = True

    def __post_init__(self):
        rules = [r for r in (self.max_dofs, self.max_levels, self.product_tol) if r is not None]
        if len(rules) > 1:
            raise ValueError("give exactly one stop rule (max_dofs, max_levels or product_tol)")
        if not rules:
            object.__setattr__(self, "max_dofs", 100_000)
        problem = get_problem(self.problem)
        if self.degree not in SUPPORTED_DEGREES[problem.dimension]:
            raise ValueError(f"degree {self.degree} unsupported for {self.problem}")
        # validates theta and strategy
        MarkConfig(self.theta, self.strategy)
        if self.max_levels is not None and self.max_levels < 1:
            raise ValueError("max_levels must be positive")
        if self.max_dofs is not None and self.max_dofs < 1:
            raise ValueError("max_dofs must be positive")
        if self.product_tol is not None and not self.product_tol > 0:
            raise ValueError("product_tol must be positive")
        if self.vtk_every < 0:
            raise ValueError("vtk_every must be nonnegative")

    @property
    def mark_config(self):
        return MarkConfig(self.theta, self.strategy)


@dataclass
class LevelRecord:
    level: int
    n_elements: int
    n_dofs: int
    eta: float
    zeta: float
    product: float
    goal_value: float
    goal_error: float
    newton_iters: int
    n_marked: int
    wall_ms: float
    residual_norm: float = 0.0
    n_set_u: int = 0
    n_set_uz: int = 0
    n_selected_u: int = 0
    n_selected_uz: int = 0


@dataclass
class AdaptiveHistory:
    config: RunConfig
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path=None):
        """CSV text (and file, when ``path`` is given) with 17 significant
        digits and ``\\n`` line endings."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return format(float(v), ".17g")


def read_history_csv(path):
    """Rows of a history CSV as dicts of floats."""
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


class AdaptiveRunError(RuntimeError):
    """A solver failure during an adaptive run; ``history`` holds the levels
    completed before it."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def goal_value(space, problem, u_coeffs, goal_load=None):
    """``G(u_H)``, exact on the discrete space by linearity.

    The sum is accumulated in extended precision and returned as
    ``np.longdouble``.
    """
    g = assemble_goal_load(space, problem) if goal_load is None else goal_load
    return np.dot(np.asarray(g, dtype=np.longdouble), np.asarray(u_coeffs, dtype=np.longdouble))


@dataclass
class LevelState:
    """Everything computed on one level, handed to ``on_level`` callbacks."""

    level: int
    space: object
    u: np.ndarray
    z: np.ndarray
    u_extended: np.ndarray
    z_extended: np.ndarray
    eta_sq: object
    zeta_sq: object
    marks: object
    record: LevelRecord
    newton_history: tuple


def _stop(config, rec):
    if config.max_dofs is not None:
        return rec.n_dofs >= config.max_dofs
    if config.max_levels is not None:
        return rec.level + 1 >= config.max_levels
    return rec.product <= config.product_tol


def adaptive_solve(config, on_level: Optional[Callable] = None, problem=None):
    """Run the goal-oriented adaptive loop described by ``config``.

    ``on_level(state)`` is called with a :class:`LevelState` after marking on
    each level.  Raises :class:`AdaptiveRunError` (with the partial history)
    if Newton fails.
    """
    problem = get_problem(config.problem) if problem is None else problem
    mark_cfg = config.mark_config
    history = AdaptiveHistory(config)
    mesh = problem.make_initial_mesh()
    space = build_space(mesh, config.degree)
    u0 = None
    level = 0
    while True:
        t0 = time.monotonic()
        try:
            sol = newton_primal(space, problem, u0, config.newton)
        except NoConvergence as exc:
            raise AdaptiveRunError(f"level {level}: {exc}", history) from exc
        u, u_ext = sol.u_coeffs, sol.u_extended
        gload = assemble_goal_load(space, problem)
        z_ext = solve_dual(space, problem, u_ext, gload, config.newton.polish_steps)
        z = np.asarray(z_ext, dtype=float)
        eta_sq = eta_local(space, problem, u_ext)
        zeta_sq = zeta_local(space, problem, u_ext, z_ext)
        eta, zeta = total(eta_sq), total(zeta_sq)
        marks = mark(eta_sq, zeta_sq, mark_cfg)
        gv = goal_value(space, problem, u_ext, gload)
        ref = problem.reference_goal_extended()
        rec = LevelRecord(
            level=level, n_elements=mesh.n_elements, n_dofs=space.n_dofs, eta=eta, zeta=zeta,
            product=eta * math.sqrt(eta ** 2 + zeta ** 2), goal_value=float(gv),
            goal_error=float(abs(ref - gv)) if ref is not None else float("nan"),
            newton_iters=sol.newton_iters, n_marked=len(marks.marked),
            wall_ms=1e3 * (time.monotonic() - t0) if config.record_timing else 0.0,
            residual_norm=sol.residual_norm,
            n_set_u=len(marks.set_u), n_set_uz=len(marks.set_uz),
            n_selected_u=len(marks.selected_u), n_selected_uz=len(marks.selected_uz))
        history.records.append(rec)
        log.info("level %d: #T=%d dofs=%d eta=%.3e zeta=%.3e goal_err=%.3e", level,
                 rec.n_elements, rec.n_dofs, eta, zeta, rec.goal_error)
        if config.vtk_prefix and config.vtk_every and level % config.vtk_every == 0:
            write_vtk(f"{config.vtk_prefix}_{level:03d}.vtk", mesh,
                      {"eta_sq": eta_sq.values, "zeta_sq": zeta_sq.values})
        if on_level is not None:
            on_level(LevelState(level, space, u, z, u_ext, z_ext, eta_sq, zeta_sq, marks, rec,
                                sol.residual_history))
        if _stop(config, rec) or len(marks.marked) == 0:
            break
        new_mesh, relation = refine(mesh, marks.marked)
        new_space = build_space(new_mesh, config.degree)
        u0 = prolongate(space, new_space, relation, u)
        mesh, space = new_mesh, new_space
        level += 1
    if config.csv_path:
        history.to_csv(config.csv_path)
    return history


def eoc(history, column, against="n_elements"):
    """Empirical orders ``log(v_k / v_k+1) / log(N_k+1 / N_k)``.

    Pairs with a nonpositive or non-finite value give ``nan``.
    """
    if isinstance(history, AdaptiveHistory):
        v = history.column(column)
        n = history.column(against)
    else:
        v = np.asarray(history[column], dtype=float)
        n = np.asarray(history[against], dtype=float)
    if len(v) < 2:
        raise ValueError("need at least two levels for a convergence rate")
    rates = []
    for k in range(len(v) - 1):
        a, b = v[k], v[k + 1]
        if not (a > 0 and b > 0 and np.isfinite(a) and np.isfinite(b)) or n[k + 1] == n[k]:
            log.warning("eoc(%s): skipping pair %d-%d", column, k, k + 1)
            rates.append(float("nan"))
        else:
            rates.append(math.log(a / b) / math.log(n[k + 1] / n[k]))
    return rates


def mean_rate(history, column, last=5, against="n_elements"):
    """Mean of the last ``last`` finite EOC values."""
    r = np.array(eoc(history, column, against))
    r = r[np.isfinite(r)]
    return float(np.mean(r[-last:])) if r.size else float("nan")


def aitken_extrapolate(values):
    """Aitken delta-squared limit estimate from the last three values.

    Experimental: assumes geometric convergence of the sequence.
    """
    if len(values) < 3:
        raise ValueError("need three values")
    x0, x1, x2 = (float(v) for v in values[-3:])
    den = x2 - 2 * x1 + x0
    return x2 if den == 0 else x2 - (x2 - x1) ** 2 / den


def record_fields():
    return [f.name for f in fields(LevelRecord)]
