"""Project-and-filter iteration engine.

Each experimental iteration proceeds in four stages:

1. *Adapt*: reset the projection parameters to their ceilings and halve them
   until the projection's halfspace system admits a point (LP feasibility
   test), or declare convergence once the halving budget is exhausted.
2. *Project*: Euclidean-project the raw target onto the halfspace system to
   obtain the projected target.
3. *Filter*: line-search the largest gain K in [0, 1] that keeps the
   Lipschitz surrogates of the experimental constraints nonpositive, keeps
   every numerical constraint satisfied along the segment, and keeps the
   quadratic cost surrogate nonpositive; then move K of the way to the
   projected target.
4. *Measure*: run the experiment at the new point and assert strict
   experimental feasibility and strict cost decrease (both are guaranteed
   when the declared Lipschitz constants are valid, so a violation is a hard
   error blaming the constants).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .bounds import GrowthBounds, linear_growth, quadratic_growth, worst_case_growth
from .model import (
    Measurement,
    ProblemSpec,
    ProjectionCeilings,
    TargetRule,
    evaluate_numerical,
    validate_initial_point,
)
from .qp import HalfspaceSet, InfeasibleProjectionError, lp_feasible, qp_project

__all__ = [
    "ProjectionParams",
    "IterateRecord",
    "Trajectory",
    "RunConfig",
    "AdaptOutcome",
    "EngineError",
    "InfeasibleStartError",
    "RunAborted",
    "epsilon_active",
    "assemble_projection",
    "filter_gain_search",
    "apply_filter",
    "adapt_parameters",
    "step",
    "run",
]

log = logging.getLogger("scfo.engine")

STATUS_STEPPED = "stepped"
STATUS_TERMINATED = "terminated"
STATUS_PENDING = "pending"


class EngineError(RuntimeError):
    """An iteration contract was violated (typically: invalid Lipschitz constants)."""


class InfeasibleStartError(RuntimeError):
    def __init__(self, report):
        super().__init__(report.message())
        self.report = report


class RunAborted(RuntimeError):
    """A run stopped mid-iteration; carries the partial trajectory and the cause."""

    def __init__(self, trajectory, cause):
        super().__init__(f"run aborted at experiment {len(trajectory.records) - 1}: {cause}")
        self.trajectory = trajectory
        self.cause = cause


class _ZeroCostRow(Exception):
    """Cost gradient vanished: the descent row is unsatisfiable at any level."""


@dataclass(frozen=True)
class ProjectionParams:
    """Projection parameters at one halving level: value = ceiling / 2**level."""

    ceilings: ProjectionCeilings
    level: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be nonnegative")

    @property
    def _scale(self) -> float:
        return 0.5**self.level

    @property
    def eps_p(self) -> np.ndarray:
        return self.ceilings.eps_p * self._scale

    @property
    def eps(self) -> np.ndarray:
        return self.ceilings.eps * self._scale

    @property
    def delta_gp(self) -> np.ndarray:
        return self.ceilings.delta_gp * self._scale

    @property
    def delta_g(self) -> np.ndarray:
        return self.ceilings.delta_g * self._scale

    @property
    def delta_phi(self) -> float:
        return self.ceilings.delta_phi * self._scale

    def at_level(self, level: int) -> "ProjectionParams":
        return ProjectionParams(self.ceilings, level)


@dataclass
class IterateRecord:
    """One experiment: the point, its measurement, and the decision made there."""

    k: int
    u: np.ndarray
    measurement: Measurement
    g_values: np.ndarray
    g_grads: np.ndarray
    status: str = STATUS_PENDING
    target: np.ndarray | None = None
    projected_target: np.ndarray | None = None
    K: float | None = None
    params_level: int | None = None

    @property
    def phi(self) -> float:
        return self.measurement.phi


@dataclass
class Trajectory:
    """Ordered experiments plus the fixed point, when one was declared."""

    records: list
    terminal: np.ndarray | None = None

    @property
    def final_point(self) -> np.ndarray:
        return self.records[-1].u

    @property
    def terminated(self) -> bool:
        return self.terminal is not None

    def stepped(self) -> list:
        return [r for r in self.records if r.status == STATUS_STEPPED]

    @property
    def n_experiments(self) -> int:
        return len(self.records)


@dataclass
class RunConfig:
    """Run-scoped knobs; everything problem-intrinsic lives on the ProblemSpec."""

    budget: int = 100
    max_halvings: int = 10
    ceilings: ProjectionCeilings | None = None
    target: TargetRule | None = None
    adaptation: bool = True
    fixed_level: int = 0
    out: str | None = None


@dataclass
class AdaptOutcome:
    terminate: bool
    params: ProjectionParams | None = None
    witness: np.ndarray | None = None
    levels_tested: int = 0


def epsilon_active(g_p_values, g_values, params: ProjectionParams):
    """Indices whose constraint value is within epsilon of zero (boundary inclusive)."""
    gp = np.asarray(g_p_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    act_gp = tuple(int(j) for j in np.flatnonzero(gp >= -params.eps_p))
    act_g = tuple(int(j) for j in np.flatnonzero(g >= -params.eps))
    return act_gp, act_g


def assemble_projection(state: IterateRecord, params: ProjectionParams, box) -> HalfspaceSet:
    """Halfspace system of one projection: descent rows for every near-active
    constraint plus the mandatory cost-descent row; the box rides along."""
    act_gp, act_g = epsilon_active(state.measurement.g_p, state.g_values, params)
    rows = []
    offs = []
    for j in act_gp:
        grad = state.measurement.grad_g_p[j]
        if not np.any(grad):
            raise EngineError(
                f"zero-norm gradient on near-active experimental constraint {j} at k={state.k}: "
                "projection direction undefined"
            )
        rows.append(grad)
        offs.append(-params.delta_gp[j])
    for j in act_g:
        grad = state.g_grads[j]
        if not np.any(grad):
            raise EngineError(
                f"zero-norm gradient on near-active numerical constraint {j} at k={state.k}: "
                "projection direction undefined"
            )
        rows.append(grad)
        offs.append(-params.delta_g[j])
    grad_phi = state.measurement.grad_phi
    if not np.any(grad_phi):
        raise _ZeroCostRow
    rows.append(grad_phi)
    offs.append(-params.delta_phi)
    return HalfspaceSet(np.asarray(rows), np.asarray(offs), state.u, box)


def apply_filter(u_k: np.ndarray, u_bar: np.ndarray, K: float, box=None) -> np.ndarray:
    """Move the fraction K of the way from the current point to the projected target."""
    if not 0.0 <= K <= 1.0:
        raise ValueError(f"filter gain must lie in [0, 1], got {K}")
    if K == 0.0:
        u = np.array(u_k, dtype=float, copy=True)
    elif K == 1.0:
        u = np.array(u_bar, dtype=float, copy=True)
    else:
        u = u_k + K * (u_bar - u_k)
    return box.clamp(u) if box is not None else u


def filter_gain_search(state: IterateRecord, u_bar: np.ndarray, spec: ProblemSpec,
                       params: ProjectionParams, gb: GrowthBounds,
                       bisection_iters: int = 50) -> float:
    """Largest gain in [0, 1] satisfying the three filter conditions.

    The experimental-constraint and cost conditions invert in closed form
    (they are linear in K once the displacement is fixed); the numerical
    constraints are verified by direct evaluation at the candidate, falling
    back to a bisection that is guaranteed at least the Lipschitz-surrogate
    floor from the worst-case growth bounds.
    """
    u = state.u
    delta = u_bar - u
    if not np.any(delta):
        raise EngineError(
            f"projected target equals the current point at k={state.k}; "
            "the cost-descent row makes this impossible"
        )
    lip = spec.lipschitz

    cap = 1.0
    for j in range(spec.n_gp):
        growth = linear_growth(lip.kappa_p[j], u, u_bar)
        cap = min(cap, -state.measurement.g_p[j] / growth)
    qhalf = quadratic_growth(lip.M_phi, u, u_bar)
    dot = float(state.measurement.grad_phi @ delta)
    if dot >= 0.0:
        raise EngineError(f"projected target is not a descent direction at k={state.k} (slope {dot:.3e})")
    if qhalf > 0.0:
        cap = min(cap, -dot / qhalf)

    if spec.n_g == 0:
        K = cap
    else:
        def segment_ok(K_try: float) -> bool:
            vals, _ = evaluate_numerical(spec, apply_filter(u, u_bar, K_try, spec.box))
            return bool(np.all(vals <= 0.0))

        if segment_ok(cap):
            K = cap
        else:
            floor = min(
                min(params.eps[j] / gb.L[j], 2.0 * params.delta_g[j] / gb.Q_g[j])
                for j in range(spec.n_g)
            )
            floor = min(floor, cap)
            if not segment_ok(floor):
                raise EngineError(
                    f"numerical constraint violated at the surrogate gain floor {floor:.3e} "
                    f"at k={state.k}: Lipschitz constants invalid"
                )
            lo, hi = floor, cap
            for _ in range(bisection_iters):
                mid = 0.5 * (lo + hi)
                if segment_ok(mid):
                    lo = mid
                else:
                    hi = mid
            K = lo
    if not K > 0.0:
        raise EngineError(f"filter gain degenerated to {K} at k={state.k}")
    return float(min(K, 1.0))


def adapt_parameters(state: IterateRecord, spec: ProblemSpec, ceilings: ProjectionCeilings,
                     max_halvings: int = 10, adaptation: bool = True,
                     fixed_level: int = 0) -> AdaptOutcome:
    """Search for the least halving level with a feasible projection.

    Parameters restart from their ceilings before every experimental
    iteration.  Halving stops at the first feasible level; once level
    max_halvings has been tested infeasible, one more halving would push
    delta_phi below ceiling/2**max_halvings, so convergence is declared
    instead.
    """
    base = ProjectionParams(ceilings, 0)
    level = fixed_level if not adaptation else 0
    tested = 0
    while True:
        params = base.at_level(level)
        try:
            hs = assemble_projection(state, params, spec.box)
            wit = lp_feasible(hs)
        except _ZeroCostRow:
            wit = None
        tested += 1
        if wit is not None and wit.feasible:
            return AdaptOutcome(False, params=params, witness=wit.point, levels_tested=tested)
        if not adaptation or level >= max_halvings:
            return AdaptOutcome(True, levels_tested=tested)
        level += 1


def _measure_state(spec: ProblemSpec, k: int, u: np.ndarray) -> IterateRecord:
    m = spec.oracle.measure(u)
    g_vals, g_grads = evaluate_numerical(spec, u)
    return IterateRecord(k=k, u=np.asarray(u, dtype=float), measurement=m,
                         g_values=g_vals, g_grads=g_grads)


def _assert_feasible(rec: IterateRecord, spec: ProblemSpec):
    if rec.measurement.g_p.size and np.max(rec.measurement.g_p) >= 0.0:
        j = int(np.argmax(rec.measurement.g_p))
        raise EngineError(
            f"experimental constraint {j} reached {rec.measurement.g_p[j]:.6g} >= 0 at k={rec.k}: "
            "Lipschitz constants invalid"
        )
    if rec.g_values.size and np.max(rec.g_values) > 0.0:
        j = int(np.argmax(rec.g_values))
        raise EngineError(f"numerical constraint {j} violated ({rec.g_values[j]:.6g} > 0) at k={rec.k}")
    if not spec.box.contains(rec.u):
        raise EngineError(f"iterate left the box at k={rec.k}")


def step(state: IterateRecord, spec: ProblemSpec, config: RunConfig,
         ceilings: ProjectionCeilings, gb: GrowthBounds):
    """One experimental iteration from a measured point.

    Returns ``(decided, next_state)``: the input record with its decision
    filled in, plus the freshly measured next record — or ``None`` when the
    point was declared terminal (a terminated record is its own fixed point).
    """
    if state.status == STATUS_TERMINATED:
        return state, None

    outcome = adapt_parameters(state, spec, ceilings, max_halvings=config.max_halvings,
                               adaptation=config.adaptation, fixed_level=config.fixed_level)
    if outcome.terminate:
        level = config.max_halvings if config.adaptation else config.fixed_level
        decided = replace(state, status=STATUS_TERMINATED, params_level=level)
        log.info("k=%d: projection infeasible at every level, declaring convergence", state.k)
        return decided, None

    params = outcome.params
    target_rule = config.target or spec.target_rule
    target = np.asarray(target_rule(state.k), dtype=float)
    hs = assemble_projection(state, params, spec.box)
    try:
        u_bar = qp_project(target, hs)
    except InfeasibleProjectionError as exc:  # LP said feasible; QP must agree
        raise EngineError(f"projection disagreement at k={state.k}: {exc}") from exc

    K = filter_gain_search(state, u_bar, spec, params, gb)
    u_next = apply_filter(state.u, u_bar, K, spec.box)

    nxt = _measure_state(spec, state.k + 1, u_next)
    _assert_feasible(nxt, spec)
    if nxt.measurement.phi >= state.measurement.phi:
        raise EngineError(
            f"cost did not decrease at k={state.k} ({state.measurement.phi!r} -> "
            f"{nxt.measurement.phi!r}): Lipschitz constants invalid"
        )
    decided = replace(state, status=STATUS_STEPPED, target=target, projected_target=u_bar,
                      K=K, params_level=params.level)
    log.debug("k=%d: level=%d K=%.3e phi=%.6e", state.k, params.level, K, nxt.measurement.phi)
    return decided, nxt


def run(spec: ProblemSpec, config: RunConfig) -> Trajectory:
    """Drive the iteration from the initial point until termination or budget."""
    cur = _measure_state(spec, 0, spec.u0)
    report = validate_initial_point(spec, cur.measurement)
    if not report.ok:
        raise InfeasibleStartError(report)

    ceilings = config.ceilings or spec.default_ceilings
    if ceilings is None:
        raise ValueError("no projection-parameter ceilings: set them on the problem or the run config")
    gb = worst_case_growth(spec.lipschitz, spec.box)

    records = [cur]
    try:
        for _ in range(config.budget):
            decided, nxt = step(cur, spec, config, ceilings, gb)
            records[-1] = decided
            if nxt is None:
                break
            records.append(nxt)
            cur = nxt
    except Exception as exc:
        raise RunAborted(Trajectory(records), exc) from exc

    terminal = records[-1].u if records[-1].status == STATUS_TERMINATED else None
    return Trajectory(records, terminal)
