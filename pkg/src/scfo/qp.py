"""Small dense convex solvers: phase-1 LP feasibility and Euclidean projection.

Both solvers operate on a :class:`HalfspaceSet` — the linearized constraint
system of one projection step, anchored at the current iterate — plus the
decision box.  Problem sizes are tiny (a handful of variables and rows), so
exact dense methods are used throughout: a phase-1 simplex with Bland's rule
for feasibility, and a primal active-set method (identity Hessian) for the
projection itself.  Both are stateless per call and safe to run concurrently
on distinct instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import Box

__all__ = [
    "HalfspaceSet",
    "FeasibilityWitness",
    "InfeasibleProjectionError",
    "lp_feasible",
    "qp_project",
    "qp_project_info",
    "QPSolution",
]

#: absolute tolerance on the phase-1 optimum below which the set is feasible
FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-12


class InfeasibleProjectionError(RuntimeError):
    """Raised when qp_project is called on an infeasible halfspace set."""


@dataclass(frozen=True)
class HalfspaceSet:
    """Rows a_i'(u - anchor) <= b_i together with the decision box."""

    A: np.ndarray
    b: np.ndarray
    anchor: np.ndarray
    box: Box

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float).reshape(-1)
        n = anchor.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.asarray(self.A).size else np.zeros((0, n))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError("A and b row counts differ")
        if n != self.box.n:
            raise ValueError("anchor dimension does not match the box")
        norms = np.linalg.norm(A, axis=1) if A.shape[0] else np.zeros(0)
        if np.any(norms == 0.0):
            raise ValueError(f"zero-norm halfspace rows at indices {np.flatnonzero(norms == 0.0).tolist()}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(anchor))):
            raise ValueError("halfspace data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "anchor", anchor)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.anchor.size

    def offsets_absolute(self) -> np.ndarray:
        """Right-hand sides in absolute form a_i'u <= b_i + a_i'anchor."""
        return self.b + self.A @ self.anchor

    def residuals(self, u: np.ndarray) -> np.ndarray:
        """Row violations a_i'(u - anchor) - b_i (<= 0 when satisfied)."""
        return self.A @ (np.asarray(u, dtype=float) - self.anchor) - self.b

    def to_json(self) -> dict:
        return {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "anchor": self.anchor.tolist(),
            "box": {"lower": self.box.lower.tolist(), "upper": self.box.upper.tolist()},
        }

    @staticmethod
    def from_json(data: dict) -> "HalfspaceSet":
        box = Box(np.asarray(data["box"]["lower"]), np.asarray(data["box"]["upper"]))
        return HalfspaceSet(np.asarray(data["A"]), np.asarray(data["b"]), np.asarray(data["anchor"]), box)


@dataclass(frozen=True)
class FeasibilityWitness:
    feasible: bool
    point: np.ndarray | None
    phase1_value: float


def lp_feasible(hs: HalfspaceSet, max_pivots: int | None = None) -> FeasibilityWitness:
    """Phase-1 simplex feasibility test for the halfspace-and-box system.

    Returns a witness point satisfying every inequality (residual <= 1e-9)
    when the system is feasible.  Bland's rule guards against cycling; the
    pivot budget tripping is a hard error reporting the instance.
    """
    n, m = hs.n, hs.m
    if m == 0:
        return FeasibilityWitness(True, hs.box.center, 0.0)

    # Shift to x = u - lower in [0, r]; rows become [A; I] x <= h.
    r = hs.box.ranges
    G = np.vstack([hs.A, np.eye(n)])
    h = np.concatenate([hs.offsets_absolute() - hs.A @ hs.box.lower, r])
    mrows = G.shape[0]
    neg = h < 0.0

    n_art = int(np.count_nonzero(neg))
    ncols = n + mrows + n_art
    T = np.zeros((mrows, ncols))
    rhs = np.zeros(mrows)
    basis = np.zeros(mrows, dtype=int)
    art_col = n + mrows
    for i in range(mrows):
        if neg[i]:
            T[i, :n] = -G[i]
            T[i, n + i] = -1.0
            T[i, art_col] = 1.0
            rhs[i] = -h[i]
            basis[i] = art_col
            art_col += 1
        else:
            T[i, :n] = G[i]
            T[i, n + i] = 1.0
            rhs[i] = h[i]
            basis[i] = n + i

    # Phase-1 objective: minimize the sum of artificials.
    z = np.zeros(ncols)
    z[n + mrows:] = 1.0
    for i in range(mrows):
        if neg[i]:
            z -= T[i]

    if max_pivots is None:
        max_pivots = 200 * (ncols + 1)
    for _ in range(max_pivots):
        entering = -1
        for j in range(ncols):  # Bland: first improving column
            if z[j] < -_PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            break
        col = T[:, entering]
        leave = -1
        best = np.inf
        for i in range(mrows):
            if col[i] > 1e-10:
                ratio = rhs[i] / col[i]
                if ratio < best - _PIVOT_TOL or (abs(ratio - best) <= _PIVOT_TOL and (leave < 0 or basis[i] < basis[leave])):
                    best = ratio
                    leave = i
        if leave < 0:
            raise RuntimeError(
                "phase-1 simplex detected an unbounded direction (numerical failure); instance: "
                + json.dumps(hs.to_json())
            )
        piv = T[leave, entering]
        T[leave] /= piv
        rhs[leave] /= piv
        factors = T[:, entering].copy()
        factors[leave] = 0.0
        T -= np.outer(factors, T[leave])
        rhs -= factors * rhs[leave]
        z = z - z[entering] * T[leave]
        basis[leave] = entering
    else:
        raise RuntimeError(
            "phase-1 simplex exceeded its pivot budget; instance: " + json.dumps(hs.to_json())
        )

    artificial_basic = basis >= n + mrows
    value = float(max(rhs[artificial_basic].sum(), 0.0))
    if value > FEAS_TOL:
        return FeasibilityWitness(False, None, value)
    x = np.zeros(ncols)
    x[basis] = rhs
    u = hs.box.clamp(hs.box.lower + x[:n])
    return FeasibilityWitness(True, u, value)


@dataclass(frozen=True)
class QPSolution:
    point: np.ndarray
    active: tuple
    multipliers: np.ndarray
    kkt_stationarity: float
    kkt_primal: float
    kkt_slackness: float


def _stack_constraints(hs: HalfspaceSet):
    """All inequalities as C u <= d: halfspace rows, then upper, then lower bounds."""
    n = hs.n
    C = np.vstack([hs.A, np.eye(n), -np.eye(n)])
    d = np.concatenate([hs.offsets_absolute(), hs.box.upper, -hs.box.lower])
    return C, d


def qp_project_info(target: np.ndarray, hs: HalfspaceSet, max_iter: int | None = None) -> QPSolution:
    """Project the target onto the halfspace-and-box set (full solution record).

    Primal active-set iteration on min ||u - target||^2; the Hessian is the
    identity, so every equality-constrained subproblem is a least-squares
    null-space projection.  Warm-started from the box-clamped target when that
    point is already feasible; otherwise from the phase-1 witness.
    """
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.size != hs.n:
        raise ValueError("target dimension mismatch")
    C, d = _stack_constraints(hs)
    m_total = C.shape[0]

    u = hs.box.clamp(target)
    if np.any(C @ u - d > 1e-12):
        wit = lp_feasible(hs)
        if not wit.feasible:
            raise InfeasibleProjectionError(
                "projection set is infeasible (phase-1 value %.3e)" % wit.phase1_value
            )
        u = wit.point.copy()

    act_tol = 1e-9
    W = [int(i) for i in np.flatnonzero(C @ u - d >= -act_tol)]
    if max_iter is None:
        max_iter = 100 + 30 * m_total
    mu_W = np.zeros(0)

    for _ in range(max_iter):
        r = target - u
        if W:
            # Project r onto the null space of the active rows via SVD; exact
            # (p = 0) when the active set spans the whole space.
            _, sv, Vt = np.linalg.svd(C[W], full_matrices=True)
            rank = int(np.sum(sv > (sv[0] if sv.size else 0.0) * 1e-12))
            null_basis = Vt[rank:].T
            p = null_basis @ (null_basis.T @ r) if null_basis.size else np.zeros_like(r)
        else:
            p = r
        if np.linalg.norm(p) <= 1e-10 * max(1.0, np.linalg.norm(r)):
            if W:
                mu_W, *_ = np.linalg.lstsq(C[W].T, r, rcond=None)
            else:
                mu_W = np.zeros(0)
            if mu_W.size == 0 or np.min(mu_W) >= -1e-9:
                break
            # Drop the most negative multiplier (smallest row index on ties).
            worst = int(np.argmin(mu_W))
            del W[worst]
            continue
        # Step toward the unconstrained target of the current face.
        alpha = 1.0
        blocking = -1
        cu = C @ u
        cp = C @ p
        for i in range(m_total):
            if i in W or cp[i] <= 1e-13:
                continue
            a_i = (d[i] - cu[i]) / cp[i]
            if a_i < alpha - 1e-15:
                alpha = max(a_i, 0.0)
                blocking = i
        u = u + alpha * p
        if blocking >= 0 and alpha < 1.0:
            W.append(blocking)
            W.sort()
    else:
        raise RuntimeError(
            "active-set projection exceeded its iteration cap; instance: " + json.dumps(hs.to_json())
        )

    u = hs.box.clamp(u)
    mu = np.clip(mu_W, 0.0, None) if mu_W.size else np.zeros(0)
    res = C @ u - d
    stat = float(np.linalg.norm(u - target + (C[W].T @ mu if W else 0.0), ord=np.inf))
    primal = float(max(res.max(initial=0.0), 0.0))
    slack = float(max((np.abs(mu * res[W])).max(initial=0.0), 0.0)) if W else 0.0
    if max(stat, primal, slack) > 1e-8:
        raise RuntimeError(
            f"projection KKT residuals too large (stat {stat:.2e}, primal {primal:.2e}, "
            f"slack {slack:.2e}); instance: " + json.dumps(hs.to_json())
        )
    return QPSolution(point=u, active=tuple(W), multipliers=mu,
                      kkt_stationarity=stat, kkt_primal=primal, kkt_slackness=slack)


def qp_project(target: np.ndarray, hs: HalfspaceSet) -> np.ndarray:
    """Euclidean projection of the target onto the halfspace-and-box set."""
    return qp_project_info(target, hs).point
