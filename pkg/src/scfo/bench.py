"""Built-in analytic benchmark plants, derived-optimum oracles, run summaries.

The two builtins stand in for real experiments: a 2-D quadratic cost over a
region cut by two measured parabolic constraints plus a numerical disk
exclusion, and the Rosenbrock function over the unit box.  Both expose
analytic first and second derivatives so the Lipschitz validator and the
soundness tests can work against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Box,
    LipschitzData,
    Measurement,
    OutsideDiskConstraint,
    ProblemSpec,
    ProjectionCeilings,
    box_center_target,
    fixed_target,
)

__all__ = [
    "ConstrainedQuadraticPlant",
    "RosenbrockPlant",
    "BUILTIN_NAMES",
    "builtin",
    "builtin_plant",
    "derived_optimum",
    "ceilings_from_grid",
    "Summary",
    "summarize",
]


class ConstrainedQuadraticPlant:
    """Quadratic bowl with two parabolic measured constraints (2-D)."""

    n_u = 2
    n_gp = 2

    def phi(self, u):
        u1, u2 = u[..., 0] if np.ndim(u) > 1 else u[0], u[..., 1] if np.ndim(u) > 1 else u[1]
        return (u1 - 0.5) ** 2 + (u2 - 0.4) ** 2

    def grad_phi(self, u):
        return np.array([2.0 * (u[0] - 0.5), 2.0 * (u[1] - 0.4)])

    def hess_phi(self, u):
        return np.array([[2.0, 0.0], [0.0, 2.0]])

    def g_p_at(self, u):
        u1, u2 = u[..., 0] if np.ndim(u) > 1 else u[0], u[..., 1] if np.ndim(u) > 1 else u[1]
        return np.stack([
            -6.0 * u1**2 - 3.5 * u1 + u2 - 0.6,
            2.0 * u1**2 + 0.5 * u1 + u2 - 0.75,
        ], axis=-1)

    def grad_g_p_at(self, u, j):
        if j == 0:
            return np.array([-12.0 * u[0] - 3.5, 1.0])
        return np.array([4.0 * u[0] + 0.5, 1.0])

    def hess_g_p(self, u, j):
        if j == 0:
            return np.array([[-12.0, 0.0], [0.0, 0.0]])
        return np.array([[4.0, 0.0], [0.0, 0.0]])

    def measure(self, u):
        u = np.asarray(u, dtype=float)
        return Measurement(
            phi=float(self.phi(u)),
            g_p=self.g_p_at(u),
            grad_phi=self.grad_phi(u),
            grad_g_p=np.vstack([self.grad_g_p_at(u, 0), self.grad_g_p_at(u, 1)]),
        )


class RosenbrockPlant:
    """The Rosenbrock valley as an experimental cost; no measured constraints."""

    n_u = 2
    n_gp = 0

    def phi(self, u):
        u1, u2 = u[..., 0] if np.ndim(u) > 1 else u[0], u[..., 1] if np.ndim(u) > 1 else u[1]
        return (1.0 - u1) ** 2 + 100.0 * (u2 - u1**2) ** 2

    def grad_phi(self, u):
        u1, u2 = u[0], u[1]
        return np.array([
            -2.0 * (1.0 - u1) - 400.0 * u1 * (u2 - u1**2),
            200.0 * (u2 - u1**2),
        ])

    def hess_phi(self, u):
        u1, u2 = u[0], u[1]
        return np.array([
            [2.0 + 1200.0 * u1**2 - 400.0 * u2, -400.0 * u1],
            [-400.0 * u1, 200.0],
        ])

    def g_p_at(self, u):
        return np.zeros(np.shape(u)[:-1] + (0,)) if np.ndim(u) > 1 else np.zeros(0)

    def grad_g_p_at(self, u, j):  # pragma: no cover - no experimental constraints
        raise IndexError("plant has no experimental constraints")

    def hess_g_p(self, u, j):  # pragma: no cover
        raise IndexError("plant has no experimental constraints")

    def measure(self, u):
        u = np.asarray(u, dtype=float)
        return Measurement(
            phi=float(self.phi(u)),
            g_p=np.zeros(0),
            grad_phi=self.grad_phi(u),
            grad_g_p=np.zeros((0, 2)),
        )


BUILTIN_NAMES = ("constrained_quadratic", "rosenbrock")


def builtin_plant(name: str):
    if name == "constrained_quadratic":
        return ConstrainedQuadraticPlant()
    if name == "rosenbrock":
        return RosenbrockPlant()
    raise KeyError(f"unknown builtin plant {name!r}; available: {BUILTIN_NAMES}")


def builtin(name: str) -> ProblemSpec:
    """Fully populated problem spec for a named builtin benchmark."""
    if name == "constrained_quadratic":
        box = Box(np.array([-0.5, 0.0]), np.array([0.5, 0.8]))
        lip = LipschitzData(
            kappa_p=np.array([[10.0, 2.0], [3.0, 2.0]]),
            kappa=np.array([[2.0, 2.0]]),
            M_phi=np.array([[3.0, 1.0], [1.0, 3.0]]),
            M_g=(np.array([[3.0, 1.0], [1.0, 3.0]]),),
            M_gp=(np.array([[13.0, 1.0], [1.0, 1.0]]), np.array([[5.0, 1.0], [1.0, 1.0]])),
            gamma=np.array([0.95, 0.95]),
            gamma_phi=0.95,
        )
        return ProblemSpec(
            box=box,
            oracle=ConstrainedQuadraticPlant(),
            lipschitz=lip,
            u0=np.array([-0.45, 0.05]),
            numerical_constraints=[OutsideDiskConstraint(center=np.array([0.0, 0.15]), radius=0.1)],
            target_rule=box_center_target(box),
            default_ceilings=ProjectionCeilings(
                eps_p=np.array([4.0, 2.0]),
                eps=np.array([1.0]),
                delta_gp=np.array([4.0, 2.0]),
                delta_g=np.array([1.0]),
                delta_phi=1.0,
            ),
            name=name,
        )
    if name == "rosenbrock":
        box = Box(np.zeros(2), np.ones(2))
        lip = LipschitzData(
            kappa_p=np.zeros((0, 2)),
            kappa=np.zeros((0, 2)),
            M_phi=np.array([[1500.0, 500.0], [500.0, 300.0]]),
            M_g=(),
            M_gp=(),
            gamma=np.zeros(0),
            gamma_phi=0.95,
        )
        return ProblemSpec(
            box=box,
            oracle=RosenbrockPlant(),
            lipschitz=lip,
            u0=np.zeros(2),
            numerical_constraints=[],
            target_rule=fixed_target(np.array([1.0, 1.0])),
            default_ceilings=ProjectionCeilings(
                eps_p=np.zeros(0), eps=np.zeros(0),
                delta_gp=np.zeros(0), delta_g=np.zeros(0),
                delta_phi=1.0,
            ),
            name=name,
        )
    raise KeyError(f"unknown builtin problem {name!r}; available: {BUILTIN_NAMES}")


def _grid_points(box: Box, resolution: float):
    axes = [
        np.linspace(box.lower[i], box.upper[i], int(round(box.ranges[i] / resolution)) + 1)
        for i in range(box.n)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _feasible_mask(spec: ProblemSpec, pts: np.ndarray) -> np.ndarray:
    plant = spec.oracle
    mask = np.ones(pts.shape[0], dtype=bool)
    if spec.n_gp:
        mask &= np.all(plant.g_p_at(pts) <= 0.0, axis=-1)
    for c in spec.numerical_constraints:
        vals = np.array([c.value(p) for p in pts]) if not hasattr(c, "value_batch") else c.value_batch(pts)
        mask &= vals <= 0.0
    return mask


def _constraint_curve_polish(spec: ProblemSpec, u_hat: np.ndarray, cval, cgrad, resolution: float):
    """1-D stationarity root-find along an active constraint curve (2-D only)."""
    plant = spec.oracle
    box = spec.box
    g0 = cgrad(u_hat)
    dep = int(np.argmax(np.abs(g0)))
    free = 1 - dep

    def solve_on_curve(t):
        u = u_hat.copy()
        u[free] = t
        for _ in range(60):
            v = cval(u)
            d = cgrad(u)[dep]
            if abs(d) < 1e-14:
                return None
            u[dep] -= v / d
            if abs(v) < 1e-15:
                break
        if not box.contains(u, tol=1e-9):
            return None
        return u

    def reduced_slope(t):
        h = 1e-7
        ua, ub = solve_on_curve(t - h), solve_on_curve(t + h)
        if ua is None or ub is None:
            return None
        return (plant.phi(ub) - plant.phi(ua)) / (2.0 * h)

    width = max(50.0 * resolution, 1e-3)
    lo = max(u_hat[free] - width, box.lower[free])
    hi = min(u_hat[free] + width, box.upper[free])
    slo, shi = reduced_slope(lo), reduced_slope(hi)
    if slo is None or shi is None or slo * shi > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        smid = reduced_slope(mid)
        if smid is None:
            return None
        if smid * slo <= 0:
            hi = mid
        else:
            lo, slo = mid, smid
        if hi - lo < 1e-12:
            break
    return solve_on_curve(0.5 * (lo + hi))


def _projected_gradient_polish(spec: ProblemSpec, u_hat: np.ndarray) -> np.ndarray:
    plant = spec.oracle

    def feasible(u):
        if spec.n_gp and np.any(plant.g_p_at(u) > 0.0):
            return False
        return all(c.value(u) <= 0.0 for c in spec.numerical_constraints)

    u = u_hat.copy()
    f = float(plant.phi(u))
    for _ in range(2000):
        g = plant.grad_phi(u)
        step = 0.25
        improved = False
        while step > 1e-14:
            cand = spec.box.clamp(u - step * g)
            fc = float(plant.phi(cand))
            if fc < f - 1e-16 and feasible(cand):
                u, f = cand, fc
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return u


def derived_optimum(spec: ProblemSpec, resolution: float = 1e-3) -> np.ndarray:
    """Reference optimum by feasible grid search plus a local polish.

    Independent of the QP and iteration code paths: brute-force argmin over
    the feasible grid, then either a stationarity root-find along the single
    near-active constraint curve or a projected-gradient descent when no
    constraint is near-active.
    """
    if not hasattr(spec.oracle, "phi"):
        raise TypeError("derived_optimum needs an analytic builtin plant")
    pts = _grid_points(spec.box, resolution)
    mask = _feasible_mask(spec, pts)
    if not mask.any():
        raise ValueError("no feasible grid point found")
    feas = pts[mask]
    u_hat = feas[int(np.argmin(spec.oracle.phi(feas)))]

    near_active = []
    if spec.n_gp:
        plant = spec.oracle
        for j in range(spec.n_gp):
            v = float(plant.g_p_at(u_hat)[j])
            tol = 10.0 * resolution * max(1.0, float(np.max(np.abs(plant.grad_g_p_at(u_hat, j)))))
            if abs(v) <= tol:
                near_active.append((lambda u, j=j: float(plant.g_p_at(u)[j]),
                                    lambda u, j=j: plant.grad_g_p_at(u, j)))
    for c in spec.numerical_constraints:
        tol = 10.0 * resolution * max(1.0, float(np.max(np.abs(c.grad(u_hat)))))
        if abs(c.value(u_hat)) <= tol:
            near_active.append((c.value, c.grad))

    if len(near_active) == 1 and spec.n_u == 2:
        cval, cgrad = near_active[0]
        polished = _constraint_curve_polish(spec, u_hat, cval, cgrad, resolution)
        if polished is not None and _feasible_mask(spec, polished[None, :])[0]:
            return polished
        return u_hat
    if not near_active:
        return _projected_gradient_polish(spec, u_hat)
    return u_hat


def ceilings_from_grid(spec: ProblemSpec, resolution: float = 0.01) -> ProjectionCeilings:
    """Parameter ceilings sized to the function ranges over the box.

    eps/delta ceilings are the (negated) grid minima of each constraint and
    the cost ceiling is the initial suboptimality gap; only the order of
    magnitude matters.
    """
    if not hasattr(spec.oracle, "phi"):
        raise TypeError("ceilings_from_grid needs an analytic builtin plant")
    pts = _grid_points(spec.box, resolution)
    plant = spec.oracle
    if spec.n_gp:
        eps_p = -np.min(plant.g_p_at(pts), axis=0)
    else:
        eps_p = np.zeros(0)
    eps = np.array([
        -min(c.value(p) for p in pts) if not hasattr(c, "value_batch") else -np.min(c.value_batch(pts))
        for c in spec.numerical_constraints
    ])
    if np.any(eps_p <= 0) or np.any(eps <= 0):
        raise ValueError("a constraint is never strictly negative on the grid; cannot size ceilings")
    delta_phi = float(plant.phi(spec.u0) - np.min(plant.phi(pts)))
    if delta_phi <= 0:
        raise ValueError("u0 already attains the grid minimum cost; cannot size delta_phi")
    return ProjectionCeilings(eps_p=eps_p, eps=eps, delta_gp=eps_p.copy(), delta_g=eps.copy(),
                              delta_phi=delta_phi)


@dataclass
class Summary:
    """Post-run digest of a trajectory."""

    n_experiments: int
    final_cost: float
    max_g_p: float | None
    max_g: float | None
    terminated: bool
    terminal: list | None
    cost_vs_k: list
    distance_to_reference: list | None

    def to_json(self):
        return {
            "experiments": self.n_experiments,
            "final_cost": self.final_cost,
            "max_g_p": self.max_g_p,
            "max_g": self.max_g,
            "terminated": self.terminated,
            "terminal": self.terminal,
            "cost_vs_k": self.cost_vs_k,
            "distance_to_reference": self.distance_to_reference,
        }


def summarize(traj, reference: np.ndarray | None = None) -> Summary:
    """Experiment count, final cost, worst constraint values, and the k-series."""
    if not traj.records:
        raise ValueError("empty trajectory")
    costs = [r.measurement.phi for r in traj.records]
    gp_max = max((float(np.max(r.measurement.g_p)) for r in traj.records if r.measurement.g_p.size),
                 default=None)
    g_max = max((float(np.max(r.g_values)) for r in traj.records if r.g_values.size), default=None)
    dist = None
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        dist = [float(np.linalg.norm(r.u - ref)) for r in traj.records]
    return Summary(
        n_experiments=len(traj.records),
        final_cost=costs[-1],
        max_g_p=gp_max,
        max_g=g_max,
        terminated=traj.terminated,
        terminal=traj.terminal.tolist() if traj.terminal is not None else None,
        cost_vs_k=costs,
        distance_to_reference=dist,
    )
