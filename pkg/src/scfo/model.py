"""Problem model: decision box, Lipschitz data, plant-oracle contract, static problem data.

The optimization problem solved by this package is

    minimize   phi_p(u)
    subject to g_p,j(u) <= 0   (experimental constraints, measured only)
               g_j(u)   <= 0   (numerical constraints, evaluable in closed form)
               lower <= u <= upper

where the subscript-p functions can only be evaluated by running an
experiment (here: querying a :class:`PlantOracle`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np

__all__ = [
    "Box",
    "LipschitzData",
    "Measurement",
    "PlantOracle",
    "NumericalConstraint",
    "LinearConstraint",
    "OutsideDiskConstraint",
    "ProjectionCeilings",
    "TargetRule",
    "box_center_target",
    "fixed_target",
    "file_target",
    "ProblemSpec",
    "InitialPointReport",
    "validate_initial_point",
    "evaluate_numerical",
]


def _vec(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries: {v}")
    return v


@dataclass(frozen=True)
class Box:
    """Decision box lower <= u <= upper with strictly positive ranges."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _vec(self.lower, "lower"))
        object.__setattr__(self, "upper", _vec(self.upper, "upper"))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower/upper length mismatch")
        if not np.all(self.lower < self.upper):
            raise ValueError("box requires lower < upper componentwise")

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


def _positive_matrix(m, shape, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    if a.size and not np.all(a > 0.0):
        raise ValueError(f"{name} must be strictly positive everywhere")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class LipschitzData:
    """Strict Lipschitz constants for the problem functions over the box.

    kappa_p[j, i] bounds |d g_p,j / d u_i| strictly from above; kappa does the
    same for the numerical constraints.  M_phi, M_g[j], M_gp[j] strictly bound
    the second derivatives of the cost and of the constraints.  gamma[j] and
    gamma_phi are the strictness coefficients: the ratio by which the tightest
    (nonstrict) constants are dominated by the strict ones.  They never enter
    the iteration itself, only the convergence diagnostics.

    Curvature matrices are symmetrized on input: the quadratic growth bound
    sums over both index orders, so an asymmetric input would double-count.
    """

    kappa_p: np.ndarray
    kappa: np.ndarray
    M_phi: np.ndarray
    M_g: tuple
    M_gp: tuple
    gamma: np.ndarray
    gamma_phi: float = 0.95

    def __post_init__(self):
        n_u = np.asarray(self.M_phi, dtype=float).shape[0]
        kp = np.asarray(self.kappa_p, dtype=float).reshape(-1, n_u) if np.asarray(self.kappa_p).size else np.zeros((0, n_u))
        k = np.asarray(self.kappa, dtype=float).reshape(-1, n_u) if np.asarray(self.kappa).size else np.zeros((0, n_u))
        for a, nm in ((kp, "kappa_p"), (k, "kappa")):
            if a.size and not np.all(a > 0.0):
                raise ValueError(f"{nm} must be strictly positive")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{nm} has non-finite entries")
        mphi = _positive_matrix(self.M_phi, (n_u, n_u), "M_phi")
        mg = tuple(_positive_matrix(m, (n_u, n_u), f"M_g[{j}]") for j, m in enumerate(self.M_g))
        mgp = tuple(_positive_matrix(m, (n_u, n_u), f"M_gp[{j}]") for j, m in enumerate(self.M_gp))
        if len(mg) != k.shape[0]:
            raise ValueError("M_g must have one matrix per numerical constraint")
        if len(mgp) != kp.shape[0]:
            raise ValueError("M_gp must have one matrix per experimental constraint")
        gam = np.asarray(self.gamma, dtype=float).reshape(-1)
        if gam.size != kp.shape[0]:
            raise ValueError("gamma needs one entry per experimental constraint")
        if gam.size and not np.all((gam > 0.0) & (gam < 1.0)):
            raise ValueError("gamma entries must lie in (0, 1)")
        if not (0.0 <= self.gamma_phi < 1.0):
            raise ValueError("gamma_phi must lie in [0, 1)")
        sym = lambda m: 0.5 * (m + m.T)
        object.__setattr__(self, "kappa_p", kp)
        object.__setattr__(self, "kappa", k)
        object.__setattr__(self, "M_phi", sym(mphi))
        object.__setattr__(self, "M_g", tuple(sym(m) for m in mg))
        object.__setattr__(self, "M_gp", tuple(sym(m) for m in mgp))
        object.__setattr__(self, "gamma", gam)
        object.__setattr__(self, "gamma_phi", float(self.gamma_phi))

    @property
    def n_gp(self) -> int:
        return self.kappa_p.shape[0]

    @property
    def n_g(self) -> int:
        return self.kappa.shape[0]


@dataclass(frozen=True)
class Measurement:
    """One experiment's outcome: cost, experimental constraints, and their gradients."""

    phi: float
    g_p: np.ndarray
    grad_phi: np.ndarray
    grad_g_p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "g_p", _vec(self.g_p, "g_p") if np.asarray(self.g_p).size else np.zeros(0))
        object.__setattr__(self, "grad_phi", _vec(self.grad_phi, "grad_phi"))
        gg = np.asarray(self.grad_g_p, dtype=float)
        n_u = self.grad_phi.size
        gg = gg.reshape(-1, n_u) if gg.size else np.zeros((0, n_u))
        if gg.shape[0] != self.g_p.size:
            raise ValueError("grad_g_p must have one row per experimental constraint")
        if not (np.isfinite(self.phi) and np.all(np.isfinite(gg))):
            raise ValueError("measurement has non-finite entries")
        object.__setattr__(self, "grad_g_p", gg)


@runtime_checkable
class PlantOracle(Protocol):
    """Behavioral contract for the plant: deterministic, repeatable measurements."""

    def measure(self, u: np.ndarray) -> Measurement: ...


class NumericalConstraint:
    """A closed-form constraint g(u) <= 0 with an evaluable gradient."""

    name = "numerical"

    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LinearConstraint(NumericalConstraint):
    """a'u - b <= 0."""

    name = "linear"

    def __init__(self, a, b: float):
        self.a = _vec(a, "a")
        self.b = float(b)

    def value(self, u):
        return float(self.a @ u - self.b)

    def value_batch(self, pts):
        return np.asarray(pts, dtype=float) @ self.a - self.b

    def grad(self, u):
        return self.a.copy()

    def hess(self, u):
        return np.zeros((self.a.size, self.a.size))

    def to_json(self):
        return {"type": "linear", "a": self.a.tolist(), "b": self.b}


class OutsideDiskConstraint(NumericalConstraint):
    """Keep u outside the open disk of given radius: r^2 - ||u - c||^2 <= 0."""

    name = "outside_disk"

    def __init__(self, center, radius: float):
        self.center = _vec(center, "center")
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def value(self, u):
        d = np.asarray(u, dtype=float) - self.center
        return float(self.radius**2 - d @ d)

    def value_batch(self, pts):
        d = np.asarray(pts, dtype=float) - self.center
        return self.radius**2 - np.sum(d * d, axis=-1)

    def grad(self, u):
        return -2.0 * (np.asarray(u, dtype=float) - self.center)

    def hess(self, u):
        return -2.0 * np.eye(self.center.size)

    def to_json(self):
        return {"type": "outside_disk", "center": self.center.tolist(), "radius": self.radius}


def constraint_from_json(entry) -> NumericalConstraint:
    """Build a numerical constraint from its problem-file entry (builtin forms only)."""
    if not isinstance(entry, dict) or "type" not in entry:
        raise ValueError(f"numerical constraint entries must be objects with a 'type': {entry!r}")
    kind = entry["type"]
    if kind == "linear":
        return LinearConstraint(entry["a"], entry["b"])
    if kind == "outside_disk":
        return OutsideDiskConstraint(entry["center"], entry["radius"])
    raise ValueError(f"unknown numerical constraint type {kind!r}")


# A target rule maps the iteration counter k to the raw target u*_{k+1}.  The
# method does not care how the target is chosen (it is projected anyway), so
# this stays pluggable.
TargetRule = Callable[[int], np.ndarray]


def box_center_target(box: Box) -> TargetRule:
    c = box.center

    def rule(k: int) -> np.ndarray:
        return c.copy()

    rule.description = "box_center"
    return rule


def fixed_target(point) -> TargetRule:
    p = _vec(point, "target")

    def rule(k: int) -> np.ndarray:
        return p.copy()

    rule.description = f"fixed:{p.tolist()}"
    return rule


def file_target(path: str, n_u: int) -> TargetRule:
    """Target re-read from a JSON file (a length-n_u array) at every iteration."""

    def rule(k: int) -> np.ndarray:
        with open(path) as fh:
            data = json.load(fh)
        p = _vec(data, f"target file {path}")
        if p.size != n_u:
            raise ValueError(f"target file {path} has length {p.size}, expected {n_u}")
        return p

    rule.description = f"file:{path}"
    return rule


@dataclass(frozen=True)
class ProjectionCeilings:
    """Upper bounds for the projection parameters (the level-0 values).

    Sized approximately as the ranges of the respective functions over the
    box; only the order of magnitude matters.
    """

    eps_p: np.ndarray
    eps: np.ndarray
    delta_gp: np.ndarray
    delta_g: np.ndarray
    delta_phi: float

    def __post_init__(self):
        for nm in ("eps_p", "eps", "delta_gp", "delta_g"):
            v = np.asarray(getattr(self, nm), dtype=float).reshape(-1)
            if v.size and not np.all(v > 0):
                raise ValueError(f"{nm} ceiling entries must be strictly positive")
            object.__setattr__(self, nm, v)
        if self.eps_p.shape != self.delta_gp.shape or self.eps.shape != self.delta_g.shape:
            raise ValueError("epsilon/delta ceiling shapes must match")
        if self.delta_phi <= 0:
            raise ValueError("delta_phi ceiling must be strictly positive")
        object.__setattr__(self, "delta_phi", float(self.delta_phi))


@dataclass
class ProblemSpec:
    """Everything static about one experimental optimization problem.

    Treat as immutable once constructed; specs and their Lipschitz data are
    safe to share across threads.  The iteration engine queries the plant
    oracle strictly sequentially; oracle implementations only need to be
    thread-safe if the caller runs independent problems concurrently.
    """

    box: Box
    oracle: PlantOracle
    lipschitz: LipschitzData
    u0: np.ndarray
    numerical_constraints: list = field(default_factory=list)
    target_rule: TargetRule | None = None
    default_ceilings: ProjectionCeilings | None = None
    name: str = "problem"

    def __post_init__(self):
        self.u0 = _vec(self.u0, "u0")
        if self.u0.size != self.box.n:
            raise ValueError("u0 length does not match the box dimension")
        if self.lipschitz.kappa_p.shape[1] != self.box.n:
            raise ValueError("Lipschitz data dimension does not match the box")
        if self.lipschitz.n_g != len(self.numerical_constraints):
            raise ValueError("kappa must have one row per numerical constraint")
        if self.target_rule is None:
            self.target_rule = box_center_target(self.box)

    @property
    def n_u(self) -> int:
        return self.box.n

    @property
    def n_gp(self) -> int:
        return self.lipschitz.n_gp

    @property
    def n_g(self) -> int:
        return len(self.numerical_constraints)


@dataclass
class InitialPointReport:
    """Per-constraint verdicts on the initial experiment."""

    ok: bool
    gp_values: np.ndarray
    g_values: np.ndarray
    gp_ok: np.ndarray
    g_ok: np.ndarray
    bounds_ok: np.ndarray
    failures: list

    def message(self) -> str:
        if self.ok:
            return "initial point accepted"
        return "initial point rejected: " + "; ".join(self.failures)


def validate_initial_point(spec: ProblemSpec, m0: Measurement) -> InitialPointReport:
    """Check the initial-experiment admissibility rule.

    The first point must be *strictly* feasible for every experimental
    constraint (g_p,j(u0) < 0), feasible for the numerical constraints
    (g_j(u0) <= 0), and inside the box (bounds may be active).  The solver
    refuses to run when this fails.
    """
    g_vals, _ = evaluate_numerical(spec, spec.u0)
    gp_ok = m0.g_p < 0.0
    g_ok = g_vals <= 0.0
    b_ok = (spec.u0 >= spec.box.lower) & (spec.u0 <= spec.box.upper)
    failures = []
    for j in np.flatnonzero(~gp_ok):
        failures.append(f"g_p[{j}](u0) = {m0.g_p[j]:.6g} (must be < 0)")
    for j in np.flatnonzero(~g_ok):
        failures.append(f"g[{j}](u0) = {g_vals[j]:.6g} (must be <= 0)")
    for i in np.flatnonzero(~b_ok):
        failures.append(f"u0[{i}] = {spec.u0[i]:.6g} outside [{spec.box.lower[i]}, {spec.box.upper[i]}]")
    return InitialPointReport(
        ok=not failures,
        gp_values=m0.g_p.copy(),
        g_values=g_vals,
        gp_ok=gp_ok,
        g_ok=g_ok,
        bounds_ok=b_ok,
        failures=failures,
    )


def evaluate_numerical(spec: ProblemSpec, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate all numerical constraints and their gradients at u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.n_u,) or not np.all(np.isfinite(u)):
        raise ValueError(f"u must be a finite vector of length {spec.n_u}")
    n_g = spec.n_g
    values = np.zeros(n_g)
    grads = np.zeros((n_g, spec.n_u))
    for j, c in enumerate(spec.numerical_constraints):
        values[j] = c.value(u)
        grads[j] = c.grad(u)
    if n_g and not (np.all(np.isfinite(values)) and np.all(np.isfinite(grads))):
        raise ValueError("numerical constraint evaluation produced non-finite values")
    return values, grads
