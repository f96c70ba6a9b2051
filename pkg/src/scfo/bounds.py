"""Lipschitz-bound arithmetic: growth bounds, filter-gain floor, iteration bound.

Everything here is a pure function of problem constants; nothing touches the
iteration state.  The floors and bounds are diagnostics that certify the run
(minimum filter gain, guaranteed constraint clearance, maximum number of
productive experiments), computed per projection-parameter level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Box, LipschitzData, ProblemSpec

__all__ = [
    "GrowthBounds",
    "linear_growth",
    "quadratic_growth",
    "worst_case_growth",
    "filter_gain_floor",
    "constraint_floor",
    "max_feasible_iterations",
    "LipschitzReport",
    "validate_lipschitz",
]


@dataclass(frozen=True)
class GrowthBounds:
    """Worst-case growth ceilings over the whole box.

    L_p[j] / L[j] bound the linear growth term of g_p,j / g_j for any pair of
    points in the box; Q_phi / Q_g[j] / Q_gp[j] bound the (un-halved)
    quadratic growth sums of the cost and constraints.
    """

    L_p: np.ndarray
    L: np.ndarray
    Q_phi: float
    Q_g: np.ndarray
    Q_gp: np.ndarray


def linear_growth(kappa_row: np.ndarray, u_from: np.ndarray, u_to: np.ndarray) -> float:
    """sum_i kappa_i |u_to,i - u_from,i| — the worst linear growth along the move."""
    kappa_row = np.asarray(kappa_row, dtype=float)
    return float(kappa_row @ np.abs(np.asarray(u_to, dtype=float) - np.asarray(u_from, dtype=float)))


def quadratic_growth(M: np.ndarray, u_from: np.ndarray, u_to: np.ndarray) -> float:
    """(1/2) sum_{i1,i2} M_{i1,i2} |d_{i1} d_{i2}| for d = u_to - u_from."""
    d = np.abs(np.asarray(u_to, dtype=float) - np.asarray(u_from, dtype=float))
    return 0.5 * float(d @ np.asarray(M, dtype=float) @ d)


def worst_case_growth(lip: LipschitzData, box: Box) -> GrowthBounds:
    """Growth ceilings obtained by stretching every displacement to the full box range."""
    r = box.ranges
    L_p = lip.kappa_p @ r if lip.n_gp else np.zeros(0)
    L = lip.kappa @ r if lip.n_g else np.zeros(0)
    Q_phi = float(r @ lip.M_phi @ r)
    Q_g = np.array([float(r @ m @ r) for m in lip.M_g])
    Q_gp = np.array([float(r @ m @ r) for m in lip.M_gp])
    return GrowthBounds(L_p=np.asarray(L_p, dtype=float), L=np.asarray(L, dtype=float),
                        Q_phi=Q_phi, Q_g=Q_g, Q_gp=Q_gp)


def constraint_floor(lip: LipschitzData, params, gb: GrowthBounds,
                     g_p_at_u0: np.ndarray, j: int) -> float:
    """Guaranteed floor on -g_p,j(u_k) over the whole run (fixed parameters).

    min[(1-gamma_j) eps_p,j,  2 (1-gamma_j) delta_gp,j^2 / Q_gp,j,  -g_p,j(u0)]
    """
    gam = lip.gamma[j]
    return float(min(
        (1.0 - gam) * params.eps_p[j],
        2.0 * (1.0 - gam) * params.delta_gp[j] ** 2 / gb.Q_gp[j],
        -float(g_p_at_u0[j]),
    ))


def filter_gain_floor(params, gb: GrowthBounds, lip: LipschitzData,
                      g_p_at_u0: np.ndarray) -> float:
    """Certified lower bound on the filter gain accepted by the line search.

    Minimum of three blocks: the cost block 2 delta_phi / Q_phi, the numerical
    constraint block min_j min(eps_j / L_j, 2 delta_g,j / Q_g,j), and the
    experimental constraint block constraint_floor(j) / L_p,j.
    """
    g_p_at_u0 = np.asarray(g_p_at_u0, dtype=float)
    if g_p_at_u0.size != lip.n_gp:
        raise ValueError("g_p_at_u0 must have one entry per experimental constraint")
    if np.any(-g_p_at_u0 <= 0.0):
        raise ValueError("the initial point must be strictly feasible: -g_p(u0) > 0")
    blocks = [2.0 * params.delta_phi / gb.Q_phi]
    for j in range(lip.n_g):
        blocks.append(min(params.eps[j] / gb.L[j], 2.0 * params.delta_g[j] / gb.Q_g[j]))
    for j in range(lip.n_gp):
        blocks.append(constraint_floor(lip, params, gb, g_p_at_u0, j) / gb.L_p[j])
    return float(min(blocks))


def max_feasible_iterations(K_floor: float, lip: LipschitzData, gb: GrowthBounds,
                            delta_phi: float, phi_u0: float, phi_lower: float) -> float:
    """Upper bound on the number of experiments with a feasible projection.

    (phi_lower - phi(u0)) divided by the guaranteed per-step decrease
    max[K (K gamma_phi Q_phi / 2 - delta_phi), 2 (gamma_phi - 1) delta_phi^2 / Q_phi],
    which must be strictly negative.
    """
    if K_floor <= 0.0:
        raise ValueError("K_floor must be strictly positive")
    if phi_lower > phi_u0:
        raise ValueError("phi_lower must not exceed phi(u0)")
    gphi = lip.gamma_phi
    denom = max(
        K_floor * (K_floor * gphi * gb.Q_phi / 2.0 - delta_phi),
        2.0 * (gphi - 1.0) * delta_phi**2 / gb.Q_phi,
    )
    if denom >= 0.0:
        raise ValueError(f"per-step decrease bound is not negative (got {denom}); invalid inputs")
    return float((phi_lower - phi_u0) / denom)


@dataclass
class LipschitzEntry:
    family: str  # "kappa_p" | "kappa" | "M_phi" | "M_g" | "M_gp"
    index: tuple
    constant: float
    worst_observed: float

    @property
    def ratio(self) -> float:
        return float(self.worst_observed / self.constant)

    @property
    def ok(self) -> bool:
        return bool(self.worst_observed < self.constant)


@dataclass
class LipschitzReport:
    """Empirical check of the declared constants on an analytic plant."""

    entries: list
    samples: int
    seed: int

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def violations(self) -> list:
        return [e for e in self.entries if not e.ok]

    def to_json(self):
        return {
            "ok": self.ok,
            "samples": self.samples,
            "seed": self.seed,
            "entries": [
                {
                    "family": e.family,
                    "index": [int(i) for i in e.index],
                    "constant": float(e.constant),
                    "worst_observed": float(e.worst_observed),
                    "ratio": e.ratio,
                    "ok": e.ok,
                }
                for e in self.entries
            ],
        }


def validate_lipschitz(spec: ProblemSpec, samples: int = 10_000, seed: int = 0) -> LipschitzReport:
    """Sample the box and compare analytic derivatives against the declared constants.

    Requires a plant exposing analytic derivatives (the builtin benchmark
    plants do): grad_phi/hess_phi and per-constraint grad/hess.  A failing
    report is data, not an error.
    """
    plant = spec.oracle
    for attr in ("grad_phi", "hess_phi", "grad_g_p_at", "hess_g_p"):
        if not hasattr(plant, attr):
            raise TypeError("validate_lipschitz needs an analytic builtin plant")
    rng = np.random.default_rng(seed)
    pts = spec.box.lower + rng.random((samples, spec.n_u)) * spec.box.ranges

    lip = spec.lipschitz
    worst_kp = np.zeros_like(lip.kappa_p)
    worst_k = np.zeros_like(lip.kappa)
    worst_mphi = np.zeros_like(lip.M_phi)
    worst_mg = [np.zeros_like(m) for m in lip.M_g]
    worst_mgp = [np.zeros_like(m) for m in lip.M_gp]

    for u in pts:
        np.maximum(worst_mphi, np.abs(plant.hess_phi(u)), out=worst_mphi)
        for j in range(spec.n_gp):
            np.maximum(worst_kp[j], np.abs(plant.grad_g_p_at(u, j)), out=worst_kp[j])
            np.maximum(worst_mgp[j], np.abs(plant.hess_g_p(u, j)), out=worst_mgp[j])
        for j, c in enumerate(spec.numerical_constraints):
            np.maximum(worst_k[j], np.abs(c.grad(u)), out=worst_k[j])
            np.maximum(worst_mg[j], np.abs(c.hess(u)), out=worst_mg[j])

    entries = []
    for j in range(spec.n_gp):
        for i in range(spec.n_u):
            entries.append(LipschitzEntry("kappa_p", (j, i), lip.kappa_p[j, i], worst_kp[j, i]))
    for j in range(lip.n_g):
        for i in range(spec.n_u):
            entries.append(LipschitzEntry("kappa", (j, i), lip.kappa[j, i], worst_k[j, i]))
    for i1 in range(spec.n_u):
        for i2 in range(spec.n_u):
            entries.append(LipschitzEntry("M_phi", (i1, i2), lip.M_phi[i1, i2], worst_mphi[i1, i2]))
    for j, m in enumerate(lip.M_g):
        for i1 in range(spec.n_u):
            for i2 in range(spec.n_u):
                entries.append(LipschitzEntry("M_g", (j, i1, i2), m[i1, i2], worst_mg[j][i1, i2]))
    for j, m in enumerate(lip.M_gp):
        for i1 in range(spec.n_u):
            for i2 in range(spec.n_u):
                entries.append(LipschitzEntry("M_gp", (j, i1, i2), m[i1, i2], worst_mgp[j][i1, i2]))
    return LipschitzReport(entries=entries, samples=samples, seed=seed)
