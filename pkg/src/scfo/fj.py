"""Stationarity certificates: multiplier systems, the residual metric, and solvers.

A point is stationary when nonnegative multipliers (cost, constraints, and
bounds — the cost multiplier is allowed to vanish) drive the Lagrangian
gradient to zero while satisfying complementary slackness.  The error metric
is the minimal sum of squared residuals of those equalities over a normalized
multiplier set.  Two normalizations are implemented:

``unit_sphere``
    The multiplier vector is constrained to the Euclidean unit sphere inside
    the nonnegative orthant; every multiplier is free.  The metric becomes
    the minimum nonnegative Rayleigh quotient of a PSD form.

``fixed_cost_multiplier``
    The cost multiplier is pinned to 1 and the multipliers of inactive
    constraints/bounds are pinned to 0; the remaining (active) multipliers
    solve a nonnegative least-squares problem.

The two modes disagree by construction (they minimize over different sets);
certificates always carry which one produced the number.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import nnls

from .model import Measurement, ProblemSpec, evaluate_numerical

__all__ = [
    "FJCertificate",
    "fj_error",
    "certify_terminal",
    "cyclic_jacobi",
    "min_nonneg_rayleigh",
    "stationarity_form",
]

UNIT_SPHERE = "unit_sphere"
FIXED_COST = "fixed_cost_multiplier"
_MODES = (UNIT_SPHERE, FIXED_COST)

#: activity tolerance used when no explicit epsilon thresholds are supplied
ACTIVE_TOL = 1e-9


def cyclic_jacobi(A: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues ascending and the matching orthonormal eigenvectors
    as columns.
    """
    A = np.array(A, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A[0, :1].copy(), V
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.tril(A, -1) ** 2))
        scale = max(1.0, np.sqrt(np.sum(np.diag(A) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 if theta == 0.0 else np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = A[p].copy(), A[q].copy()
                A[p] = c * rp - s * rq
                A[q] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def _eig_small(S: np.ndarray):
    """Eigenpairs for 1x1/2x2 in closed form, cyclic Jacobi otherwise."""
    n = S.shape[0]
    if n == 1:
        return np.array([S[0, 0]]), np.eye(1)
    if n == 2:
        a, b, c = S[0, 0], S[0, 1], S[1, 1]
        disc = np.hypot(a - c, 2.0 * b)
        lo = 0.5 * (a + c - disc)
        hi = 0.5 * (a + c + disc)
        if abs(b) < 1e-300:
            if a <= c:
                return np.array([a, c]), np.eye(2)
            return np.array([c, a]), np.eye(2)[:, ::-1]
        v1 = np.array([b, lo - a])
        if np.linalg.norm(v1) < 1e-150:
            v1 = np.array([lo - c, b])
        v1 = v1 / np.linalg.norm(v1)
        v2 = np.array([-v1[1], v1[0]])
        return np.array([lo, hi]), np.column_stack([v1, v2])
    return cyclic_jacobi(S)


def _orient_nonneg(v: np.ndarray, tol: float = 1e-10):
    """Flip the eigenvector sign so its dominant entry is positive; accept if nonnegative."""
    i = int(np.argmax(np.abs(v)))
    if v[i] < 0:
        v = -v
    if np.min(v) >= -tol:
        return np.clip(v, 0.0, None)
    return None


def min_nonneg_rayleigh(Psi: np.ndarray, support_limit: int = 20):
    """Minimize x'Psi x over the unit sphere intersected with the nonnegative orthant.

    Support-set enumeration: any constrained minimizer is, restricted to its
    strictly positive support, the smallest eigenvector of the corresponding
    principal submatrix, so scanning every support's eigenpairs (ascending)
    and keeping those with a nonnegative eigenvector finds the exact optimum.
    """
    N = Psi.shape[0]
    if N > support_limit:
        raise ValueError(f"support enumeration capped at {support_limit} multipliers, got {N}")
    best = np.inf
    best_x = None
    idx = np.arange(N)
    for size in range(1, N + 1):
        for S in combinations(idx, size):
            sub = Psi[np.ix_(S, S)]
            w, V = _eig_small(sub)
            for t in range(size):
                x = _orient_nonneg(V[:, t])
                if x is None:
                    continue
                nrm = np.linalg.norm(x)
                if nrm == 0.0:
                    continue
                x = x / nrm
                val = float(x @ sub @ x)
                if val < best - 1e-15:
                    best = val
                    full = np.zeros(N)
                    full[list(S)] = x
                    best_x = full
                break  # smaller eigenvalues of this support exhausted
    return best, best_x


@dataclass
class StationarityForm:
    """Gradient columns and slack products defining the residual metric at a point."""

    columns: np.ndarray  # n_u x N, one column per multiplier
    slacks: np.ndarray  # length N, the complementary-slackness products
    layout: dict  # name -> slice into the multiplier vector

    @property
    def psi(self) -> np.ndarray:
        return self.columns.T @ self.columns + np.diag(self.slacks**2)


def stationarity_form(u, box, grad_phi, gp_values, gp_grads, g_values, g_grads) -> StationarityForm:
    """Assemble the multiplier system at a point from raw gradients and values."""
    u = np.asarray(u, dtype=float)
    n_u = u.size
    n_gp = np.asarray(gp_values).size
    n_g = np.asarray(g_values).size
    cols = [np.asarray(grad_phi, dtype=float).reshape(n_u, 1)]
    slacks = [0.0]
    if n_gp:
        cols.append(np.asarray(gp_grads, dtype=float).reshape(n_gp, n_u).T)
        slacks.extend(np.asarray(gp_values, dtype=float).tolist())
    if n_g:
        cols.append(np.asarray(g_grads, dtype=float).reshape(n_g, n_u).T)
        slacks.extend(np.asarray(g_values, dtype=float).tolist())
    cols.append(-np.eye(n_u))
    slacks.extend((box.lower - u).tolist())
    cols.append(np.eye(n_u))
    slacks.extend((u - box.upper).tolist())
    layout = {
        "mu_phi": slice(0, 1),
        "mu_p": slice(1, 1 + n_gp),
        "mu": slice(1 + n_gp, 1 + n_gp + n_g),
        "zeta_L": slice(1 + n_gp + n_g, 1 + n_gp + n_g + n_u),
        "zeta_U": slice(1 + n_gp + n_g + n_u, 1 + n_gp + n_g + 2 * n_u),
    }
    return StationarityForm(columns=np.hstack(cols), slacks=np.asarray(slacks, dtype=float), layout=layout)


@dataclass
class FJCertificate:
    """Stationarity certificate: the error value, the argmin multipliers, activity."""

    point: np.ndarray
    error: float
    multipliers: np.ndarray
    normalization: str
    active_gp: tuple
    active_g: tuple
    active_lower: tuple
    active_upper: tuple
    params_level: int | None = None

    def named_multipliers(self, n_gp: int, n_g: int, n_u: int) -> dict:
        m = self.multipliers
        return {
            "mu_phi": float(m[0]),
            "mu_p": m[1 : 1 + n_gp].tolist(),
            "mu": m[1 + n_gp : 1 + n_gp + n_g].tolist(),
            "zeta_L": m[1 + n_gp + n_g : 1 + n_gp + n_g + n_u].tolist(),
            "zeta_U": m[1 + n_gp + n_g + n_u :].tolist(),
        }

    def to_json(self, n_gp: int, n_g: int, n_u: int) -> dict:
        return {
            "point": self.point.tolist(),
            "error": self.error,
            "normalization": self.normalization,
            "multipliers": self.named_multipliers(n_gp, n_g, n_u),
            "active_sets": {
                "g_p": list(self.active_gp),
                "g": list(self.active_g),
                "lower": list(self.active_lower),
                "upper": list(self.active_upper),
            },
            "params_level": self.params_level,
        }


def _active_sets(u, box, gp_values, g_values, eps_p=None, eps=None, bound_tol=ACTIVE_TOL):
    gp_thr = np.full(np.asarray(gp_values).size, ACTIVE_TOL) if eps_p is None else np.asarray(eps_p, dtype=float)
    g_thr = np.full(np.asarray(g_values).size, ACTIVE_TOL) if eps is None else np.asarray(eps, dtype=float)
    act_gp = tuple(int(j) for j in np.flatnonzero(np.asarray(gp_values) >= -gp_thr))
    act_g = tuple(int(j) for j in np.flatnonzero(np.asarray(g_values) >= -g_thr))
    act_lo = tuple(int(i) for i in np.flatnonzero(u - box.lower <= bound_tol))
    act_hi = tuple(int(i) for i in np.flatnonzero(box.upper - u <= bound_tol))
    return act_gp, act_g, act_lo, act_hi


def fj_error(u, spec: ProblemSpec, m: Measurement, mode: str = FIXED_COST,
             eps_p=None, eps=None) -> FJCertificate:
    """Stationarity error at a measured point, under the chosen normalization.

    ``unit_sphere`` minimizes the full residual over unit-norm nonnegative
    multiplier vectors; ``fixed_cost_multiplier`` pins the cost multiplier to
    1, zeroes the multipliers of inactive constraints/bounds (activity per
    eps thresholds, defaulting to exact activity), and solves the remaining
    nonnegative least-squares problem.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    u = np.asarray(u, dtype=float)
    g_values, g_grads = evaluate_numerical(spec, u)
    form = stationarity_form(u, spec.box, m.grad_phi, m.g_p, m.grad_g_p, g_values, g_grads)
    act = _active_sets(u, spec.box, m.g_p, g_values, eps_p=eps_p, eps=eps)

    if mode == UNIT_SPHERE:
        err, mu = min_nonneg_rayleigh(form.psi)
        err = max(err, 0.0)
    else:
        n_gp, n_g, n_u = spec.n_gp, spec.n_g, spec.n_u
        active_idx = (
            [1 + j for j in act[0]]
            + [1 + n_gp + j for j in act[1]]
            + [1 + n_gp + n_g + i for i in act[2]]
            + [1 + n_gp + n_g + n_u + i for i in act[3]]
        )
        mu = np.zeros(form.slacks.size)
        mu[0] = 1.0
        y = np.concatenate([-form.columns[:, 0], [0.0] * len(active_idx)])
        if active_idx:
            A = np.vstack([
                form.columns[:, active_idx],
                np.diag(form.slacks[active_idx]),
            ])
            sol, rnorm = nnls(A, y)
            mu[active_idx] = sol
            err = float(rnorm**2)
        else:
            err = float(form.columns[:, 0] @ form.columns[:, 0])
    return FJCertificate(
        point=u.copy(),
        error=float(err),
        multipliers=mu,
        normalization=mode,
        active_gp=act[0],
        active_g=act[1],
        active_lower=act[2],
        active_upper=act[3],
    )


def certify_terminal(traj, spec: ProblemSpec, mode: str = FIXED_COST) -> FJCertificate:
    """Stationarity certificate at a trajectory's fixed point, stamped with its level."""
    if traj.terminal is None:
        raise ValueError("trajectory has no terminal point (run did not converge)")
    rec = traj.records[-1]
    cert = fj_error(traj.terminal, spec, rec.measurement, mode=mode)
    cert.params_level = rec.params_level
    return cert
