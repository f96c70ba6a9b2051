"""Figure rendering for run reports.

Two figures per run, written next to the delimited trajectory export: the
cost-versus-experiment curve and (for two-dimensional problems) the decision
path inside the box with the zero contours of any constraints.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_cost_figure", "render_path_figure", "render_run_figures"]


def render_cost_figure(traj, path: str, reference_cost: float | None = None) -> str:
    ks = [r.k for r in traj.records]
    costs = [r.measurement.phi for r in traj.records]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(ks, costs, "-", color="tab:red", lw=1.2)
    if reference_cost is not None:
        ax.axhline(reference_cost, color="k", ls=":", lw=1.0, label="reference optimum")
        ax.legend(loc="best")
    ax.set_xlabel("experiment k")
    ax.set_ylabel("measured cost")
    ax.set_title("cost per experiment")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _constraint_grid(spec, resolution: int = 201):
    xs = np.linspace(spec.box.lower[0], spec.box.upper[0], resolution)
    ys = np.linspace(spec.box.lower[1], spec.box.upper[1], resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    surfaces = []
    plant = spec.oracle
    if spec.n_gp and hasattr(plant, "g_p_at"):
        gp = plant.g_p_at(pts)
        for j in range(spec.n_gp):
            surfaces.append((f"g_p{j}", gp[:, j].reshape(X.shape)))
    for j, c in enumerate(spec.numerical_constraints):
        if hasattr(c, "value_batch"):
            vals = c.value_batch(pts)
        else:
            vals = np.array([c.value(p) for p in pts])
        surfaces.append((f"g{j}", vals.reshape(X.shape)))
    return X, Y, surfaces


def render_path_figure(traj, spec, path: str, reference=None) -> str | None:
    if spec.n_u != 2:
        return None
    U = np.array([r.u for r in traj.records])
    fig, ax = plt.subplots(figsize=(5.4, 5.0))
    try:
        X, Y, surfaces = _constraint_grid(spec)
        for name, Z in surfaces:
            cs = ax.contour(X, Y, Z, levels=[0.0], colors="tab:blue", linewidths=1.0)
            ax.clabel(cs, fmt={0.0: name}, fontsize=7)
    except Exception:  # constraint surfaces are decoration only
        pass
    ax.plot(U[:, 0], U[:, 1], ".-", color="tab:red", ms=3, lw=0.6, label="experiments")
    ax.plot(U[0, 0], U[0, 1], "s", color="k", ms=6, label="start")
    if reference is not None:
        ax.plot(reference[0], reference[1], "*", color="tab:green", ms=12, label="reference optimum")
    lo, hi = spec.box.lower, spec.box.upper
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_xlabel("u1")
    ax.set_ylabel("u2")
    ax.set_title("decision path")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_run_figures(traj, spec, out_dir: str, reference=None) -> list:
    """Write the standard report figures; returns the paths actually written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    ref_cost = None
    if reference is not None and hasattr(spec.oracle, "phi"):
        ref_cost = float(spec.oracle.phi(np.asarray(reference, dtype=float)))
    written.append(render_cost_figure(traj, os.path.join(out_dir, "cost_vs_iteration.png"), ref_cost))
    p = render_path_figure(traj, spec, os.path.join(out_dir, "decision_path.png"), reference)
    if p:
        written.append(p)
    return written
