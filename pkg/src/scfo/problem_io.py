"""Problem/run-file loading and trajectory persistence.

File formats (JSON):

* problem file — ``n_u``, ``bounds.lower/upper``, ``lipschitz.{kappa_p,
  kappa, M_phi, M_g, M_gp, gamma, gamma_phi}``, ``u0``, ``target`` (vector |
  "box_center" | "file:<path>"), ``plant`` ("builtin:<name>" | "stdio"),
  ``numerical_constraints`` (builtin constraint objects), optional
  ``ceilings``.
* run file — ``budget``, ``max_halvings``, optional ``ceilings`` override,
  ``target`` override, ``out`` directory, ``adaptation``, ``fixed_level``.

Trajectory exports: CSV (one row per experiment, fixed column order) and
JSON (full records including gradients).  All writes are atomic: temp file
in the destination directory, then rename.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from . import bench
from .engine import IterateRecord, RunConfig, Trajectory
from .model import (
    Box,
    LipschitzData,
    Measurement,
    ProblemSpec,
    ProjectionCeilings,
    box_center_target,
    constraint_from_json,
    file_target,
    fixed_target,
)

__all__ = [
    "load_problem",
    "load_run_config",
    "parse_target",
    "ceilings_from_json",
    "trajectory_csv",
    "trajectory_json",
    "load_trajectory_json",
    "write_text_atomic",
    "write_json_atomic",
]


def write_text_atomic(path: str, text: str) -> None:
    """Write via a sibling temp file + rename so readers never see a truncation."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: str, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2) + "\n")


def parse_target(value, box: Box):
    if isinstance(value, str):
        if value == "box_center":
            return box_center_target(box)
        if value.startswith("file:"):
            return file_target(value[5:], box.n)
        raise ValueError(f"unknown target spec {value!r}")
    return fixed_target(np.asarray(value, dtype=float))


def ceilings_from_json(data: dict) -> ProjectionCeilings:
    return ProjectionCeilings(
        eps_p=np.asarray(data.get("eps_p", []), dtype=float),
        eps=np.asarray(data.get("eps", []), dtype=float),
        delta_gp=np.asarray(data.get("delta_gp", []), dtype=float),
        delta_g=np.asarray(data.get("delta_g", []), dtype=float),
        delta_phi=float(data["delta_phi"]),
    )


def load_problem(path: str) -> ProblemSpec:
    """Build a ProblemSpec from a problem file.

    ``plant: "stdio"`` leaves the oracle unset; the caller must attach one
    (the external-plant session does this) before running.
    """
    with open(path) as fh:
        data = json.load(fh)
    plant_spec = data.get("plant", "stdio")
    if isinstance(plant_spec, str) and plant_spec.startswith("builtin:"):
        name = plant_spec.split(":", 1)[1]
        base = bench.builtin(name)
        oracle = base.oracle
    elif plant_spec == "stdio":
        oracle = None
    else:
        raise ValueError(f"unknown plant spec {plant_spec!r}")

    box = Box(np.asarray(data["bounds"]["lower"], dtype=float),
              np.asarray(data["bounds"]["upper"], dtype=float))
    n_u = int(data.get("n_u", box.n))
    if n_u != box.n:
        raise ValueError(f"n_u = {n_u} does not match the bounds (length {box.n})")
    lj = data["lipschitz"]
    lip = LipschitzData(
        kappa_p=np.asarray(lj.get("kappa_p", []), dtype=float),
        kappa=np.asarray(lj.get("kappa", []), dtype=float),
        M_phi=np.asarray(lj["M_phi"], dtype=float),
        M_g=tuple(np.asarray(m, dtype=float) for m in lj.get("M_g", [])),
        M_gp=tuple(np.asarray(m, dtype=float) for m in lj.get("M_gp", [])),
        gamma=np.asarray(lj.get("gamma", []), dtype=float),
        gamma_phi=float(lj.get("gamma_phi", 0.95)),
    )
    constraints = [constraint_from_json(c) for c in data.get("numerical_constraints", [])]
    ceilings = ceilings_from_json(data["ceilings"]) if "ceilings" in data else None
    return ProblemSpec(
        box=box,
        oracle=oracle,
        lipschitz=lip,
        u0=np.asarray(data["u0"], dtype=float),
        numerical_constraints=constraints,
        target_rule=parse_target(data.get("target", "box_center"), box),
        default_ceilings=ceilings,
        name=data.get("name", os.path.basename(path)),
    )


def load_run_config(path: str, spec: ProblemSpec) -> RunConfig:
    with open(path) as fh:
        data = json.load(fh)
    cfg = RunConfig(
        budget=int(data.get("budget", 100)),
        max_halvings=int(data.get("max_halvings", 10)),
        adaptation=bool(data.get("adaptation", True)),
        fixed_level=int(data.get("fixed_level", 0)),
    )
    if "ceilings" in data:
        cfg.ceilings = ceilings_from_json(data["ceilings"])
    if "target" in data:
        cfg.target = parse_target(data["target"], spec.box)
    cfg.out = data.get("out")
    return cfg


def _fmt(x) -> str:
    return repr(float(x))


def trajectory_csv(traj: Trajectory, spec: ProblemSpec) -> str:
    """Fixed-order delimited export: k, u..., phi, g_p..., g..., K, level, status."""
    n_u, n_gp, n_g = spec.n_u, spec.n_gp, spec.n_g
    header = (
        ["k"]
        + [f"u{i}" for i in range(n_u)]
        + ["phi"]
        + [f"g_p{j}" for j in range(n_gp)]
        + [f"g{j}" for j in range(n_g)]
        + ["K", "level", "status"]
    )
    lines = [",".join(header)]
    for r in traj.records:
        row = [str(r.k)]
        row += [_fmt(x) for x in r.u]
        row.append(_fmt(r.measurement.phi))
        row += [_fmt(x) for x in r.measurement.g_p]
        row += [_fmt(x) for x in r.g_values]
        row.append(_fmt(r.K) if r.K is not None else "")
        row.append(str(r.params_level) if r.params_level is not None else "")
        row.append(r.status)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def trajectory_json(traj: Trajectory, spec: ProblemSpec) -> dict:
    records = []
    for r in traj.records:
        records.append({
            "k": r.k,
            "u": r.u.tolist(),
            "phi": r.measurement.phi,
            "g_p": r.measurement.g_p.tolist(),
            "grad_phi": r.measurement.grad_phi.tolist(),
            "grad_g_p": r.measurement.grad_g_p.tolist(),
            "g": r.g_values.tolist(),
            "target": r.target.tolist() if r.target is not None else None,
            "projected_target": r.projected_target.tolist() if r.projected_target is not None else None,
            "K": r.K,
            "level": r.params_level,
            "status": r.status,
        })
    return {
        "problem": spec.name,
        "records": records,
        "terminal": traj.terminal.tolist() if traj.terminal is not None else None,
    }


def load_trajectory_json(path: str) -> Trajectory:
    """Rebuild a trajectory (records + terminal) from its JSON export."""
    with open(path) as fh:
        data = json.load(fh)
    records = []
    for rec in data["records"]:
        m = Measurement(
            phi=rec["phi"],
            g_p=np.asarray(rec["g_p"], dtype=float),
            grad_phi=np.asarray(rec["grad_phi"], dtype=float),
            grad_g_p=np.asarray(rec["grad_g_p"], dtype=float),
        )
        records.append(IterateRecord(
            k=rec["k"],
            u=np.asarray(rec["u"], dtype=float),
            measurement=m,
            g_values=np.asarray(rec["g"], dtype=float),
            g_grads=np.zeros((len(rec["g"]), len(rec["u"]))),
            status=rec["status"],
            target=None if rec["target"] is None else np.asarray(rec["target"], dtype=float),
            projected_target=(None if rec["projected_target"] is None
                              else np.asarray(rec["projected_target"], dtype=float)),
            K=rec["K"],
            params_level=rec["level"],
        ))
    terminal = data.get("terminal")
    return Trajectory(records, None if terminal is None else np.asarray(terminal, dtype=float))
