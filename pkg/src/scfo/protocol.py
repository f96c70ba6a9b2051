"""Newline-delimited JSON wire protocol for external plants.

The solver drives the loop: it emits one request per experiment

    {"k": <int>, "u": [<float>, ...]}

and blocks until the responder (a lab system, a human with a script, or a
simulator) answers with

    {"phi": <float>, "g_p": [...], "grad_phi": [...], "grad_g_p": [[...], ...]}

Vector lengths must match the problem declaration; a malformed or
wrong-shape response aborts the session with the offending line echoed.
Reals are serialized as shortest round-trip decimals, so a responder that
computes from the parsed ``u`` reproduces an in-process run bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import logging

import numpy as np

from .engine import RunAborted, RunConfig, Trajectory, run
from .model import Measurement, ProblemSpec

__all__ = [
    "PlantProtocolError",
    "PlantStreamClosed",
    "StdioPlant",
    "external_plant_session",
]

log = logging.getLogger("scfo.protocol")


class PlantProtocolError(RuntimeError):
    """The responder sent something unusable; the message echoes the line."""


class PlantStreamClosed(RuntimeError):
    """The responder closed its stream; the session ends with a partial trajectory."""


class StdioPlant:
    """PlantOracle that forwards measurement requests over a line stream."""

    def __init__(self, reader, writer, n_u: int, n_gp: int):
        self._reader = reader
        self._writer = writer
        self.n_u = n_u
        self.n_gp = n_gp
        self._k = 0

    def measure(self, u: np.ndarray) -> Measurement:
        request = {"k": self._k, "u": [float(x) for x in u]}
        self._writer.write(json.dumps(request) + "\n")
        self._writer.flush()
        line = self._reader.readline()
        if line == "":
            raise PlantStreamClosed(f"plant stream closed before responding to k={self._k}")
        self._k += 1
        return self._parse(line)

    def _parse(self, line: str) -> Measurement:
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PlantProtocolError(f"malformed response line: {line.rstrip()!r} ({exc})") from exc
        try:
            phi = float(data["phi"])
            g_p = np.asarray(data["g_p"], dtype=float)
            grad_phi = np.asarray(data["grad_phi"], dtype=float)
            grad_g_p = np.asarray(data["grad_g_p"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise PlantProtocolError(f"unusable response line: {line.rstrip()!r} ({exc})") from exc
        if g_p.shape != (self.n_gp,):
            raise PlantProtocolError(
                f"g_p has shape {g_p.shape}, expected ({self.n_gp},); line: {line.rstrip()!r}"
            )
        if grad_phi.shape != (self.n_u,):
            raise PlantProtocolError(
                f"grad_phi has shape {grad_phi.shape}, expected ({self.n_u},); line: {line.rstrip()!r}"
            )
        expected = (self.n_gp, self.n_u)
        grad_g_p = grad_g_p.reshape(expected) if grad_g_p.size == self.n_gp * self.n_u else grad_g_p
        if grad_g_p.shape != expected:
            raise PlantProtocolError(
                f"grad_g_p has shape {grad_g_p.shape}, expected {expected}; line: {line.rstrip()!r}"
            )
        try:
            return Measurement(phi=phi, g_p=g_p, grad_phi=grad_phi, grad_g_p=grad_g_p)
        except ValueError as exc:
            raise PlantProtocolError(f"invalid measurement: {exc}; line: {line.rstrip()!r}") from exc


def external_plant_session(spec: ProblemSpec, config: RunConfig, reader, writer) -> Trajectory:
    """Run the engine against a responder on the given line streams.

    A cleanly closed stream ends the session and returns the partial
    trajectory (also handed to the caller through the exception's
    ``trajectory`` attribute on protocol faults, so partial results can
    always be persisted).
    """
    n_gp = spec.lipschitz.n_gp
    plant = StdioPlant(reader, writer, spec.n_u, n_gp)
    wired = dataclasses.replace(spec, oracle=plant)
    try:
        return run(wired, config)
    except RunAborted as exc:
        if isinstance(exc.cause, PlantStreamClosed):
            log.info("plant stream closed; returning %d-record partial trajectory",
                     len(exc.trajectory.records))
            return exc.trajectory
        if isinstance(exc.cause, PlantProtocolError):
            err = PlantProtocolError(str(exc.cause))
            err.trajectory = exc.trajectory
            raise err from exc
        raise
