"""Biased-assimilation update map, trajectories and the drift classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import SwitchingSchedule, WeightedGraph


class DegenerateNodeError(ArithmeticError):
    """Interior node whose update denominator vanished although it has neighbours."""


class Drift(str, enum.Enum):
    INCREASE = "increase"
    FIXED = "fixed"
    DECREASE = "decrease"


DRIFT_RTOL = 1e-12


def as_bias(bias, n: int) -> np.ndarray:
    b = np.broadcast_to(np.asarray(bias, dtype=float), (n,)).copy()
    if not np.all(b > 0) or not np.all(np.isfinite(b)):
        raise ValueError("bias exponents must be finite and > 0")
    return b


def as_state(x, n: int | None = None) -> np.ndarray:
    x = np.array(x, dtype=float)
    if x.ndim != 1 or (n is not None and x.shape[0] != n):
        raise ValueError(f"state must be a vector of length {n}")
    if np.any(~(x >= 0) | ~(x <= 1)):
        raise ValueError("opinions must lie in [0, 1]")
    return x


def _update(W, self_w, b, x, y):
    """One synchronous step on the pair (x, 1 - x).

    The complement is carried separately so that swapping x and y swaps the
    result exactly; this keeps the map's mirror symmetry bitwise near the
    boundary. Returns (x', y', degenerate mask).
    """
    s = W @ x
    s_bar = W @ y  # d_i - s_i
    xb = np.power(x, b)
    yb = np.power(y, b)
    up = self_w * x + xb * s
    down = self_w * y + yb * s_bar
    den = up + down
    with np.errstate(invalid="ignore", divide="ignore"):
        x_new = up / den
        y_new = down / den
    frozen = (x == 0) | (y == 0) | (den == 0)
    x_new = np.where(frozen, x, x_new)
    y_new = np.where(frozen, y, y_new)
    degenerate = (den == 0) & (x > 0) & (y > 0) & (W.sum(axis=1) > 0)
    return x_new, y_new, degenerate


def _apply(W, self_w, b, x):
    x = np.asarray(x, dtype=float)
    x_new, _, bad = _update(W, self_w, b, x, 1.0 - x)
    if bad.any():
        raise DegenerateNodeError(f"zero denominator at interior node(s) {np.nonzero(bad)[0] + 1}")
    return x_new


def external_evidence(graph: WeightedGraph, x, i: int) -> float:
    """Weighted sum of node i's neighbour opinions (i is 1-based)."""
    if not 1 <= i <= graph.n:
        raise IndexError(f"node {i} outside 1..{graph.n}")
    return float(graph.weights[i - 1] @ np.asarray(x, dtype=float))


def step_static(graph: WeightedGraph, bias, x) -> np.ndarray:
    """Synchronous update of every node on a fixed graph.

    Coordinates exactly at 0 or 1 are returned unchanged, as are interior
    coordinates of isolated nodes without self weight.
    """
    x = as_state(x, graph.n)
    return _apply(graph.weights, graph.self_weights, as_bias(bias, graph.n), x)


def step_switching(sched: SwitchingSchedule, bias, x, t: int) -> np.ndarray:
    """Update with the time-``t`` snapshot; nodes without in-arcs keep their value."""
    if t < 0:
        raise ValueError("time index must be >= 0")
    x = as_state(x, sched.n)
    snap = sched.at(t)
    new = _apply(snap.weights, snap.self_weights, as_bias(bias, sched.n), x)
    return np.where(snap.degrees > 0, new, x)


@dataclass
class Trajectory:
    states: np.ndarray  # (steps + 1, n)
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def max_curve(self) -> np.ndarray:
        return self.states.max(axis=1)

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        header = "t," + ",".join(f"x_{i}" for i in range(1, n + 1))
        rows = [header]
        for t, row in enumerate(self.states):
            rows.append(f"{t}," + ",".join(f"{v:.17g}" for v in row))
        Path(path).write_text("\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1:].copy())


def simulate(system, bias, x0, horizon: int, tol: float = 0.0, seed=None) -> Trajectory:
    """Iterate the map from ``x0`` for ``horizon`` steps.

    ``system`` is a WeightedGraph or a SwitchingSchedule. With ``tol > 0`` the
    run stops early once successive states differ by less than ``tol`` in
    max-norm.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    n = system.n
    b = as_bias(bias, n)
    x = as_state(x0, n)
    states = [x]
    if isinstance(system, WeightedGraph):
        for _ in range(horizon):
            x_new = _apply(system.weights, system.self_weights, b, x)
            states.append(x_new)
            if tol > 0 and np.max(np.abs(x_new - x)) < tol:
                break
            x = x_new
        meta = {"graph": hash(system)}
    elif isinstance(system, SwitchingSchedule):
        for t in range(horizon):
            snap = system.at(t)
            x_new = _apply(snap.weights, snap.self_weights, b, x)
            x_new = np.where(snap.degrees > 0, x_new, x)
            states.append(x_new)
            if tol > 0 and np.max(np.abs(x_new - x)) < tol:
                break
            x = x_new
        meta = {"schedule_period": system.period}
    else:
        raise TypeError(f"cannot simulate on {type(system).__name__}")
    meta.update(bias=b.tolist(), seed=seed)
    return Trajectory(np.array(states), meta)


def invariance_potential(x: float, b: float) -> float:
    """Evidence fraction s_i/d_i at which an opinion ``x`` stays put."""
    if not 0 < x < 1:
        raise ValueError(f"invariance potential needs 0 < x < 1, got {x}")
    if not b > 0:
        raise ValueError("bias must be > 0")
    lo = (1.0 - x) ** (b - 1.0)
    return lo / (x ** (b - 1.0) + lo)


def drift_signs(graph: WeightedGraph, bias, x) -> list[Drift | None]:
    """Drift of every node at once; None for boundary opinions and isolated nodes."""
    x = as_state(x, graph.n)
    b = as_bias(bias, graph.n)
    d = graph.degrees
    interior = (x > 0) & (x < 1) & (d > 0)
    xi = np.where(interior, x, 0.5)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (graph.weights @ x) / d
    lo = (1.0 - xi) ** (b - 1.0)
    target = lo / (xi ** (b - 1.0) + lo)
    fixed = np.abs(ratio - target) <= DRIFT_RTOL * np.maximum(np.abs(target), np.abs(ratio))
    out = []
    for ok, f, r, tg in zip(interior, fixed, ratio, target):
        if not ok:
            out.append(None)
        elif f:
            out.append(Drift.FIXED)
        else:
            out.append(Drift.INCREASE if r > tg else Drift.DECREASE)
    return out


def drift_sign(graph: WeightedGraph, bias, x, i: int) -> Drift:
    """Direction node i moves in one step, decided by comparing its evidence
    fraction with the invariance potential."""
    x = as_state(x, graph.n)
    xi = x[i - 1]
    if not 0 < xi < 1:
        raise ValueError(f"drift is only defined for interior opinions, x_{i} = {xi}")
    if graph.degree(i) <= 0:
        raise ValueError(f"node {i} has no neighbours")
    return drift_signs(graph, bias, x)[i - 1]
