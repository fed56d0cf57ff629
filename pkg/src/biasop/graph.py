"""Weighted social networks, switching schedules and their generators.

Node labels are 1-based in every public signature and file format; arrays
are 0-based internally.
"""

from __future__ import annotations

import enum
import json
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


class GraphKind(str, enum.Enum):
    COMPLETE = "complete"
    STAR = "star"
    CYCLE = "cycle"
    CUSTOM = "custom"


_MIN_NODES = {GraphKind.COMPLETE: 2, GraphKind.STAR: 2, GraphKind.CYCLE: 3}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class WeightedGraph:
    """Undirected graph with positive edge weights and self-confidence weights.

    ``weights[i, j]`` is w_ij (symmetric, zero diagonal) and ``self_weights[i]``
    is w_ii. Both arrays are read-only.
    """

    def __init__(self, weights, self_weights, kind: GraphKind = GraphKind.CUSTOM):
        W = np.array(weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError("weight matrix must be square")
        n = W.shape[0]
        if n < 2:
            raise GraphError(f"need at least 2 nodes, got {n}")
        if np.any(np.diag(W) != 0):
            raise GraphError("self-loop edges are not allowed; use self_weights")
        if not np.array_equal(W, W.T):
            raise GraphError("weight matrix must be symmetric")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise GraphError("edge weights must be finite and positive")
        sw = np.broadcast_to(np.asarray(self_weights, dtype=float), (n,))
        if np.any(sw < 0) or not np.all(np.isfinite(sw)):
            raise GraphError("self weights must be finite and >= 0")
        self.weights = _frozen(W)
        self.self_weights = _frozen(sw)
        self.degrees = _frozen(W.sum(axis=1))
        self.kind = GraphKind(kind)
        self.connected = _is_connected(W)
        if not self.connected:
            warnings.warn("graph is disconnected; dynamics stay well defined", stacklevel=2)
        # CSR neighbour lists for the compiled kernels
        rows, cols = np.nonzero(W)
        self.indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
        self.indices = cols.astype(np.int64)
        self.edge_weights = W[rows, cols].copy()
        for a in (self.indptr, self.indices, self.edge_weights):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[float]], self_weights=1.0,
                   kind: GraphKind = GraphKind.CUSTOM) -> "WeightedGraph":
        """Build from 1-based ``(i, j)`` or ``(i, j, w_ij)`` tuples."""
        W = np.zeros((n, n))
        for e in edges:
            i, j = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if not (1 <= i <= n and 1 <= j <= n):
                raise GraphError(f"edge ({i}, {j}) outside 1..{n}")
            if i == j:
                raise GraphError(f"self-loop edge at node {i}")
            if w <= 0:
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            W[i - 1, j - 1] = W[j - 1, i - 1] = w
        return cls(W, self_weights, kind)

    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as sorted 1-based ``(i, j, w_ij)`` with i < j."""
        iu, ju = np.nonzero(np.triu(self.weights))
        return [(int(i) + 1, int(j) + 1, float(self.weights[i, j])) for i, j in zip(iu, ju)]

    def neighbors(self, i: int) -> list[int]:
        return [int(j) + 1 for j in np.nonzero(self.weights[i - 1])[0]]

    def degree(self, i: int) -> float:
        return float(self.degrees[i - 1])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind.value,
            "edges": [list(e) for e in self.edges()],
            "self_weights": self.self_weights.tolist(),
        }

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.self_weights, other.self_weights))

    def __hash__(self):
        return hash((self.weights.tobytes(), self.self_weights.tobytes()))

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, kind={self.kind.value}, edges={len(self.edges())})"


def _is_connected(W: np.ndarray) -> bool:
    n = W.shape[0]
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.nonzero(W[i])[0]:
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return len(seen) == n


def make_graph(kind, n: int, w: float = 1.0) -> WeightedGraph:
    """Unit-weight complete, star or cycle graph with uniform self weight ``w``.

    The star hub is node ``n``; the cycle runs 1-2-...-n-1.
    """
    kind = GraphKind(kind)
    if kind is GraphKind.CUSTOM:
        raise GraphError("custom graphs are built with WeightedGraph.from_edges")
    if n < _MIN_NODES[kind]:
        raise GraphError(f"{kind.value} graph needs n >= {_MIN_NODES[kind]}, got {n}")
    if w < 0:
        raise GraphError("self weight must be >= 0")
    if kind is GraphKind.COMPLETE:
        edges = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    elif kind is GraphKind.STAR:
        edges = [(i, n) for i in range(1, n)]
    else:
        edges = [(i, i % n + 1) for i in range(1, n + 1)]
    return WeightedGraph.from_edges(n, edges, w, kind)


def random_connected_graph(rng: np.random.Generator, n: int, extra_edges: int = 0,
                           weight_range=(0.5, 2.0), self_weight_range=(0.1, 2.0)) -> WeightedGraph:
    """Random spanning tree plus up to ``extra_edges`` additional random edges."""
    if n < 2:
        raise GraphError("need at least 2 nodes")
    order = rng.permutation(n)
    pairs = set()
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        pairs.add((min(a, b), max(a, b)))
    max_edges = n * (n - 1) // 2
    for _ in range(extra_edges):
        if len(pairs) == max_edges:
            break
        a, b = rng.choice(n, size=2, replace=False)
        pairs.add((int(min(a, b)), int(max(a, b))))
    W = np.zeros((n, n))
    for a, b in sorted(pairs):
        W[a, b] = W[b, a] = rng.uniform(*weight_range)
    sw = rng.uniform(*self_weight_range, size=n)
    return WeightedGraph(W, sw)


# ---------------------------------------------------------------------------
# switching schedules

@dataclass(frozen=True, eq=False)
class Snapshot:
    """Directed weighted graph at one time step.

    ``weights[i, j]`` is the weight w_ij(t) of arc (j, i), i.e. how strongly
    node j influences node i.
    """

    weights: np.ndarray
    self_weights: np.ndarray

    def __post_init__(self):
        W = _frozen(self.weights)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError("snapshot weight matrix must be square")
        if np.any(np.diag(W) != 0) or np.any(W < 0):
            raise GraphError("snapshot arcs must join distinct nodes with weight > 0")
        sw = _frozen(np.broadcast_to(np.asarray(self.self_weights, float), (W.shape[0],)))
        if np.any(sw < 0):
            raise GraphError("snapshot self weights must be >= 0")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "self_weights", sw)

    @property
    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @classmethod
    def from_graph(cls, graph: WeightedGraph) -> "Snapshot":
        return cls(graph.weights, graph.self_weights)


@dataclass(frozen=True, eq=False)
class SwitchingSchedule:
    """Finite list of snapshots replayed periodically, with the constants of
    the activity-window assumption (window ``period``, degree floor ``c`` and
    self-weight caps)."""

    snapshots: tuple
    period: int
    c: float
    caps: np.ndarray = field(default=None)

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if not snaps:
            raise GraphError("schedule needs at least one snapshot")
        n = snaps[0].weights.shape[0]
        if any(s.weights.shape[0] != n for s in snaps):
            raise GraphError("all snapshots must have the same node count")
        if self.period < 1:
            raise GraphError("activity window T must be a positive integer")
        if not self.c > 0:
            raise GraphError("degree floor c must be > 0")
        caps = self.caps
        if caps is None:
            caps = np.max([s.self_weights for s in snaps], axis=0)
        caps = _frozen(np.broadcast_to(np.asarray(caps, float), (n,)))
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "caps", caps)

    @property
    def n(self) -> int:
        return self.snapshots[0].weights.shape[0]

    def at(self, t: int) -> Snapshot:
        return self.snapshots[t % len(self.snapshots)]

    @classmethod
    def constant(cls, graph: WeightedGraph, period: int = 1, c: float | None = None):
        """A static graph seen as a schedule (each edge as two arcs)."""
        if c is None:
            c = float(graph.degrees.min())
        return cls((Snapshot.from_graph(graph),), period, c, graph.self_weights)

    def to_dict(self) -> dict:
        snaps = []
        for t, s in enumerate(self.snapshots):
            ii, jj = np.nonzero(s.weights)
            arcs = [[int(j) + 1, int(i) + 1, float(s.weights[i, j])] for i, j in zip(ii, jj)]
            snaps.append({"t": t, "arcs": arcs, "self_weights": s.self_weights.tolist()})
        return {"n": self.n, "T": self.period, "c": self.c,
                "caps": self.caps.tolist(), "snapshots": snaps}

    @classmethod
    def from_dict(cls, data: dict) -> "SwitchingSchedule":
        n = int(data["n"])
        entries = data["snapshots"]
        length = max(int(e["t"]) for e in entries) + 1 if entries else 1
        mats = [np.zeros((n, n)) for _ in range(length)]
        selfw = [np.zeros(n) for _ in range(length)]
        for e in entries:
            t = int(e["t"])
            for j, i, w in e.get("arcs", []):
                if not (1 <= i <= n and 1 <= j <= n) or i == j:
                    raise GraphError(f"bad arc ({j}, {i}) at t={t}")
                mats[t][int(i) - 1, int(j) - 1] = float(w)
            if "self_weights" in e:
                selfw[t] = np.broadcast_to(np.asarray(e["self_weights"], float), (n,)).copy()
        snaps = tuple(Snapshot(m, s) for m, s in zip(mats, selfw))
        return cls(snaps, int(data["T"]), float(data["c"]), data.get("caps"))


def round_robin_schedule(n: int, period: int, rng: np.random.Generator | None = None,
                         cycles: int = 1, c: float = 1.0, weight_range=(1.0, 2.0),
                         self_weight_range=(0.0, 1.0)) -> SwitchingSchedule:
    """Directed schedule in which node i receives exactly one arc at the times
    t with t = i (mod ``period``) and none otherwise.

    Without ``rng`` the source of node i's arc is node i+1 (cyclically), all
    weights are ``c`` and self weights are 1. With ``rng`` the sources, the
    arc weights (within ``weight_range``, never below ``c``) and the self
    weights are drawn at random; ``cycles`` distinct windows are drawn before
    the schedule repeats.
    """
    if n < 2 or period < 1:
        raise GraphError("round-robin schedule needs n >= 2 and period >= 1")
    length = period * cycles
    mats = [np.zeros((n, n)) for _ in range(length)]
    selfw = []
    for t in range(length):
        if rng is None:
            selfw.append(np.ones(n))
        else:
            selfw.append(rng.uniform(*self_weight_range, size=n))
        for i in range((t - 1) % period, n, period):
            if rng is None:
                j, w = (i + 1) % n, c
            else:
                j = int(rng.integers(n - 1))
                j = j + 1 if j >= i else j
                w = max(c, rng.uniform(*weight_range))
            mats[t][i, j] = w
    snaps = tuple(Snapshot(m, s) for m, s in zip(mats, selfw))
    caps = np.max([s.self_weights for s in snaps], axis=0)
    return SwitchingSchedule(snaps, period, c, caps)


@dataclass
class ClauseResult:
    passed: bool
    first_violation: tuple[int, int] | None = None  # (t, node), node 1-based


@dataclass
class ScheduleReport:
    horizon: int
    clauses: dict[str, ClauseResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses.values())

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "passed": self.passed,
                "clauses": {k: {"passed": v.passed, "first_violation": v.first_violation}
                            for k, v in self.clauses.items()}}


def validate_schedule(sched: SwitchingSchedule, horizon: int) -> ScheduleReport:
    """Check the three activity-window clauses for every t in [0, horizon].

    Clause (iii) is checked on every window [t, t+T-1] contained in
    [0, horizon]. Violations are reported, never raised.
    """
    if horizon < sched.period:
        raise GraphError(f"horizon {horizon} shorter than the window T={sched.period}")
    T = sched.period
    degs = np.array([sched.at(t).degrees for t in range(horizon + 1)])
    selfw = np.array([sched.at(t).self_weights for t in range(horizon + 1)])

    def first(mask):
        hits = np.argwhere(mask)
        return None if hits.size == 0 else (int(hits[0][0]), int(hits[0][1]) + 1)

    caps_bad = first(selfw > sched.caps)
    floor_bad = first((degs > 0) & (degs < sched.c))
    csum = np.vstack([np.zeros(sched.n), np.cumsum(degs, axis=0)])
    window = csum[T:] - csum[:-T]
    window_bad = first(window <= 0)
    return ScheduleReport(horizon, {
        "self_weight_cap": ClauseResult(caps_bad is None, caps_bad),
        "degree_floor": ClauseResult(floor_bad is None, floor_bad),
        "activity_window": ClauseResult(window_bad is None, window_bad),
    })


# ---------------------------------------------------------------------------
# file formats

def read_graph(path) -> WeightedGraph:
    """Parse the plain-text graph format.

    Recognised lines: ``n <int>``, ``kind <complete|star|cycle>``,
    ``w <float>`` (uniform self weight), ``self_weights <w_11> ... <w_nn>``,
    ``edges`` followed by ``i j w_ij`` lines. ``#`` starts a comment.
    """
    n = kind = None
    w = 1.0
    selfw = None
    edges = []
    in_edges = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "n":
                n = int(rest[0])
                in_edges = False
            elif head == "kind":
                kind = GraphKind(rest[0])
                in_edges = False
            elif head == "w":
                w = float(rest[0])
                in_edges = False
            elif head == "self_weights":
                selfw = [float(v) for v in rest]
                in_edges = False
            elif head == "edges":
                in_edges = True
            elif in_edges:
                i, j = int(head), int(rest[0])
                edges.append((i, j, float(rest[1]) if len(rest) > 1 else 1.0))
            else:
                raise GraphError(f"unknown key {head!r}")
        except (IndexError, ValueError) as exc:
            raise GraphError(f"{path}:{lineno}: cannot parse {raw!r}: {exc}") from None
    if n is None:
        raise GraphError(f"{path}: missing 'n'")
    if kind is not None and kind is not GraphKind.CUSTOM:
        g = make_graph(kind, n, w)
        return g if selfw is None else WeightedGraph(g.weights, selfw, kind)
    return WeightedGraph.from_edges(n, edges, w if selfw is None else selfw)


def write_graph(graph: WeightedGraph, path) -> None:
    lines = [f"n {graph.n}", "self_weights " + " ".join(repr(float(v)) for v in graph.self_weights),
             "edges"]
    lines += [f"{i} {j} {w!r}" for i, j, w in graph.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_schedule(path) -> SwitchingSchedule:
    return SwitchingSchedule.from_dict(json.loads(Path(path).read_text()))


def write_schedule(sched: SwitchingSchedule, path) -> None:
    Path(path).write_text(json.dumps(sched.to_dict(), indent=1) + "\n")
