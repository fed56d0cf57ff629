"""Randomized local-stability tests, the vertex scan and linearization checks."""

from __future__ import annotations

import enum
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .dynamics import as_bias, as_state, step_static
from .equilibria import EQ_TOL, is_equilibrium, vertex_from_mask
from .graph import WeightedGraph

MAX_SCAN_NODES = 20


class Verdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class StabilityProtocol:
    """Perturb-and-watch test: ``trials`` starts drawn uniformly in a box of
    half-width ``radius`` per coordinate, each run for ``horizon`` steps; any
    trial whose distance ever exceeds ``blowup`` times its starting distance
    marks the point unstable."""

    trials: int = 100
    radius: float = 0.015
    horizon: int = 10_000
    blowup: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1 or self.horizon < 1:
            raise ValueError("trials and horizon must be positive")
        if not (self.radius > 0 and self.blowup > 0):
            raise ValueError("radius and blowup must be positive")


@dataclass
class StabilityVerdict:
    point: np.ndarray
    verdict: Verdict
    first_violation: tuple[int, int] | None  # (trial, t)
    max_distance_ratio: float

    @property
    def stable(self) -> bool:
        return self.verdict is Verdict.STABLE

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "verdict": self.verdict.value,
                "first_violation": list(self.first_violation) if self.first_violation else None,
                "max_distance_ratio": self.max_distance_ratio}


@njit(cache=True, nogil=True)
def _run_trials(indptr, indices, wts, selfw, b, eq, eqc, X0, Y0, horizon, blowup2):
    # Each state is carried as the pair (x, 1 - x); see dynamics._update.
    trials, n = X0.shape
    x = np.empty(n)
    y = np.empty(n)
    xn = np.empty(n)
    yn = np.empty(n)
    lower = eq <= 0.5
    worst = 0.0
    for k in range(trials):
        x[:] = X0[k]
        y[:] = Y0[k]
        d0 = 0.0
        for i in range(n):
            dev = x[i] - eq[i] if lower[i] else eqc[i] - y[i]
            d0 += dev * dev
        for t in range(1, horizon + 1):
            moved = False
            for i in range(n):
                if x[i] == 0.0 or y[i] == 0.0:
                    xn[i] = x[i]
                    yn[i] = y[i]
                    continue
                s = 0.0
                sb = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    s += wts[p] * x[indices[p]]
                    sb += wts[p] * y[indices[p]]
                up = selfw[i] * x[i] + x[i] ** b[i] * s
                down = selfw[i] * y[i] + y[i] ** b[i] * sb
                den = up + down
                if den == 0.0:
                    xn[i] = x[i]
                    yn[i] = y[i]
                    continue
                xn[i] = up / den
                yn[i] = down / den
                if xn[i] != x[i] or yn[i] != y[i]:
                    moved = True
            if not moved:
                # exact fixed point of the floating-point map: nothing changes later
                break
            dist = 0.0
            for i in range(n):
                x[i] = xn[i]
                y[i] = yn[i]
                dev = x[i] - eq[i] if lower[i] else eqc[i] - y[i]
                dist += dev * dev
            ratio = dist / d0
            if ratio > worst:
                worst = ratio
            if dist > blowup2 * d0:
                return k, t, worst
    return -1, -1, worst


def _perturbed_pairs(eq, eqc, deltas):
    """Clipped starting states as (x, 1 - x) pairs.

    Coordinates nearer 0 are built from x, those nearer 1 from the complement,
    so a vertex perturbed by delta and its mirror perturbed by -delta get
    exactly swapped pairs.
    """
    lower = eq <= 0.5
    X = np.where(lower, np.clip(eq + deltas, 0.0, 1.0), 0.0)
    Y = np.where(lower, 0.0, np.clip(eqc - deltas, 0.0, 1.0))
    X = np.where(lower, X, 1.0 - Y)
    Y = np.where(lower, 1.0 - X, Y)
    return X, Y


def _initial_dist2(eq, eqc, X, Y):
    dev = np.where(eq <= 0.5, X - eq, eqc - Y)
    return (dev * dev).sum(axis=1)


def _draw_deltas(protocol: StabilityProtocol, key, eq, eqc, sign: float = 1.0):
    """Per-trial perturbations from (seed, key, trial); redrawn while the
    clipped start coincides with the equilibrium."""
    n = eq.shape[0]
    out = np.empty((protocol.trials, n))
    for j in range(protocol.trials):
        rng = np.random.default_rng(np.random.SeedSequence([protocol.seed, *key, j]))
        while True:
            delta = sign * rng.uniform(-protocol.radius, protocol.radius, size=n)
            X, Y = _perturbed_pairs(eq, eqc, delta[None, :])
            if _initial_dist2(eq, eqc, X, Y)[0] > 0:
                break
        out[j] = delta
    return out


def _verdict(graph: WeightedGraph, b: np.ndarray, eq, eqc, deltas, protocol) -> StabilityVerdict:
    X, Y = _perturbed_pairs(eq, eqc, deltas)
    k, t, worst = _run_trials(graph.indptr, graph.indices, graph.edge_weights,
                              graph.self_weights, b, eq, eqc, X, Y,
                              protocol.horizon, protocol.blowup ** 2)
    ratio = float(np.sqrt(worst))
    if k < 0:
        return StabilityVerdict(eq, Verdict.STABLE, None, ratio)
    return StabilityVerdict(eq, Verdict.UNSTABLE, (int(k), int(t)), ratio)


def _check_fixed(graph, bias, eq):
    b = np.asarray(bias, dtype=float)
    if b.ndim == 0 or np.all(b == b.flat[0]):
        ok = is_equilibrium(graph, float(b.flat[0]), eq, EQ_TOL)
    else:
        ok = np.max(np.abs(step_static(graph, b, eq) - eq)) <= EQ_TOL
    if not ok:
        warnings.warn("tested point is not an equilibrium to within 1e-10", stacklevel=3)


def randomized_stability_test(graph: WeightedGraph, bias, eq,
                              protocol: StabilityProtocol = StabilityProtocol()) -> StabilityVerdict:
    """Empirical local-stability verdict for the equilibrium ``eq``.

    Distances are Euclidean. A trial stops at its first violation; the whole
    test stops at the first violating trial.
    """
    eq = as_state(eq, graph.n)
    b = as_bias(bias, graph.n)
    _check_fixed(graph, bias, eq)
    eqc = 1.0 - eq
    deltas = _draw_deltas(protocol, (), eq, eqc)
    return _verdict(graph, b, eq, eqc, deltas, protocol)


@dataclass
class LevelStats:
    k: int
    total: int
    stable: int

    @property
    def p_k(self) -> float:
        return self.stable / self.total


@dataclass
class ScanReport:
    n: int
    levels: list[LevelStats]
    verdicts: dict[int, StabilityVerdict]  # keyed by vertex bitmask
    metadata: dict

    def p(self, k: int) -> float:
        return self.levels[k].p_k

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "levels": [{"k": s.k, "total": s.total, "stable": s.stable, "p_k": s.p_k}
                       for s in self.levels],
            "vertices": [{"bitmask": m, "k": bin(m).count("1"), **v.to_dict()}
                         for m, v in sorted(self.verdicts.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scan.json").write_text(self.to_json() + "\n")
        rows = ["k,total,stable,p_k"]
        rows += [f"{s.k},{s.total},{s.stable},{s.p_k!r}" for s in self.levels]
        (out / "pk.csv").write_text("\n".join(rows) + "\n")
        rows = ["bitmask,k,verdict,first_violation_t"]
        for m, v in sorted(self.verdicts.items()):
            t = v.first_violation[1] if v.first_violation else ""
            rows.append(f"{m},{bin(m).count('1')},{v.verdict.value},{t}")
        (out / "vertices.csv").write_text("\n".join(rows) + "\n")


def vertex_scan(graph: WeightedGraph, b, protocol: StabilityProtocol = StabilityProtocol(),
                mirrored: bool = True, workers: int | None = None) -> ScanReport:
    """Stability verdict for every vertex of {0,1}^n, aggregated by level k.

    With ``mirrored`` a vertex and its mirror image share one perturbation
    stream with opposite signs, so their verdicts agree exactly.
    """
    n = graph.n
    if n > MAX_SCAN_NODES:
        raise ValueError(f"vertex scan is capped at n = {MAX_SCAN_NODES}, got {n}")
    bias = as_bias(b, n)
    full = (1 << n) - 1

    def one(mask: int) -> StabilityVerdict:
        eq = vertex_from_mask(n, mask)
        eqc = 1.0 - eq
        if mirrored:
            canon = min(mask, full ^ mask)
            deltas = _draw_deltas(protocol, (canon,), eq, eqc, 1.0 if canon == mask else -1.0)
        else:
            deltas = _draw_deltas(protocol, (mask,), eq, eqc)
        return _verdict(graph, bias, eq, eqc, deltas, protocol)

    workers = workers or os.cpu_count() or 1
    masks = range(1 << n)
    if workers == 1:
        results = [one(m) for m in masks]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, masks))
    verdicts = dict(zip(masks, results))
    levels = []
    for k in range(n + 1):
        members = [m for m in masks if bin(m).count("1") == k]
        stable = sum(verdicts[m].stable for m in members)
        levels.append(LevelStats(k, len(members), stable))
    meta = {"graph": graph.to_dict(), "bias": bias.tolist(), "protocol": asdict(protocol),
            "mirrored": mirrored}
    return ScanReport(n, levels, verdicts, meta)


# ---------------------------------------------------------------------------
# linearization cross-check

def fd_jacobian(graph: WeightedGraph, bias, eq, h: float = 1e-6) -> np.ndarray:
    """Finite-difference Jacobian of the step map at ``eq``.

    Central differences where both neighbours stay in [0,1]; one-sided into
    the unit cube otherwise.
    """
    if not 1e-8 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-8, 1e-4]")
    eq = as_state(eq, graph.n)
    n = graph.n
    J = np.empty((n, n))
    f0 = step_static(graph, bias, eq)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        if eq[j] - h < 0:
            J[:, j] = (step_static(graph, bias, eq + e) - f0) / h
        elif eq[j] + h > 1:
            J[:, j] = (f0 - step_static(graph, bias, eq - e)) / h
        else:
            J[:, j] = (step_static(graph, bias, eq + e) - step_static(graph, bias, eq - e)) / (2 * h)
    return J


@dataclass
class SpectralRadius:
    value: float
    converged: bool
    iterations: int


def spectral_radius(M, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> SpectralRadius:
    """Dominant eigenvalue magnitude by power iteration on ||M v|| with ||v|| = 1.

    Non-convergence (e.g. a complex dominant pair with unequal moduli along
    the iterates) is reported through ``converged`` rather than raised.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = M @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return SpectralRadius(0.0, True, it)
        if abs(norm - lam) <= tol * max(1.0, norm):
            return SpectralRadius(norm, True, it)
        lam = norm
        v = w / norm
    return SpectralRadius(lam, False, max_iter)
