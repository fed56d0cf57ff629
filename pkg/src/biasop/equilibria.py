"""Equilibrium conditions, closed-form interior families and a numeric search.

All routines here assume one bias exponent ``b`` shared by every node, unit
edge weights on the named topologies, and a common self weight.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .graph import GraphKind, WeightedGraph

EQ_TOL = 1e-10


class OutOfFamilyError(ValueError):
    pass


def scalar_bias(b) -> float:
    arr = np.asarray(b, dtype=float)
    if arr.ndim > 0:
        if arr.size == 0 or np.any(arr != arr.flat[0]):
            raise ValueError("equilibrium analysis needs a single bias exponent for all nodes")
        arr = arr.flat[0]
    b = float(arr)
    if not b > 0:
        raise ValueError("bias must be > 0")
    return b


@dataclass
class Residual:
    p: np.ndarray
    max_abs: float


def _residual_rows(W, d, b, X):
    """p_i for a batch of states X with shape (..., n)."""
    s = X @ W.T
    return X ** b * (X - 1.0) * s + X * (1.0 - X) ** b * (d - s)


def residual(graph: WeightedGraph, b, x) -> Residual:
    """Left-hand sides of the polynomial equilibrium conditions at ``x``."""
    b = scalar_bias(b)
    x = np.asarray(x, dtype=float)
    p = _residual_rows(graph.weights, graph.degrees, b, x)
    return Residual(p, float(np.max(np.abs(p))))


def is_equilibrium(graph: WeightedGraph, b, x, tol: float = EQ_TOL) -> bool:
    return residual(graph, b, x).max_abs <= tol


def residual_jacobian(graph: WeightedGraph, b, X) -> np.ndarray:
    """Analytic Jacobian of the residual map; accepts a batch (..., n)."""
    b = scalar_bias(b)
    W, d = graph.weights, graph.degrees
    X = np.asarray(X, dtype=float)
    s = X @ W.T
    Y = 1.0 - X
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = (b * X ** (b - 1.0) * (X - 1.0) + X ** b) * s \
            + (Y ** b - b * X * Y ** (b - 1.0)) * (d - s)
    off = X ** b * (X - 1.0) - X * Y ** b
    J = off[..., :, None] * W
    idx = np.arange(graph.n)
    J[..., idx, idx] = diag
    return J


def _reduced_rows(W, d, b, X):
    """p_i / (x_i (1 - x_i)): same interior zeros, no vanishing factor at the boundary."""
    s = X @ W.T
    return (1.0 - X) ** (b - 1.0) * (d - s) - X ** (b - 1.0) * s


def _reduced_jacobian(W, d, b, X):
    s = X @ W.T
    Y = 1.0 - X
    diag = -(b - 1.0) * (Y ** (b - 2.0) * (d - s) + X ** (b - 2.0) * s)
    J = -(Y ** (b - 1.0) + X ** (b - 1.0))[..., :, None] * W
    idx = np.arange(W.shape[0])
    J[..., idx, idx] = diag
    return J


# ---------------------------------------------------------------------------
# closed-form families

class Family(str, enum.Enum):
    CENTROID = "centroid"
    STAR_HYPERPLANE = "star_hyperplane"      # star, b = 1
    STAR_LINE = "star_line"                  # star, b = 2
    CYCLE_MOD4 = "cycle_mod4"                # cycle, b = 1, n = 0 mod 4
    CYCLE_ALTERNATING = "cycle_alternating"  # cycle, b = 2, n even


FAMILY_INFO = {
    Family.CENTROID: (GraphKind.CUSTOM, None, 0,
                      "(1/2, ..., 1/2), an equilibrium of every graph and bias"),
    Family.STAR_HYPERPLANE: (GraphKind.STAR, 1.0, None,
                             "hub = 1/2, leaves in (0,1) summing to (n-1)/2"),
    Family.STAR_LINE: (GraphKind.STAR, 2.0, 1, "(a, ..., a, 1-a), a in (0,1)"),
    Family.CYCLE_MOD4: (GraphKind.CYCLE, 1.0, 2,
                        "(a1, a2, 1-a1, 1-a2, ...) repeated, a1, a2 in (0,1), n = 0 mod 4"),
    Family.CYCLE_ALTERNATING: (GraphKind.CYCLE, 2.0, 1,
                               "(a, 1-a, a, 1-a, ...), a in (0,1), n even"),
}


def family_dimension(family: Family, n: int) -> int:
    family = Family(family)
    if family is Family.STAR_HYPERPLANE:
        return n - 2
    return FAMILY_INFO[family][2]


def family_member(family, n: int, params=()) -> np.ndarray:
    """The interior equilibrium of ``family`` on n nodes with free parameters ``params``."""
    family = Family(family)
    params = np.atleast_1d(np.asarray(params, dtype=float))
    need = family_dimension(family, n)
    if params.size != need:
        raise OutOfFamilyError(f"{family.value} on n={n} takes {need} parameter(s), got {params.size}")
    if np.any(~(params > 0) | ~(params < 1)):
        raise OutOfFamilyError(f"parameters must lie in (0, 1), got {params.tolist()}")
    if family is Family.CENTROID:
        x = np.full(n, 0.5)
    elif family is Family.STAR_HYPERPLANE:
        if n < 2:
            raise OutOfFamilyError("star needs n >= 2")
        last = (n - 1) / 2.0 - params.sum()
        if not 0 < last < 1:
            raise OutOfFamilyError(f"last leaf {last} falls outside (0, 1)")
        x = np.concatenate([params, [last, 0.5]])
    elif family is Family.STAR_LINE:
        a = params[0]
        x = np.concatenate([np.full(n - 1, a), [1.0 - a]])
    elif family is Family.CYCLE_MOD4:
        if n % 4:
            raise OutOfFamilyError(f"cycle_mod4 needs n divisible by 4, got {n}")
        a1, a2 = params
        x = np.tile([a1, a2, 1.0 - a1, 1.0 - a2], n // 4)
    else:
        if n % 2:
            raise OutOfFamilyError(f"cycle_alternating needs even n, got {n}")
        a = params[0]
        x = np.tile([a, 1.0 - a], n // 2)
    return x


def sample_family(family, n: int, rng: np.random.Generator, margin: float = 0.02) -> np.ndarray:
    """Random member with every coordinate at least ``margin`` from the boundary."""
    family = Family(family)
    if family is Family.STAR_HYPERPLANE:
        while True:
            v = rng.uniform(margin, 1.0 - margin, size=n - 1)
            v += 0.5 - v.mean()
            if np.all((v > margin) & (v < 1.0 - margin)):
                return family_member(family, n, v[:-1])
    k = family_dimension(family, n)
    return family_member(family, n, rng.uniform(margin, 1.0 - margin, size=k))


def families_for(kind: GraphKind, n: int, b: float) -> tuple[list[Family], bool]:
    """Interior-equilibrium families known in closed form for (topology, n, b).

    The flag is False when no closed form is known for this combination; the
    centroid is still listed because it is always an equilibrium.
    """
    kind = GraphKind(kind)
    if kind is GraphKind.COMPLETE:
        return [Family.CENTROID], (n >= 3 and (b <= 1 or b == 2))
    if kind is GraphKind.STAR:
        if b == 1:
            return [Family.STAR_HYPERPLANE], True
        if b == 2:
            return [Family.STAR_LINE], True
        return [Family.CENTROID], True
    if kind is GraphKind.CYCLE:
        if b == 1:
            return ([Family.CYCLE_MOD4] if n % 4 == 0 else [Family.CENTROID]), True
        if b == 2:
            return ([Family.CYCLE_ALTERNATING] if n % 2 == 0 else [Family.CENTROID]), True
    return [Family.CENTROID], False


def family_constraint_error(family, X) -> np.ndarray:
    """Max-norm violation of the defining constraints for each row of X."""
    family = Family(family)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    if family is Family.CENTROID:
        return np.max(np.abs(X - 0.5), axis=1)
    if family is Family.STAR_HYPERPLANE:
        return np.maximum(np.abs(X[:, -1] - 0.5), np.abs(X[:, :-1].sum(axis=1) - (n - 1) / 2))
    if family is Family.STAR_LINE:
        leaves = X[:, :-1]
        spread = np.max(np.abs(leaves - leaves[:, :1]), axis=1)
        return np.maximum(spread, np.abs(X[:, 0] + X[:, -1] - 1.0))
    if family is Family.CYCLE_MOD4:
        return np.max(np.abs(X + np.roll(X, -2, axis=1) - 1.0), axis=1)
    return np.max(np.abs(X + np.roll(X, -1, axis=1) - 1.0), axis=1)


# ---------------------------------------------------------------------------
# vertices

def vertex_from_mask(n: int, mask: int) -> np.ndarray:
    """Vertex of {0,1}^n whose node i (1-based) is 1 iff bit i-1 of mask is set."""
    return ((mask >> np.arange(n)) & 1).astype(float)


def enumerate_vertices(n: int, k: int | None = None):
    """Yield ``(mask, state)`` for every vertex, or only those with k ones."""
    if k is None:
        for mask in range(1 << n):
            yield mask, vertex_from_mask(n, mask)
        return
    if not 0 <= k <= n:
        raise ValueError(f"level k must lie in 0..{n}")
    for ones in itertools.combinations(range(n), k):
        mask = sum(1 << i for i in ones)
        yield mask, vertex_from_mask(n, mask)


# ---------------------------------------------------------------------------
# numeric search

@dataclass
class Cluster:
    point: np.ndarray
    residual: float
    seed_count: int

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "residual": self.residual,
                "seed_count": self.seed_count}


_RUNNING, _POLISHING, _CONVERGED, _FAILED = range(4)


def _newton_batch(graph, b, X, refine_tol, max_iter=200, max_halvings=40, polish=2):
    """Damped Newton on many seeds at once, applied to the reduced residual.

    The step is the pseudo-inverse Newton step (the solution sets for b = 1, 2
    are manifolds, so J is singular on them) halved until the max-norm
    reduced residual drops. Once below ``refine_tol`` a seed gets ``polish`` further
    steps that must not raise the residual. Returns (points, residuals,
    converged mask).
    """
    W, d = graph.weights, graph.degrees

    def norms(Z):
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            r = np.max(np.abs(_reduced_rows(W, d, b, Z)), axis=-1)
        r[~np.isfinite(r)] = np.inf
        r[np.any((Z <= 0) | (Z >= 1), axis=-1)] = np.inf
        return r

    X = X.copy()
    res = norms(X)
    status = np.where(res <= refine_tol, _POLISHING, _RUNNING)
    left = np.full(len(X), polish)
    for _ in range(max_iter + polish):
        active = np.nonzero((status == _RUNNING) | (status == _POLISHING))[0]
        if active.size == 0:
            break
        Xa = X[active]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            F = _reduced_rows(W, d, b, Xa)
            J = _reduced_jacobian(W, d, b, Xa)
        ok = np.all(np.isfinite(J), axis=(1, 2)) & np.all(np.isfinite(F), axis=1)
        step = np.zeros_like(Xa)
        if ok.any():
            step[ok] = -np.einsum("kij,kj->ki", np.linalg.pinv(J[ok], rcond=1e-13), F[ok])
        polishing = status[active] == _POLISHING
        best = res[active].copy()
        accepted = np.zeros(active.size, bool)
        lam = 1.0
        for _h in range(max_halvings + 1):
            todo = np.nonzero(ok & ~accepted)[0]
            if todo.size == 0:
                break
            trial = Xa[todo] + lam * step[todo]
            r = norms(trial)
            good = (r < best[todo]) | (polishing[todo] & (r <= best[todo]))
            hit = todo[good]
            Xa[hit] = trial[good]
            best[hit] = r[good]
            accepted[hit] = True
            lam *= 0.5
        X[active] = Xa
        res[active] = best
        st = status[active]
        # running seeds
        st[~polishing & ~accepted] = _FAILED
        newly = ~polishing & accepted & (best <= refine_tol)
        st[newly] = _POLISHING
        left[active[newly]] = polish
        # polishing seeds
        lf = left[active]
        lf[polishing & accepted] -= 1
        left[active] = lf
        st[polishing & (~accepted | (lf <= 0))] = _CONVERGED
        status[active] = st
    converged = (status == _CONVERGED) | (status == _POLISHING)
    return X, res, converged


def _cluster(points: np.ndarray, radius: float):
    """Greedy max-norm clustering; returns representative indices and member counts."""
    if len(points) == 0:
        return np.zeros(0, int), np.zeros(0, int)
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    tree = cKDTree(pts)
    label = np.full(len(pts), -1)
    reps, counts = [], []
    for i in range(len(pts)):
        if label[i] >= 0:
            continue
        members = [j for j in tree.query_ball_point(pts[i], radius, p=np.inf) if label[j] < 0]
        label[members] = len(reps)
        reps.append(order[i])
        counts.append(len(members))
    return np.array(reps), np.array(counts)


def grid_seeds(n: int, grid_step: float) -> np.ndarray:
    ticks = np.arange(1, int(round(1.0 / grid_step))) * grid_step
    ticks = ticks[(ticks > 0) & (ticks < 1)]
    return np.array(list(itertools.product(ticks, repeat=n)))


def numeric_search(graph: WeightedGraph, b, grid_step: float = 0.05, refine_tol: float = 1e-12,
                   delta: float = 1e-6, batch: int = 20000) -> list[Cluster]:
    """Interior equilibria found by damped Newton from every interior grid point.

    Newton runs on the residual divided by x_i (1 - x_i), which has the same
    interior zeros but does not flatten out near the boundary. Converged
    points (both residuals <= ``refine_tol``, every coordinate in
    (delta, 1 - delta)) are merged by max-norm clustering at radius
    ``10 * refine_tol``. Seeds that fail to converge are dropped.
    """
    if not 0 < grid_step <= 0.5:
        raise ValueError("grid_step must lie in (0, 0.5]")
    b = scalar_bias(b)
    seeds = grid_seeds(graph.n, grid_step)
    found = []
    for start in range(0, len(seeds), batch):
        X, _, conv = _newton_batch(graph, b, seeds[start:start + batch], refine_tol)
        with np.errstate(invalid="ignore"):
            p = np.max(np.abs(_residual_rows(graph.weights, graph.degrees, b, X)), axis=1)
        keep = conv & (p <= refine_tol) & np.all((X > delta) & (X < 1.0 - delta), axis=1)
        found.append(X[keep])
    pts = np.concatenate(found) if found else np.zeros((0, graph.n))
    reps, counts = _cluster(pts, 10 * refine_tol)
    out = []
    for r, c in zip(reps, counts):
        p = pts[r]
        out.append(Cluster(p, residual(graph, b, p).max_abs, int(c)))
    out.sort(key=lambda cl: tuple(cl.point))
    return out
