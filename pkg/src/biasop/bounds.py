"""Contraction rates and exponential envelopes for polarized initial states."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dynamics import Trajectory, as_bias, as_state, simulate
from .graph import SwitchingSchedule, WeightedGraph, random_connected_graph, validate_schedule

SLACK = 1e-12


class NotPolarizedError(ValueError):
    pass


class InvalidScheduleError(ValueError):
    pass


class Side(str, enum.Enum):
    LOWER = "lower"  # opinions driven to 0
    UPPER = "upper"  # opinions driven to 1


def _rate(strength: np.ndarray, b: np.ndarray, near: float, far: float) -> float:
    # strength_k * [far^b_k - near^b_k], minimised over nodes
    return float(np.min(strength * (far ** b - near ** b)))


def _lower_extreme(x0) -> float:
    m = float(np.max(x0))
    if not m < 0.5:
        raise NotPolarizedError(f"max initial opinion {m} is not below 1/2")
    return m


def _upper_extreme(x0) -> float:
    m = float(np.min(x0))
    if not m > 0.5:
        raise NotPolarizedError(f"min initial opinion {m} is not above 1/2")
    return m


def _static_strength(graph: WeightedGraph) -> np.ndarray:
    d = graph.degrees
    if np.any(d <= 0):
        raise ValueError("every node needs a positive degree")
    return d / (graph.self_weights + d)


def compute_alpha(graph: WeightedGraph, bias, x0) -> float:
    """Decay rate toward 0 on a static graph when every opinion starts below 1/2."""
    x0 = as_state(x0, graph.n)
    m = _lower_extreme(x0)
    return _rate(_static_strength(graph), as_bias(bias, graph.n), m, 1.0 - m)


def compute_beta(graph: WeightedGraph, bias, x0) -> float:
    """Decay rate toward 1; mirror image of :func:`compute_alpha`."""
    x0 = as_state(x0, graph.n)
    m = _upper_extreme(x0)
    return _rate(_static_strength(graph), as_bias(bias, graph.n), 1.0 - m, m)


def _checked_schedule(sched: SwitchingSchedule, horizon: int | None) -> np.ndarray:
    if horizon is None:
        horizon = len(sched.snapshots) + 2 * sched.period
    report = validate_schedule(sched, horizon)
    if not report.passed:
        bad = {k: v.first_violation for k, v in report.clauses.items() if not v.passed}
        raise InvalidScheduleError(f"schedule violates the activity-window assumption: {bad}")
    return sched.c / (sched.caps + sched.c)


def compute_alpha_star(sched: SwitchingSchedule, bias, x0, horizon: int | None = None) -> float:
    """Switching-graph rate toward 0, built from the degree floor and self-weight caps.

    The schedule is validated over ``horizon`` steps (default: one full replay
    plus two windows, which covers every distinct window of a periodic schedule).
    """
    x0 = as_state(x0, sched.n)
    m = _lower_extreme(x0)
    return _rate(_checked_schedule(sched, horizon), as_bias(bias, sched.n), m, 1.0 - m)


def compute_beta_star(sched: SwitchingSchedule, bias, x0, horizon: int | None = None) -> float:
    x0 = as_state(x0, sched.n)
    m = _upper_extreme(x0)
    return _rate(_checked_schedule(sched, horizon), as_bias(bias, sched.n), 1.0 - m, m)


@dataclass(frozen=True)
class EnvelopeParams:
    side: Side
    rate: float
    initial_extreme: float  # max x(0) for LOWER, min x(0) for UPPER
    period: int = 1

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if not 0 < self.rate <= 1:
            raise ValueError(f"rate must lie in (0, 1], got {self.rate}")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.side is Side.LOWER and not self.initial_extreme < 0.5:
            raise ValueError("lower envelope needs an initial maximum below 1/2")
        if self.side is Side.UPPER and not self.initial_extreme > 0.5:
            raise ValueError("upper envelope needs an initial minimum above 1/2")

    @property
    def initial_gap(self) -> float:
        return self.initial_extreme if self.side is Side.LOWER else 1.0 - self.initial_extreme

    def bound(self, t) -> np.ndarray:
        t = np.asarray(t)
        return (1.0 - self.rate / 2.0) ** (t // self.period) * self.initial_gap


def envelope_params(system, bias, x0) -> EnvelopeParams:
    """Pick the side from ``x0`` and compute the matching rate."""
    x0 = as_state(x0, system.n)
    lower = float(np.max(x0)) < 0.5
    if not lower and not float(np.min(x0)) > 0.5:
        raise NotPolarizedError("initial opinions are not all on one side of 1/2")
    if isinstance(system, SwitchingSchedule):
        rate = (compute_alpha_star if lower else compute_beta_star)(system, bias, x0)
        period = system.period
    else:
        rate = (compute_alpha if lower else compute_beta)(system, bias, x0)
        period = 1
    extreme = float(np.max(x0)) if lower else float(np.min(x0))
    return EnvelopeParams(Side.LOWER if lower else Side.UPPER, rate, extreme, period)


@dataclass
class EnvelopeReport:
    t: np.ndarray
    observed: np.ndarray
    bound: np.ndarray
    passed: np.ndarray
    params: EnvelopeParams

    @property
    def ok(self) -> bool:
        return bool(self.passed.all())

    @property
    def worst_slack(self) -> float:
        return float(np.min(self.bound - self.observed))

    @property
    def first_failure(self) -> int | None:
        bad = np.nonzero(~self.passed)[0]
        return int(self.t[bad[0]]) if bad.size else None

    def to_csv(self, path) -> None:
        rows = ["t,observed,bound,pass"]
        rows += [f"{t},{o:.17g},{b:.17g},{int(p)}"
                 for t, o, b, p in zip(self.t, self.observed, self.bound, self.passed)]
        Path(path).write_text("\n".join(rows) + "\n")


def check_envelope(traj: Trajectory, params: EnvelopeParams, slack: float = SLACK) -> EnvelopeReport:
    """Compare a stored trajectory with its exponential envelope at every step."""
    states = traj.states
    if params.side is Side.LOWER:
        start = float(states[0].max())
        observed = states.max(axis=1)
    else:
        start = float(states[0].min())
        observed = np.abs(states - 1.0).max(axis=1)
    if start != params.initial_extreme:
        raise ValueError(f"trajectory starts at extreme {start}, params expect {params.initial_extreme}")
    t = np.arange(states.shape[0])
    bound = params.bound(t)
    return EnvelopeReport(t, observed, bound, observed <= bound + slack, params)


def is_nonincreasing(values, slack: float = 0.0) -> bool:
    return bool(np.all(np.diff(values) <= slack))


@dataclass
class SweepSummary:
    cases: int
    failures: int
    monotone_failures: int
    worst_slack: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def random_instance(rng: np.random.Generator, max_n: int = 20, x_high: float = 0.45):
    """Connected graph (spanning tree plus extras), bias in (0, 4], x0 in [0, x_high]."""
    n = int(rng.integers(2, max_n + 1))
    extra = int(rng.integers(0, n * (n - 1) // 2 - (n - 1) + 1))
    graph = random_connected_graph(rng, n, extra, (0.5, 2.0), (0.1, 2.0))
    bias = 4.0 - rng.uniform(0.0, 4.0, size=n)  # (0, 4]
    x0 = rng.uniform(0.0, x_high, size=n)
    return graph, bias, x0


def envelope_sweep(cases: int = 200, steps: int = 300, seed: int = 0, mirror: bool = False):
    """Random static instances checked against their envelope.

    With ``mirror`` the initial states are reflected through 1/2 so the upper
    envelope is exercised instead. Returns (summary, per-case reports).
    """
    rng = np.random.default_rng(seed)
    failures = monotone = 0
    worst = np.inf
    reports = []
    for _ in range(cases):
        graph, bias, x0 = random_instance(rng)
        if mirror:
            x0 = 1.0 - x0
        traj = simulate(graph, bias, x0, steps)
        rep = check_envelope(traj, envelope_params(graph, bias, x0))
        curve = rep.observed
        failures += not rep.ok
        monotone += not is_nonincreasing(curve)
        worst = min(worst, rep.worst_slack)
        reports.append(rep)
    return SweepSummary(cases, failures, monotone, float(worst), seed), reports
