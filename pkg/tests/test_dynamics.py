from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasop.dynamics import (DegenerateNodeError, Drift, Trajectory, drift_sign, drift_signs, external_evidence,
                             invariance_potential, simulate, step_static, step_switching)
from biasop.graph import (Snapshot, SwitchingSchedule, WeightedGraph, make_graph,
                          random_connected_graph, round_robin_schedule)

from conftest import reference_step


def test_external_evidence_examples():
    assert external_evidence(make_graph("complete", 3), [0.5] * 3, 1) == 1.0
    assert external_evidence(make_graph("star", 4), [0, 0, 0, 1], 4) == 0.0
    assert external_evidence(make_graph("cycle", 4), [0.2, 0.4, 0.6, 0.8], 1) == pytest.approx(1.2)


def test_external_evidence_bounds(rng):
    g = random_connected_graph(rng, 9, 6)
    x = rng.uniform(size=9)
    for i in range(1, 10):
        assert 0 <= external_evidence(g, x, i) <= g.degree(i)


def test_step_matches_exact_rational_oracle():
    g = make_graph("complete", 3, 1.0)
    q = Fraction(1, 4)
    expected = reference_step([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [1, 1, 1], [1, 1, 1], [q, q, q])
    assert expected == [Fraction(1, 6)] * 3  # 0.375 / 2.25
    np.testing.assert_allclose(step_static(g, 1.0, [0.25] * 3), [1 / 6] * 3, rtol=0, atol=1e-15)


def test_step_matches_oracle_integer_bias(rng):
    # float path against exact rational arithmetic, b in {1, 2, 3}
    for _ in range(20):
        g = random_connected_graph(rng, 5, 3)
        b = rng.integers(1, 4, size=5)
        x = np.round(rng.uniform(size=5), 3)
        W = [[Fraction(v) for v in row] for row in g.weights]
        ref = reference_step(W, [Fraction(v) for v in g.self_weights], [int(v) for v in b],
                             [Fraction(v) for v in x])
        np.testing.assert_allclose(step_static(g, b, x), [float(r) for r in ref], rtol=1e-13)


@pytest.mark.parametrize("kind,n", [("complete", 5), ("star", 6), ("cycle", 7)])
@pytest.mark.parametrize("b", [0.3, 1.0, 2.0, 3.7])
def test_centroid_is_fixed(kind, n, b):
    g = make_graph(kind, n, 0.7)
    np.testing.assert_allclose(step_static(g, b, np.full(n, 0.5)), 0.5, atol=1e-15)


def test_vertices_are_fixed(rng):
    g = random_connected_graph(rng, 8, 4)
    for _ in range(20):
        v = rng.integers(0, 2, size=8).astype(float)
        assert np.array_equal(step_static(g, rng.uniform(0.1, 4), v), v)


def test_boundary_short_circuit_without_self_weight():
    g = make_graph("star", 4, 0.0)
    # leaf at 0 whose only neighbour (the hub) sits at 1: formula would give 0/0
    x = np.array([0.0, 0.3, 0.3, 1.0])
    assert step_static(g, 2.0, x)[0] == 0.0


def test_degenerate_interior_node():
    g = make_graph("star", 3, 0.0)
    # hub at 1 and a leaf so close to 0 that x^b underflows: denominator is 0
    with pytest.raises(DegenerateNodeError):
        step_static(g, 3.0, [1e-200, 0.5, 1.0])


def test_isolated_node_without_self_weight_is_unchanged():
    with pytest.warns(UserWarning):
        g = WeightedGraph.from_edges(3, [(1, 2)], 0.0)
    out = step_static(g, 2.0, [0.3, 0.4, 0.7])
    assert out[2] == 0.7


def test_rejects_states_outside_unit_cube():
    with pytest.raises(ValueError):
        step_static(make_graph("cycle", 3), 1.0, [0.2, 1.2, 0.3])
    with pytest.raises(ValueError):
        step_static(make_graph("cycle", 3), 0.0, [0.2, 0.2, 0.3])


# --- switching ----------------------------------------------------------------

def test_switching_without_arcs_is_identity():
    s = SwitchingSchedule((Snapshot(np.zeros((3, 3)), 0.0),), 1, 1.0, np.zeros(3))
    x = np.array([0.1, 0.6, 0.9])
    assert np.array_equal(step_switching(s, 2.0, x, 0), x)


def test_switching_on_static_graph_equals_static(rng):
    g = random_connected_graph(rng, 7, 5)
    s = SwitchingSchedule.constant(g)
    x = rng.uniform(size=7)
    b = rng.uniform(0.1, 4, size=7)
    assert np.array_equal(step_switching(s, b, x, 5), step_static(g, b, x))


def test_switching_centroid(rng):
    s = round_robin_schedule(6, 3, rng, cycles=2)
    for t in range(6):
        np.testing.assert_allclose(step_switching(s, 1.5, np.full(6, 0.5), t), 0.5, atol=1e-15)


def test_switching_inactive_nodes_keep_value():
    s = round_robin_schedule(4, 4)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    out = step_switching(s, 2.0, x, 1)  # only node 1 is active at t = 1
    assert np.array_equal(out[1:], x[1:]) and out[0] != x[0]


# --- simulate -----------------------------------------------------------------

def test_simulate_zero_horizon():
    traj = simulate(make_graph("cycle", 4), 1.0, [0.1, 0.2, 0.3, 0.4], 0)
    assert traj.states.shape == (1, 4)


def test_centroid_offset_decays_monotonically():
    g = make_graph("complete", 3, 1.0)
    traj = simulate(g, 1.0, np.full(3, 0.49), 200)
    y = traj.max_curve
    assert np.all(np.diff(y) < 0)
    assert y[-1] < 1e-10


def test_simulate_early_stop():
    g = make_graph("complete", 4, 1.0)
    full = simulate(g, 2.0, np.full(4, 0.3), 500)
    short = simulate(g, 2.0, np.full(4, 0.3), 500, tol=1e-9)
    assert short.horizon < full.horizon
    np.testing.assert_array_equal(short.states, full.states[: short.horizon + 1])


def test_simulate_switching_matches_manual_steps(rng):
    s = round_robin_schedule(5, 5, rng, cycles=3)
    x0 = rng.uniform(size=5)
    traj = simulate(s, 2.0, x0, 20)
    x = x0
    for t in range(20):
        x = step_switching(s, 2.0, x, t)
        np.testing.assert_array_equal(traj.states[t + 1], x)


def test_trajectory_csv_roundtrip(tmp_path, rng):
    traj = simulate(random_connected_graph(rng, 4, 2), 1.3, rng.uniform(size=4), 25)
    traj.to_csv(tmp_path / "t.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert head == "t,x_1,x_2,x_3,x_4"
    np.testing.assert_array_equal(Trajectory.from_csv(tmp_path / "t.csv").states, traj.states)


# --- invariance potential and drift --------------------------------------------

@pytest.mark.parametrize("b", [0.2, 1.0, 2.5, 7.0])
def test_potential_at_half(b):
    assert invariance_potential(0.5, b) == 0.5


@pytest.mark.parametrize("x", [0.01, 0.3, 0.77])
def test_potential_unbiased(x):
    assert invariance_potential(x, 1.0) == 0.5


def test_potential_quadratic_bias():
    assert invariance_potential(0.3, 2.0) == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize("x", [0.0, 1.0, -0.1])
def test_potential_domain(x):
    with pytest.raises(ValueError):
        invariance_potential(x, 2.0)


def _two_node_graph():
    # node 1 sees only node 2, so s_1 / d_1 = x_2
    return make_graph("complete", 2, 1.0)


def test_drift_examples():
    assert drift_sign(make_graph("cycle", 5), 2.0, np.full(5, 0.5), 3) is Drift.FIXED
    g = _two_node_graph()
    assert drift_sign(g, 2.0, [0.3, 0.9], 1) is Drift.INCREASE
    assert drift_sign(g, 2.0, [0.3, 0.5], 1) is Drift.DECREASE
    with pytest.raises(ValueError):
        drift_sign(g, 2.0, [0.0, 0.5], 1)


interior = st.floats(0.001, 0.999)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_range_and_mirror(seed, n):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, n, int(rng.integers(0, n)))
    b = rng.uniform(0.05, 4, size=n)
    x = rng.uniform(size=n)
    x[rng.uniform(size=n) < 0.2] = rng.integers(0, 2)
    out = step_static(g, b, x)
    assert np.all((out >= 0) & (out <= 1))
    np.testing.assert_allclose(step_static(g, b, 1.0 - x), 1.0 - out, rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(interior, st.floats(0.05, 0.95), st.floats(0.1, 5.0), st.floats(0.0, 3.0))
def test_update_increasing_in_evidence(xi, frac, b, w):
    # node 1 of a star with three leaves; evidence s_1 = 3 * frac through equal leaves
    g = make_graph("star", 4, w)
    h = 1e-6

    def new_hub(s):
        leaves = np.full(3, s / 3)
        return step_static(g, b, np.append(leaves, xi))[3]

    s = 3 * frac
    assert new_hub(s + h) > new_hub(s - h)


def test_drift_agrees_with_step_on_random_states(rng):
    disagreements = 0
    for _ in range(2000):
        n = int(rng.integers(2, 10))
        g = random_connected_graph(rng, n, int(rng.integers(0, n)))
        b = float(rng.uniform(0.1, 4))
        x = rng.uniform(0.001, 0.999, size=n)
        new = step_static(g, b, x)
        for i in range(1, n + 1):
            v = drift_sign(g, b, x, i)
            delta = new[i - 1] - x[i - 1]
            ok = {Drift.INCREASE: delta > 0, Drift.DECREASE: delta < 0,
                  Drift.FIXED: abs(delta) < 1e-12}[v]
            disagreements += not ok
    assert disagreements == 0


def test_drift_signs_vectorised(rng):
    g = random_connected_graph(rng, 9, 4)
    x = rng.uniform(0.01, 0.99, size=9)
    x[[2, 5]] = [0.0, 1.0]
    signs = drift_signs(g, 1.7, x)
    assert signs[2] is None and signs[5] is None
    for i in (1, 2, 4, 5, 7, 8, 9):
        assert signs[i - 1] is drift_sign(g, 1.7, x, i)
