import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdmn.errors import ModelError
from hdmn.network import ConstraintRelation, relation_join
from hdmn.transport import (
    TransportParams,
    build_transport_model,
    default_goals,
    extract_goals,
    goal_switch_constraints,
    grid_graph,
    predict_and_score,
    read_roads,
    read_trajectory,
    simulate,
    write_roads,
    write_trajectory,
)
from hdmn.transport.goals import dwell_segments, single_linkage
from hdmn.transport.model import goal_cpt, next_counter, preferred_goal, switch_value
from hdmn.transport.roads import RoadGraph
from hdmn.transport.scoring import estimate_goal_cpt, nearest_goal, route_edges_from


@pytest.fixture(scope="module")
def world():
    g = grid_graph(3, 3)
    goals = default_goals(g, [0, 2, 8])
    return SimpleNamespace(graph=g, goals=goals,
                           models={v: build_transport_model(g, goals, variant=v) for v in ("model1", "model2", "model3")})


# -- switching rules ----------------------------------------------------------------

@pytest.mark.parametrize("D", range(1, 6))
def test_rules_allow_exactly_the_deterministic_dynamics(D):
    rels = goal_switch_constraints(D, 0, 1, 2, 3)
    assert len(rels) == 8
    joint = rels[0]
    for r in rels[1:]:
        joint = relation_join(joint, r)
    pos = [joint.scope.index(v) for v in range(4)]
    allowed = {tuple(t[k] for k in pos) for t in joint.allowed}
    want = {(e, fp, next_counter(e, fp, D), switch_value(fp, next_counter(e, fp, D)))
            for e, fp in itertools.product(range(2), range(D + 1))}
    assert allowed == want


@pytest.mark.parametrize("D", range(1, 6))
def test_counter_cycle(D):
    # staying at the goal: D, D-1, ..., 0 then the departure switch
    f, seq = 0, []
    for _ in range(D + 2):
        f = next_counter(1, f, D)
        seq.append(f)
    assert seq[:D + 1] == list(range(D, -1, -1)) and seq[-1] == D
    assert next_counter(0, 3, D) == 0
    assert switch_value(1, 0) == 1 and switch_value(0, D) == 1 and switch_value(0, 0) == 0


def test_rules_need_positive_d():
    with pytest.raises(ModelError):
        goal_switch_constraints(0)


# -- parameters ----------------------------------------------------------------------

@pytest.mark.parametrize("G", [2, 3, 5])
def test_goal_cpt_is_stochastic_without_self_switch(G):
    T = goal_cpt(G, 0.85)
    np.testing.assert_allclose(T.sum(-1), 1.0)
    for d, w, gp in itertools.product(range(T.shape[0]), range(T.shape[1]), range(G)):
        assert T[d, w, gp, gp] == 0
        assert np.argmax(T[d, w, gp]) == preferred_goal(d, w, G, gp)


def test_params_validated():
    with pytest.raises(ModelError):
        TransportParams(D=0)
    with pytest.raises(ModelError):
        TransportParams(goal_bias=1.5)


def test_model_variants(world):
    m1, m2, m3 = (world.models[v] for v in ("model1", "model2", "model3"))
    assert set(m1.ids) == {"d", "w", "g", "r", "f", "sw", "eq", "a", "o", "v", "yx", "yy", "ys"}
    assert "d" not in m2.ids and "g" in m2.ids
    assert set(m3.ids) == {"a", "o", "v", "yx", "yy", "ys"}
    rules = [c for c in m1.dmn.transition.constraints if c.name.startswith("rule")]
    assert len(rules) == 8
    assert not any(c.name.startswith("rule") for c in m3.dmn.transition.constraints)
    for m in (m1, m2, m3):
        np.testing.assert_allclose(m.motion.sum(-1), 1.0)


def test_model_rejects_bad_goals(world):
    with pytest.raises(ModelError):
        build_transport_model(world.graph, [world.goals[0]])
    with pytest.raises(ModelError):
        build_transport_model(world.graph, [world.goals[0], world.goals[0]])
    with pytest.raises(ModelError):
        build_transport_model(world.graph, world.goals, variant="model9")


def test_route_paths_connect_goals(world):
    m = world.models["model1"]
    for r in range(m.n_goals ** 2):
        i, j = m.route(r)
        path = m.route_path(r)
        if i == j:
            assert path == []
            continue
        assert path[0] in m.goals[i] and path[-1] in m.goals[j]
        assert all(m.graph.adjacent(a, b) for a, b in zip(path, path[1:]))


# -- roads ---------------------------------------------------------------------------

def test_grid_and_round_trip(tmp_path):
    g = grid_graph(3, 2, 100.0)
    assert g.n_vertices == 6 and g.n_edges == 14
    write_roads(g, tmp_path / "r.txt")
    h = read_roads(tmp_path / "r.txt")
    assert h.edges == g.edges and np.allclose(h.lengths, g.lengths) and np.allclose(h.coords, g.coords)


def test_road_graph_validation():
    with pytest.raises(ModelError):
        RoadGraph(np.zeros((2, 2)) + [[0, 0], [1, 0]], [(0, 0)])
    with pytest.raises(ModelError):
        RoadGraph(np.array([[0, 0], [1, 0], [5, 5]]), [(0, 1)])


def test_nearest_edge_and_paths():
    g = grid_graph(3, 3, 100.0)
    k, off = g.nearest_edge((50.0, 3.0))
    assert set(g.edges[k]) == {0, 1} and off == pytest.approx(50.0 if g.edges[k] == (0, 1) else 50.0)
    path = g.shortest_edge_path(0, 8)
    assert len(path) == 4 and g.edges[path[0]][0] == 0 and g.edges[path[-1]][1] == 8


# -- simulator -----------------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_simulated_traces_satisfy_all_rules(seed, D):
    g = grid_graph(3, 3)
    m = build_transport_model(g, default_goals(g, [0, 2, 8]), TransportParams(D=D))
    tr = simulate(m, 60, seed)
    assert len(tr) == 61 and tr.violations(m) == []
    assert np.all(tr.offset >= 0) and np.all(tr.offset <= g.lengths[tr.edge] + 1e-9)


def test_simulation_is_seeded(world):
    m = world.models["model1"]
    a, b, c = simulate(m, 30, 4), simulate(m, 30, 4), simulate(m, 30, 5)
    assert np.array_equal(a.edge, b.edge) and np.array_equal(a.obs_x, b.obs_x)
    assert not np.array_equal(a.obs_x, c.obs_x)


def test_simulate_requires_full_model(world):
    with pytest.raises(ModelError):
        simulate(world.models["model2"], 10, 0)
    with pytest.raises(ModelError):
        simulate(world.models["model1"], 0, 0)


def test_noise_free_readings_are_exact(world):
    m = world.models["model1"]
    tr = simulate(m, 20, 1, gps_sd=0.0, speed_obs_sd=0.0)
    pos = np.array([m.graph.position(int(e), o) for e, o in zip(tr.edge, tr.offset)])
    np.testing.assert_allclose(pos, np.c_[tr.obs_x, tr.obs_y])
    np.testing.assert_allclose(tr.speed, tr.obs_speed)


def test_trips_are_maximal_runs(world):
    tr = simulate(world.models["model1"], 8, 0)
    tr.route = np.array([1, 1, 1, 4, 4, 2, 2, 2, 2])
    assert tr.trips(3) == [(0, 3, 1), (5, 9, 2)]
    assert tr.trips(2) == [(0, 3, 1), (3, 5, 4), (5, 9, 2)]


def test_trajectory_trips(world):
    tr = simulate(world.models["model1"], 200, 3)
    trips = tr.trips(3)
    for a, b, r in trips:
        assert b - a >= 3 and np.all(tr.route[a:b] == r)
        assert a == 0 or tr.route[a - 1] != r
        assert b == len(tr) or tr.route[b] != r


def test_goal_cpt_estimate_recovers_table():
    g = grid_graph(3, 3)
    m = build_transport_model(g, default_goals(g, [0, 2, 8]), TransportParams(d_stay=0.9, w_stay=0.9))
    trajs = [simulate(m, 400, s) for s in range(12)]
    est = estimate_goal_cpt(trajs, m.n_goals, pseudo=1.0)
    np.testing.assert_allclose(est.sum(-1), 1.0)
    assert np.all(est[..., [0, 1, 2], [0, 1, 2]] == 0)
    # share of departures that head for the favoured destination matches the bias
    hit = n = 0
    for tr in trajs:
        for t in np.flatnonzero((tr.sw == 1) & (tr.f == 0)):
            n += 1
            hit += int(tr.goal[t] == preferred_goal(tr.d[t], tr.w[t], 3, tr.goal[t - 1]))
    assert n > 50
    assert abs(hit / n - m.params.goal_bias) < 0.1


# -- io ------------------------------------------------------------------------------

def test_trajectory_round_trip(world, tmp_path):
    tr = simulate(world.models["model1"], 25, 9, scenario="s3")
    write_trajectory(tr, tmp_path / "a.traj")
    back = read_trajectory(tmp_path / "a.traj")
    assert back.scenario == "s3" and back.seed == 9
    for name in ("edge", "goal", "route", "f", "sw", "eq", "d", "w"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))
    for name in ("obs_x", "obs_y", "obs_speed", "offset", "speed"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))


def test_trajectory_reader_rejects_garbage(tmp_path):
    p = tmp_path / "bad.traj"
    p.write_text("nope\n")
    with pytest.raises(ModelError):
        read_trajectory(p)
    p.write_text("hdmn-traj/1\ntick x\n0 1\n")
    with pytest.raises(ModelError):
        read_trajectory(p)


# -- goal extraction -----------------------------------------------------------------

def test_dwell_segments_threshold():
    speed = np.array([5, 0, 0, 0, 5, 0, 0, 5.0])
    assert dwell_segments(speed, 10.0, 30.0) == [(1, 4)]
    assert dwell_segments(speed, 10.0, 20.0) == [(1, 4), (5, 7)]


def test_single_linkage_chains():
    pts = np.array([[0, 0], [40, 0], [80, 0], [500, 0]], dtype=float)
    assert single_linkage(pts, 50.0) == [[0, 1, 2], [3]]


def test_extract_goals_finds_two_places():
    dt = 60.0
    stay_a = [(0.0, 0.0)] * 20
    drive = [(x, 0.0) for x in np.linspace(10, 390, 10)]
    stay_b = [(400.0, 0.0)] * 20
    pts = np.array(stay_a + drive + stay_b + drive[::-1] + stay_a)
    speed = np.r_[np.zeros(20), np.full(10, 8.0), np.zeros(20), np.full(10, 8.0), np.zeros(20)]
    gs = extract_goals(pts[:, 0], pts[:, 1], speed, dt, graph=grid_graph(3, 3, 200.0))
    assert len(gs) == 2
    np.testing.assert_allclose(sorted(gs.centers[:, 0]), [0.0, 400.0])
    assert all(len(e) >= 1 for e in gs.edges)


def test_extract_goals_edge_cases():
    with pytest.raises(ValueError):
        extract_goals([], [], [], 5.0)
    assert extract_goals([0, 1], [0, 1], [9, 9], 5.0).empty


# -- scoring -------------------------------------------------------------------------

def _oracle_beliefs(m, tr):
    out = []
    for t in range(len(tr)):
        marg = {m.ids["a"]: np.eye(m.graph.n_edges)[tr.edge[t]]}
        if "g" in m.ids:
            marg[m.ids["g"]] = np.eye(m.n_goals)[tr.goal[t]]
            marg[m.ids["r"]] = np.eye(m.n_goals ** 2)[tr.route[t]]
        out.append(SimpleNamespace(t=t, marginals=marg))
    return out


def test_oracle_beliefs_score_perfectly(world):
    m = world.models["model1"]
    tr = simulate(m, 300, 2)
    rep = predict_and_score(m, _oracle_beliefs(m, tr), tr)
    assert rep.n_trips > 0 and rep.goal_accuracy == 100.0
    assert rep.route_fp >= 0 and rep.route_fn >= 0


def test_scoring_counts_route_errors(world):
    m = world.models["model1"]
    tr = simulate(m, 300, 2)
    wrong = _oracle_beliefs(m, tr)
    for b in wrong:
        b.marginals[m.ids["g"]] = np.roll(b.marginals[m.ids["g"]], 1)
    rep = predict_and_score(m, wrong, tr)
    assert rep.goal_accuracy == 0.0


def test_scoring_needs_full_output(world):
    m = world.models["model1"]
    tr = simulate(m, 30, 2)
    with pytest.raises(ModelError):
        predict_and_score(m, _oracle_beliefs(m, tr)[:5], tr)


def test_model3_predictor(world):
    m = world.models["model3"]
    for e in range(m.graph.n_edges):
        k = nearest_goal(m, e)
        assert k != m.goal_of_edge[e]
        path = route_edges_from(m, e, k)
        assert path[-1] in m.goals[k]
        assert m.graph.adjacent(e, path[0]) or m.graph.edges[e][1] == m.graph.edges[path[0]][0]
