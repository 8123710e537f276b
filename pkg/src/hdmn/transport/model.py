"""The car-travel HDMN: goals, routes, edge/offset location, speed and GPS readings.

Per slice (Model-1): time of day ``d`` (4 values) and day type ``w`` (2),
goal ``g``, route ``r = (origin goal, destination goal)`` with ``|g|^2``
values, dwell counter ``f`` in ``0..D``, goal-switch selector ``sw``, the
indicator ``eq`` = "current edge belongs to the current goal", edge ``a``,
offset ``o`` along the edge, speed ``v`` and observations ``yx``, ``yy``
(position) and ``ys`` (speed).  Model-2 drops ``d`` and ``w``; Model-3 keeps
only ``a``, ``o``, ``v`` and the observations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from ..errors import ModelError
from ..network import (
    ConstraintRelation,
    DiscreteCPD,
    DynamicMixedNetwork,
    LinearGaussianCPD,
    MixedNetwork,
    Variable,
)
from .roads import RoadGraph

VARIANTS = ("model1", "model2", "model3")
ALL_NAMES = ("d", "w", "g", "r", "f", "sw", "eq", "a", "o", "v", "yx", "yy", "ys")
OBSERVED = {"model1": ("d", "w", "yx", "yy", "ys"), "model2": ("yx", "yy", "ys"), "model3": ("yx", "yy", "ys")}
N_TOD = 4
N_DAY = 2


@dataclass(frozen=True)
class TransportParams:
    """Numeric knobs of the travel model (SI units; ``dt`` in seconds)."""

    D: int = 2
    dt: float = 5.0
    cruise_speed: float = 10.0
    speed_rho: float = 0.6
    speed_sd: float = 1.0
    park_stay: float = 0.8
    goal_bias: float = 0.85
    route_beta: float = 0.02
    route_jitter: float = 0.3
    uturn_penalty: float = 0.05
    gps_sd: float = 10.0
    speed_obs_sd: float = 1.0
    offset_sd: float = 3.0
    entry_offset: float = 2.0
    d_stay: float = 0.99
    w_stay: float = 0.995
    stop_speed: float = 0.5
    param_seed: int = 0

    def __post_init__(self):
        if self.D < 1:
            raise ModelError("D must be >= 1")
        for name in ("dt", "cruise_speed", "speed_sd", "offset_sd"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be > 0")
        for name in ("park_stay", "goal_bias", "d_stay", "w_stay", "speed_rho"):
            if not 0 <= getattr(self, name) <= 1:
                raise ModelError(f"{name} must lie in [0, 1]")

    def replace(self, **kw) -> "TransportParams":
        return replace(self, **kw)


# -- switching rules ----------------------------------------------------------------------

def next_counter(eq_prev: int, f_prev: int, D: int) -> int:
    """Value of F_t forced by rules (1)-(4)."""
    if eq_prev:
        return D if f_prev == 0 else f_prev - 1
    return 0


def switch_value(f_prev: int, f: int) -> int:
    """sw_t forced by rules (5)-(8): 1 when g_t is drawn from the goal CPT."""
    return int((f_prev > 0) != (f > 0))


def goal_switch_constraints(D: int, eq_prev: int = 0, f_prev: int = 1, f: int = 2, sw: int = 3,
                            ) -> list[ConstraintRelation]:
    """The eight switching rules as relations.

    Rules 1-4 range over ``(eq_prev, f_prev, f)``, rules 5-8 over
    ``(f_prev, f, sw)``; each relation holds every tuple where its guard is
    false or its consequence is true.
    """
    if D < 1:
        raise ModelError("D must be >= 1")
    c3 = (2, D + 1, D + 1)
    cs = (D + 1, D + 1, 2)
    s1 = (eq_prev, f_prev, f)
    s2 = (f_prev, f, sw)
    return [
        ConstraintRelation.from_predicate(s1, c3, lambda e, fp, fc: not (e and fp == 0) or fc == D, "rule1"),
        ConstraintRelation.from_predicate(s1, c3, lambda e, fp, fc: not (e and fp > 0) or fc == fp - 1, "rule2"),
        ConstraintRelation.from_predicate(s1, c3, lambda e, fp, fc: not (not e and fp == 0) or fc == 0, "rule3"),
        ConstraintRelation.from_predicate(s1, c3, lambda e, fp, fc: not (not e and fp > 0) or fc == 0, "rule4"),
        ConstraintRelation.from_predicate(s2, cs, lambda fp, fc, s: not (fp > 0 and fc == 0) or s == 1, "rule5"),
        ConstraintRelation.from_predicate(s2, cs, lambda fp, fc, s: not (fp == 0 and fc == 0) or s == 0, "rule6"),
        ConstraintRelation.from_predicate(s2, cs, lambda fp, fc, s: not (fp > 0 and fc > 0) or s == 0, "rule7"),
        ConstraintRelation.from_predicate(s2, cs, lambda fp, fc, s: not (fp == 0 and fc > 0) or s == 1, "rule8"),
    ]


# -- parameter tables -------------------------------------------------------------------------

def preferred_goal(d: int, w: int, n_goals: int, current: int | None = None) -> int:
    """Destination favoured at time of day ``d`` on day type ``w`` when leaving ``current``."""
    k = (d + 2 * w) % n_goals
    return (k + 1) % n_goals if k == current else k


def goal_cpt(n_goals: int, bias: float) -> np.ndarray:
    """P(g | g', d, w) on a departure, shape ``(N_TOD, N_DAY, G, G)``; never g = g'."""
    G = n_goals
    if G < 2:
        raise ModelError("need at least two goals")
    T = np.zeros((N_TOD, N_DAY, G, G))
    for d, w, gp in itertools.product(range(N_TOD), range(N_DAY), range(G)):
        others = [g for g in range(G) if g != gp]
        pref = preferred_goal(d, w, G, gp)
        if G == 2:
            T[d, w, gp, pref] = 1.0
            continue
        rest = [g for g in others if g != pref]
        T[d, w, gp, pref] = bias
        T[d, w, gp, rest] = (1 - bias) / len(rest)
    return T


def sticky_chain(n: int, stay: float) -> np.ndarray:
    if n == 1:
        return np.ones((1, 1))
    return stay * np.eye(n) + (1 - stay) * (1 - np.eye(n)) / (n - 1)


@dataclass
class TransportHDMN:
    """Built travel model plus the tables shared with the simulator."""

    dmn: DynamicMixedNetwork
    variant: str
    graph: RoadGraph
    goals: list[frozenset]
    params: TransportParams
    ids: dict[str, int]
    motion: np.ndarray
    goal_table: np.ndarray
    speed_target: np.ndarray
    route_lengths: np.ndarray = field(repr=False, default=None)

    @property
    def D(self) -> int:
        return self.params.D

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    def route(self, r: int) -> tuple[int, int]:
        return divmod(int(r), self.n_goals)

    def route_index(self, origin: int, dest: int) -> int:
        return origin * self.n_goals + dest

    @property
    def observed_names(self) -> tuple[str, ...]:
        return OBSERVED[self.variant]

    @cached_property
    def goal_of_edge(self) -> np.ndarray:
        out = np.full(self.graph.n_edges, -1)
        for k, gset in enumerate(self.goals):
            out[sorted(gset)] = k
        return out

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        return self.graph.vertex_distances()

    def goal_distance_from_vertex(self, vertex: int) -> np.ndarray:
        """Road distance from a vertex to each goal (entry point of its nearest edge)."""
        D = self.vertex_distances
        out = np.empty(self.n_goals)
        for k, gset in enumerate(self.goals):
            out[k] = min(D[vertex, self.graph.edges[e][0]] for e in gset)
        return out

    def route_path(self, r: int) -> list[int]:
        """Edges of the preferred path of route ``r`` (origin goal to destination goal)."""
        i, j = self.route(r)
        if i == j:
            return []
        ln = self.route_lengths[r]
        D = self.graph.vertex_distances(ln)
        best = None
        for ea in sorted(self.goals[i]):
            for eb in sorted(self.goals[j]):
                s, t = self.graph.edges[ea][1], self.graph.edges[eb][0]
                cost = D[s, t]
                if best is None or cost < best[0] - 1e-9:
                    best = (cost, ea, eb, s, t)
        if best is None or not np.isfinite(best[0]):
            return []
        _, ea, eb, s, t = best
        mid = self.graph.shortest_edge_path(s, t, ln) if s != t else []
        return [ea] + mid + [eb]

    def observation(self, values: dict[str, float]) -> dict[int, float]:
        """Map named observed values to this variant's variable ids."""
        return {self.ids[n]: values[n] for n in self.observed_names if n in values}


def _route_lengths(graph: RoadGraph, n_goals: int, jitter: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 7])
    mult = np.exp(jitter * rng.standard_normal((n_goals * n_goals, graph.n_edges)))
    return graph.lengths[None, :] * mult


def _motion_table(graph: RoadGraph, goals, params: TransportParams, route_lengths) -> np.ndarray:
    """P(a | a', r), shape ``(E, G*G, E)``."""
    E, G = graph.n_edges, len(goals)
    goal_of = np.full(E, -1)
    for k, gset in enumerate(goals):
        goal_of[sorted(gset)] = k
    M = np.zeros((E, G * G, E))
    for r in range(G * G):
        i, j = divmod(r, G)
        ln = route_lengths[r]
        Dv = graph.vertex_distances(ln)
        # distance from the end of each edge to the entry of the destination goal
        to_goal = np.array([min(Dv[graph.edges[k][1], graph.edges[e][0]] for e in goals[j]) for k in range(E)])
        for ap in range(E):
            succ = graph.successors[ap]
            if goal_of[ap] == j:
                M[ap, r, ap] = 1.0
                continue
            if goal_of[ap] == i or i == j:
                stay = params.park_stay
            else:
                stay = max(0.05, 1.0 - min(0.95, params.cruise_speed * params.dt / graph.lengths[ap]))
            M[ap, r, ap] = stay
            if not succ:
                M[ap, r, ap] = 1.0
                continue
            score = np.array([-(params.route_beta * (ln[s] + (0.0 if goal_of[s] == j else to_goal[s])))
                              for s in succ])
            pref = np.exp(score - score.max())
            a, b = graph.edges[ap]
            for n, s in enumerate(succ):
                if graph.edges[s][1] == a:
                    pref[n] *= params.uturn_penalty
            M[ap, r, succ] += (1 - stay) * pref / pref.sum()
    return M


def _blind_motion(graph: RoadGraph, params: TransportParams) -> np.ndarray:
    """P(a | a') without route knowledge (Model-3)."""
    E = graph.n_edges
    M = np.zeros((E, E))
    for ap in range(E):
        succ = graph.successors[ap]
        stay = max(0.05, 1.0 - min(0.95, params.cruise_speed * params.dt / graph.lengths[ap]))
        M[ap, ap] = stay if succ else 1.0
        if succ:
            pref = np.ones(len(succ))
            a = graph.edges[ap][0]
            for n, s in enumerate(succ):
                if graph.edges[s][1] == a:
                    pref[n] *= params.uturn_penalty
            M[ap, succ] += (1 - stay) * pref / pref.sum()
    return M


def build_transport_model(graph: RoadGraph, goals: Sequence[Sequence[int]], params: TransportParams | None = None,
                          variant: str = "model1") -> TransportHDMN:
    """Assemble the prior slice and the two-slice transition network."""
    params = params or TransportParams()
    if variant not in VARIANTS:
        raise ModelError(f"variant must be one of {VARIANTS}")
    goals = [frozenset(int(e) for e in g) for g in goals]
    if len(goals) < 2:
        raise ModelError("need at least two goals")
    seen: set[int] = set()
    for g in goals:
        if not g:
            raise ModelError("empty goal edge set")
        if g & seen:
            raise ModelError("goal edge sets must be disjoint")
        if any(not 0 <= e < graph.n_edges for e in g):
            raise ModelError("goal refers to an unknown edge")
        seen |= g
    G, D, E = len(goals), params.D, graph.n_edges
    names = [n for n in ALL_NAMES if variant == "model1" or
             (variant == "model2" and n not in ("d", "w")) or
             (variant == "model3" and n in ("a", "o", "v", "yx", "yy", "ys"))]
    ids = {n: k for k, n in enumerate(names)}
    nn = len(names)
    prev = {ids[n]: ids[n] + nn for n in names}
    P = {n: prev[ids[n]] for n in names}
    cards = {"d": N_TOD, "w": N_DAY, "g": G, "r": G * G, "f": D + 1, "sw": 2, "eq": 2, "a": E}
    labels = {"g": [f"goal{k}" for k in range(G)], "r": [f"{i}->{j}" for i in range(G) for j in range(G)],
              "eq": ["no", "yes"], "sw": ["keep", "switch"]}

    def var(n, vid, suffix=""):
        if n in cards:
            return Variable.discrete(vid, n + suffix, cards[n], labels.get(n, ()))
        return Variable.continuous(vid, n + suffix)

    cur = [var(n, ids[n]) for n in names]
    prv = [var(n, P[n], "'") for n in names]
    rl = _route_lengths(graph, G, params.route_jitter, params.param_seed)
    motion = _motion_table(graph, goals, params, rl) if variant != "model3" else _blind_motion(graph, params)
    gt = goal_cpt(G, params.goal_bias)
    goal_of = np.full(E, -1)
    for k, gset in enumerate(goals):
        goal_of[sorted(gset)] = k
    target = np.where(goal_of >= 0, 0.0, params.cruise_speed)
    ends = graph.coords[[a for a, _ in graph.edges]]
    dirs = np.array([graph.direction(k) for k in range(E)])

    def obs_cpds():
        gps = params.gps_sd ** 2
        return [
            LinearGaussianCPD(ids["yx"], (ids["a"],), (ids["o"],), ends[:, 0], dirs[:, :1], np.full(E, gps)),
            LinearGaussianCPD(ids["yy"], (ids["a"],), (ids["o"],), ends[:, 1], dirs[:, 1:], np.full(E, gps)),
            LinearGaussianCPD(ids["ys"], (), (ids["v"],), 0.0, [1.0], params.speed_obs_sd ** 2),
        ]

    # ---- prior slice
    pc = []
    if variant == "model1":
        pc += [DiscreteCPD(ids["d"], (), np.full(N_TOD, 1 / N_TOD)), DiscreteCPD(ids["w"], (), np.full(N_DAY, 1 / N_DAY))]
    if variant != "model3":
        rp = np.zeros((G, G * G))
        for g in range(G):
            for i in range(G):
                if i != g:
                    rp[g, i * G + g] = 1.0 / (G - 1)
        f0 = np.zeros(D + 1)
        f0[0] = 1.0
        start = np.zeros((G * G, E))
        for r in range(G * G):
            start[r, sorted(goals[r // G])] = 1.0 / len(goals[r // G])
        eqt = np.zeros((E, G, 2))
        for e in range(E):
            for g in range(G):
                eqt[e, g, int(goal_of[e] == g)] = 1.0
        pc += [
            DiscreteCPD(ids["g"], (), np.full(G, 1 / G)),
            DiscreteCPD(ids["r"], (ids["g"],), rp),
            DiscreteCPD(ids["f"], (), f0),
            DiscreteCPD(ids["sw"], (), np.array([1.0, 0.0])),
            DiscreteCPD(ids["a"], (ids["r"],), start),
            DiscreteCPD(ids["eq"], (ids["a"], ids["g"]), eqt),
        ]
    else:
        pc.append(DiscreteCPD(ids["a"], (), np.full(E, 1 / E)))
    pc += [
        LinearGaussianCPD(ids["o"], (ids["a"],), (), graph.lengths / 2, np.zeros((E, 0)), (graph.lengths / 4) ** 2),
        LinearGaussianCPD(ids["v"], (ids["a"],), (), target, np.zeros((E, 0)), np.full(E, params.speed_sd ** 2 * 4)),
    ]
    pc += obs_cpds()
    prior = MixedNetwork(cur, pc)

    # ---- transition
    tc, cons = [], []
    if variant == "model1":
        tc += [DiscreteCPD(ids["d"], (P["d"],), sticky_chain(N_TOD, params.d_stay)),
               DiscreteCPD(ids["w"], (P["w"],), sticky_chain(N_DAY, params.w_stay))]
    if variant != "model3":
        # a switch with f > 0 (arrival) keeps the goal; only f = 0 (departure) draws a new one
        if variant == "model1":
            gtab = np.zeros((G, N_TOD, N_DAY, 2, D + 1, G))
            for gp, d, w, s, f in itertools.product(range(G), range(N_TOD), range(N_DAY), range(2), range(D + 1)):
                if s and f == 0:
                    gtab[gp, d, w, s, f] = gt[d, w, gp]
                else:
                    gtab[gp, d, w, s, f, gp] = 1.0
            tc.append(DiscreteCPD(ids["g"], (P["g"], ids["d"], ids["w"], ids["sw"], ids["f"]), gtab))
        else:
            avg = gt.mean(axis=(0, 1))
            gtab = np.zeros((G, 2, D + 1, G))
            gtab[:, :, :] = np.eye(G)[:, None, None, :]
            gtab[:, 1, 0] = avg
            tc.append(DiscreteCPD(ids["g"], (P["g"], ids["sw"], ids["f"]), gtab))
        rt = np.zeros((G, G * G, 2, D + 1, G * G))
        for g, rp_, s, f in itertools.product(range(G), range(G * G), range(2), range(D + 1)):
            i, j = divmod(rp_, G)
            origin = (j if f > 0 else i) if s else i
            rt[g, rp_, s, f, origin * G + g] = 1.0
        tc += [
            DiscreteCPD(ids["f"], (), np.full(D + 1, 1 / (D + 1))),
            DiscreteCPD(ids["sw"], (), np.full(2, 0.5)),
            DiscreteCPD(ids["r"], (ids["g"], P["r"], ids["sw"], ids["f"]), rt),
            DiscreteCPD(ids["a"], (P["a"], ids["r"]), motion),
            DiscreteCPD(ids["eq"], (ids["a"], ids["g"]), eqt),
        ]
        cons += goal_switch_constraints(D, P["eq"], P["f"], ids["f"], ids["sw"])
    else:
        tc.append(DiscreteCPD(ids["a"], (P["a"],), motion))
    same = np.eye(E, dtype=bool)
    icpt = np.where(same, 0.0, params.entry_offset)
    coef = np.zeros((E, E, 2))
    coef[same] = [1.0, params.dt]
    tc += [
        LinearGaussianCPD(ids["o"], (P["a"], ids["a"]), (P["o"], P["v"]), icpt, coef, np.full((E, E), params.offset_sd ** 2)),
        LinearGaussianCPD(ids["v"], (ids["a"],), (P["v"],), (1 - params.speed_rho) * target,
                          np.full((E, 1), params.speed_rho), np.full(E, params.speed_sd ** 2)),
    ]
    tc += obs_cpds()
    adj = ConstraintRelation.from_predicate((P["a"], ids["a"]), (E, E), graph.adjacent, "adjacency")
    cons.append(adj)
    transition = MixedNetwork(cur + prv, tc, cons, roots_without_cpd=tuple(P.values()))
    dmn = DynamicMixedNetwork(prior, transition, prev, name=f"transport-{variant}")
    return TransportHDMN(dmn, variant, graph, goals, params, ids, motion, gt, target, rl)


def default_goals(graph: RoadGraph, vertices: Sequence[int]) -> list[frozenset]:
    """Goal ``k`` = the edges arriving at ``vertices[k]``."""
    return [frozenset(e for e, (_, b) in enumerate(graph.edges) if b == v) for v in vertices]
