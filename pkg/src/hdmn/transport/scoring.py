"""Goal and route prediction from filtered beliefs, and per-trip scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ModelError
from .model import N_DAY, N_TOD, TransportHDMN
from .simulate import Trajectory

PREFIX = 0.5
MIN_TRIP = 3


@dataclass
class TripScore:
    start: int
    stop: int
    true_goal: int
    predicted_goal: int
    route_fp: int
    route_fn: int

    @property
    def correct(self) -> bool:
        return self.true_goal == self.predicted_goal


@dataclass
class ScoreReport:
    """Goal accuracy in percent plus mean route false positives/negatives per trip."""

    goal_accuracy: float
    route_fp: float
    route_fn: float
    trips: list[TripScore] = field(default_factory=list)

    @property
    def n_trips(self) -> int:
        return len(self.trips)

    def as_dict(self) -> dict:
        return {"goal_accuracy": self.goal_accuracy, "route_fp": self.route_fp,
                "route_fn": self.route_fn, "trips": self.n_trips}


def _beliefs(output) -> list:
    return list(getattr(output, "beliefs", output))


def _argmax(p) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest id
    return int(np.argmax(np.asarray(p)))


def route_edges_from(model: TransportHDMN, edge: int, goal: int) -> list[int]:
    """Shortest edge path from the head of ``edge`` into goal ``goal`` (goal edge included)."""
    g = model.graph
    head = g.edges[edge][1]
    best = min(sorted(model.goals[goal]), key=lambda e: (model.vertex_distances[head, g.edges[e][0]], e))
    entry = g.edges[best][0]
    mid = g.shortest_edge_path(head, entry) if head != entry else []
    return mid + [best]


def nearest_goal(model: TransportHDMN, edge: int) -> int:
    """Closest goal by road distance from the head of ``edge``, skipping the goal ``edge`` lies on."""
    dist = model.goal_distance_from_vertex(model.graph.edges[edge][1])
    here = model.goal_of_edge[edge]
    if here >= 0:
        dist = dist.copy()
        dist[here] = np.inf
    return _argmax(-dist)


def predict(model: TransportHDMN, output, start: int, stop: int, prefix: float = PREFIX) -> tuple[int, set]:
    """(goal, route edge set) predicted from the first ``prefix`` share of ticks ``[start, stop)``."""
    beliefs = _beliefs(output)
    n = max(1, int(np.ceil(prefix * (stop - start))))
    window = beliefs[start:start + n]
    if not window:
        raise ModelError("filter output does not cover the trip")
    if model.variant == "model3":
        a = model.ids["a"]
        edges = [_argmax(b.marginals[a]) for b in window]
        votes = np.bincount([nearest_goal(model, e) for e in edges], minlength=model.n_goals)
        goal = _argmax(votes)
        return goal, set(route_edges_from(model, edges[0], goal))
    gid, rid = model.ids["g"], model.ids["r"]
    goal = _argmax(np.mean([b.marginals[gid] for b in window], axis=0))
    route = _argmax(np.mean([b.marginals[rid] for b in window], axis=0))
    return goal, set(model.route_path(route))


def score_trip(model: TransportHDMN, output, traj: Trajectory, start: int, stop: int,
               prefix: float = PREFIX) -> TripScore:
    goal, pred = predict(model, output, start, stop, prefix)
    traveled = set(int(e) for e in traj.edge[start:stop])
    return TripScore(start, stop, int(traj.goal[start]), goal, len(pred - traveled), len(traveled - pred))


def predict_and_score(model: TransportHDMN, output, traj: Trajectory, prefix: float = PREFIX,
                      min_len: int = MIN_TRIP) -> ScoreReport:
    """Score every trip of ``traj``.

    A trip is a maximal run of one true route between two different goals;
    dwelling (a route from a goal to itself) is not scored.
    """
    if len(_beliefs(output)) < len(traj):
        raise ModelError("filter output is shorter than the trajectory")
    trips = [score_trip(model, output, traj, a, b, prefix) for a, b, r in traj.trips(min_len)
             if len(set(model.route(r))) == 2]
    if not trips:
        return ScoreReport(float("nan"), float("nan"), float("nan"), [])
    return ScoreReport(100.0 * float(np.mean([s.correct for s in trips])),
                       float(np.mean([s.route_fp for s in trips])),
                       float(np.mean([s.route_fn for s in trips])), trips)


def estimate_goal_cpt(trajectories: Sequence[Trajectory], n_goals: int, pseudo: float = 1.0) -> np.ndarray:
    """Counting estimate of P(g | g', d, w) from departure ticks of fully observed traces.

    Shape ``(N_TOD, N_DAY, G, G)``; the diagonal (no self-switch) stays zero.
    """
    counts = np.zeros((N_TOD, N_DAY, n_goals, n_goals))
    for tr in trajectories:
        for t in range(1, len(tr)):
            if tr.sw[t] and tr.f[t] == 0:
                counts[tr.d[t], tr.w[t], tr.goal[t - 1], tr.goal[t]] += 1
    off = 1 - np.eye(n_goals)
    counts = (counts + pseudo) * off
    return counts / counts.sum(axis=-1, keepdims=True)
