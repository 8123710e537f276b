"""Synthetic travellers sampled from the full (Model-1) travel model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError
from .model import N_DAY, N_TOD, TransportHDMN, next_counter, sticky_chain, switch_value

INT_FIELDS = ("d", "w", "goal", "route", "f", "sw", "eq", "edge")
FLOAT_FIELDS = ("offset", "speed", "obs_x", "obs_y", "obs_speed")


@dataclass
class Trajectory:
    """Per-tick ground truth plus noisy readings (position and speed)."""

    d: np.ndarray
    w: np.ndarray
    goal: np.ndarray
    route: np.ndarray
    f: np.ndarray
    sw: np.ndarray
    eq: np.ndarray
    edge: np.ndarray
    offset: np.ndarray
    speed: np.ndarray
    obs_x: np.ndarray
    obs_y: np.ndarray
    obs_speed: np.ndarray
    seed: int = 0
    scenario: str = ""
    dt: float = 5.0
    gps_sd: float = 0.0
    speed_obs_sd: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.edge)

    @property
    def T(self) -> int:
        return len(self) - 1

    def named_observations(self, t: int) -> dict[str, float]:
        return {"d": int(self.d[t]), "w": int(self.w[t]), "yx": float(self.obs_x[t]),
                "yy": float(self.obs_y[t]), "ys": float(self.obs_speed[t])}

    def observations(self, model: TransportHDMN) -> list[dict[int, float]]:
        """Evidence per slice keyed by the variable ids of ``model``'s variant."""
        return [model.observation(self.named_observations(t)) for t in range(len(self))]

    def trips(self, min_len: int = 3) -> list[tuple[int, int, int]]:
        """Maximal runs ``(start, stop, route)`` of constant route, at least ``min_len`` ticks long."""
        out = []
        start = 0
        for t in range(1, len(self) + 1):
            if t == len(self) or self.route[t] != self.route[start]:
                if t - start >= min_len:
                    out.append((start, t, int(self.route[start])))
                start = t
        return out

    def violations(self, model: TransportHDMN) -> list[str]:
        """Constraint and adjacency violations (empty for every simulated trace)."""
        out = []
        D = model.D
        for t in range(1, len(self)):
            if not model.graph.adjacent(int(self.edge[t - 1]), int(self.edge[t])):
                out.append(f"t={t}: non-adjacent edges")
            if self.f[t] != next_counter(int(self.eq[t - 1]), int(self.f[t - 1]), D):
                out.append(f"t={t}: counter rule")
            if self.sw[t] != switch_value(int(self.f[t - 1]), int(self.f[t])):
                out.append(f"t={t}: switch rule")
            if not self.sw[t] and self.goal[t] != self.goal[t - 1]:
                out.append(f"t={t}: goal changed without switch")
        for t in range(len(self)):
            if self.eq[t] != int(model.goal_of_edge[self.edge[t]] == self.goal[t]):
                out.append(f"t={t}: eq indicator")
        return out


def simulate(model: TransportHDMN, T: int, seed: int, scenario: str = "", gps_sd: float | None = None,
             speed_obs_sd: float | None = None, d0: int | None = None, w0: int | None = None) -> Trajectory:
    """Ancestral sample of ``T + 1`` ticks.

    The switching counter and selector are set by their rules, so every
    trace satisfies the constraints by construction.  Offsets are clamped to
    the edge.  ``gps_sd``/``speed_obs_sd`` override the model's reading noise
    (zero gives exact readings).
    """
    if model.variant != "model1":
        raise ModelError("simulate needs the full model (variant 'model1') as ground truth")
    if T < 1:
        raise ModelError("T must be >= 1")
    p = model.params
    gps = p.gps_sd if gps_sd is None else gps_sd
    sps = p.speed_obs_sd if speed_obs_sd is None else speed_obs_sd
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    g_, n = model.graph, T + 1
    G, D = model.n_goals, p.D
    goal_of = model.goal_of_edge
    dchain, wchain = sticky_chain(N_TOD, p.d_stay), sticky_chain(N_DAY, p.w_stay)
    out = {k: np.zeros(n, dtype=np.int64) for k in INT_FIELDS}
    out.update({k: np.zeros(n) for k in FLOAT_FIELDS})

    def pick(probs):
        return int(rng.choice(len(probs), p=probs))

    for t in range(n):
        if t == 0:
            d = pick(np.full(N_TOD, 1 / N_TOD)) if d0 is None else d0
            w = pick(np.full(N_DAY, 1 / N_DAY)) if w0 is None else w0
            g = pick(np.full(G, 1 / G))
            origin = pick(np.array([0.0 if k == g else 1.0 for k in range(G)]) / (G - 1))
            r = model.route_index(origin, g)
            f, sw = 0, 0
            opts = sorted(model.goals[origin])
            a = opts[int(rng.integers(len(opts)))]
            o = rng.normal(g_.lengths[a] / 2, g_.lengths[a] / 4)
            v = rng.normal(model.speed_target[a], 2 * p.speed_sd)
        else:
            d = pick(dchain[d])
            w = pick(wchain[w])
            f = next_counter(eq, f, D)
            sw = switch_value(int(out["f"][t - 1]), f)
            if sw:
                if f == 0:
                    g = pick(model.goal_table[d, w, g])
                i, j = model.route(r)
                r = model.route_index(j if f > 0 else i, g)
            a_prev = a
            a = pick(model.motion[a_prev, r])
            if a == a_prev:
                o = o + p.dt * v + rng.normal(0, p.offset_sd)
            else:
                o = p.entry_offset + rng.normal(0, p.offset_sd)
            v = p.speed_rho * v + (1 - p.speed_rho) * model.speed_target[a] + rng.normal(0, p.speed_sd)
        o = float(np.clip(o, 0.0, g_.lengths[a]))
        eq = int(goal_of[a] == g)
        pos = g_.position(a, o)
        vals = dict(d=d, w=w, goal=g, route=r, f=f, sw=sw, eq=eq, edge=a, offset=o, speed=v,
                    obs_x=pos[0] + gps * rng.standard_normal(), obs_y=pos[1] + gps * rng.standard_normal(),
                    obs_speed=v + sps * rng.standard_normal())
        for k, x in vals.items():
            out[k][t] = x
    return Trajectory(**out, seed=int(seed), scenario=scenario, dt=p.dt, gps_sd=float(gps), speed_obs_sd=float(sps))
