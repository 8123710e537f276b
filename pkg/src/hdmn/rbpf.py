"""Rao-Blackwellised particle filtering with an IJGP proposal.

Each particle carries a sampled assignment ``r`` to the cutset ``R`` plus an
exact (join-tree) belief over the remaining interface variables ``Z``.  Per
slice, a proposal is built with IJGP on the slice conditioned on the
particle's context, ``r`` is drawn bucket by bucket, and the exact step
supplies both the new ``Z`` belief and the normalising constant used in the
importance weight.

Particles are stored as two arrays (state index, log-weight) over a table of
distinct particle states; proposals and exact steps are memoised per
distinct state, so copies made by resampling cost nothing extra.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import FilterFailure, InconsistentEvidenceError, ModelError
from .exact import BeliefState, GaussianMixture, calibrate, potential_marginal, rename
from .ijgp import CalibratedGraph, always_observed, ijgp
from .joingraph import (
    IBoundWarning,
    build_join_graph,
    elimination_cliques,
    interaction_graph,
    join_tree_from_scopes,
    min_fill_order,
    slice_scopes,
)
from .network import ConstraintRelation, DiscreteCPD, DynamicMixedNetwork, LinearGaussianCPD
from .potential import HybridPotential, condition, marginalize, potential_from_function

MAX_RETRIES = 25


# -- cutset -----------------------------------------------------------------------------

def select_slice_cutset(dmn: DynamicMixedNetwork, w: int, observed=()) -> tuple[int, ...]:
    """Greedy w-cutset over the current-slice discrete state variables.

    Removing ``v`` also removes its previous copy (its value is known from the
    particle).  The interface left analytic, ``(I minus R)``, is kept as a
    clique in both slices since its joint belief is carried forward.
    """
    if w < 0:
        raise ValueError("w must be >= 0")
    observed = set(observed)
    scopes, discrete, continuous = slice_scopes(dmn, observed)
    prev = dmn.previous
    cand = [v for v in dmn.state_ids if v in discrete]
    fwd = [v for v in dmn.interface if v not in observed]
    R: set[int] = set()
    while True:
        gone = R | {prev[v] for v in R}
        rest = [v for v in fwd if v not in R]
        extra = [frozenset(prev[v] for v in rest), frozenset(rest)]
        live = [s - gone for s in scopes + extra]
        allv = (set(discrete) | set(continuous)) - gone
        adj = interaction_graph(live, allv)
        order = min_fill_order(adj, set(continuous) & allv)
        over = [c for c in elimination_cliques(adj, order) if len(c & discrete) > w + 1]
        if not over:
            return tuple(sorted(R))
        counts = {}
        for v in cand:
            if v in R:
                continue
            k = sum(1 for c in over if v in c or prev[v] in c)
            if k:
                counts[v] = k
        if not counts:
            return tuple(sorted(R))
        deg = {v: len(adj.get(v, ())) + len(adj.get(prev[v], ())) for v in counts}
        R.add(min(counts, key=lambda v: (-counts[v], -deg[v], v)))


# -- particle state -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParticleState:
    """Distinct particle content: cutset values and analytic interface belief."""

    r: tuple[int, ...]
    phi: HybridPotential | None
    marginals: dict = field(default_factory=dict)

    @property
    def key(self):
        return (self.r, None if self.phi is None else self.phi.fingerprint())


@dataclass
class Particle:
    r: dict[int, int]
    phi: HybridPotential | None
    log_weight: float


@dataclass
class ParticleSet:
    """N particles as indices into a table of distinct states."""

    states: list[ParticleState]
    index: np.ndarray
    log_weights: np.ndarray
    rejections: int = 0
    draws: int = 0
    stream: tuple = ()

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def live(self) -> np.ndarray:
        return np.isfinite(self.log_weights)

    def weights(self) -> np.ndarray:
        lw = self.log_weights
        if not self.live.any():
            return np.zeros_like(lw)
        w = np.exp(lw - lw[self.live].max())
        return w / w.sum()

    @property
    def ess(self) -> float:
        w = self.weights()
        s = float(w @ w)
        return 1.0 / s if s > 0 else 0.0

    def particle(self, k: int, R: Sequence[int]) -> Particle:
        s = self.states[self.index[k]]
        return Particle(dict(zip(R, s.r)), s.phi, float(self.log_weights[k]))


# -- resampling -----------------------------------------------------------------------------

def systematic_indices(weights: np.ndarray, u: float, n: int | None = None) -> np.ndarray:
    """Systematic resampling: positions ``(k + u) / n`` against the weight CDF."""
    weights = np.asarray(weights, dtype=float)
    n = len(weights) if n is None else n
    total = weights.sum()
    if not total > 0:
        raise ValueError("no positive weight to resample from")
    cdf = np.cumsum(weights / total)
    cdf[-1] = 1.0
    pos = (np.arange(n) + u) / n
    return np.searchsorted(cdf, pos, side="right").clip(0, len(weights) - 1)


def resample(ps: ParticleSet, rng, t: int | None = None) -> ParticleSet:
    """Systematic resampling to N equally weighted particles."""
    if not ps.live.any():
        raise FilterFailure(-1 if t is None else t, ps.rejections, ps.draws)
    u = float(rng.random()) if hasattr(rng, "random") else float(rng)
    idx = systematic_indices(ps.weights(), u, ps.n)
    return ParticleSet(ps.states, ps.index[idx].copy(), np.zeros(ps.n), ps.rejections, ps.draws, ps.stream)


def step_generator(seed: int, t: int) -> np.random.Generator:
    """Counter-based stream for slice ``t``: independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(t)])))


# -- ordered buckets ------------------------------------------------------------------------

@dataclass
class OrderedBuckets:
    """One discrete table per cutset variable, in sampling order.

    ``tables[k]`` is over ``scopes[k]`` (a subset of the first ``k + 1``
    ordered variables, always ending with ``variables[k]``); conditioning it on
    the earlier values leaves a distribution over ``variables[k]``.
    """

    variables: tuple[int, ...]
    scopes: list[tuple[int, ...]]
    tables: list[np.ndarray]
    dead: bool = False

    @classmethod
    def from_graph(cls, cal: CalibratedGraph, R: Sequence[int], order: Sequence[int] | None = None):
        jg = cal.graph
        order = jg.order if order is None else order
        R = set(R)
        seq = [v for v in reversed(order) if v in R]
        seq += sorted(R - set(seq))
        scopes, tables = [], []
        done: list[int] = []
        dead = False
        for v in seq:
            holders = [c for c in jg.clusters if v in c.variables]
            if not holders:
                raise ModelError(f"cutset variable {v} not in the proposal graph")
            home = max(holders, key=lambda c: (len(c.variables & set(done)), -c.id))
            b = cal.belief(home.id)
            keep = [u for u in done if u in home.variables] + [v]
            m = marginalize(b, [u for u in b.scope if u not in keep])
            m = m.reorder([u for u in keep if u in m.dvars], ())
            lv = m.log_values()
            if not np.isfinite(lv).any():
                dead = True
                p = np.zeros(lv.shape)
            else:
                p = np.exp(lv - lv.max())
            scopes.append(tuple(u for u in keep if u in m.dvars))
            tables.append(p)
            done.append(v)
        return cls(tuple(seq), scopes, tables, dead)

    def sample_many(self, u: np.ndarray, R: Sequence[int]):
        """Vectorised draw: ``u`` has one row of ``len(R)`` uniforms per draw.

        Returns values ordered as ``R``, log Q and a dead-end mask.
        """
        m = u.shape[0]
        pos = {v: k for k, v in enumerate(self.variables)}
        vals = np.zeros((m, len(self.variables)), dtype=np.intp)
        logq = np.zeros(m)
        dead = np.zeros(m, dtype=bool)
        for k, v in enumerate(self.variables):
            tab = self.tables[k]
            idx = tuple(vals[:, pos[s]] for s in self.scopes[k][:-1])
            rows = tab[idx] if idx else np.broadcast_to(tab, (m, tab.shape[-1]))
            tot = rows.sum(axis=1)
            bad = ~(tot > 0)
            dead |= bad
            tot = np.where(bad, 1.0, tot)
            cdf = np.cumsum(rows, axis=1) / tot[:, None]
            x = (u[:, k:k + 1] >= cdf).sum(axis=1)
            # guard against round-off past the last positive entry
            last = rows.shape[1] - 1 - np.argmax(rows[:, ::-1] > 0, axis=1)
            x = np.minimum(x, last)
            vals[:, k] = x
            pk = rows[np.arange(m), x] / tot
            with np.errstate(divide="ignore"):
                logq += np.log(pk)
        dead |= ~np.isfinite(logq)
        out = np.zeros((m, len(R)), dtype=np.intp)
        for j, v in enumerate(R):
            out[:, j] = vals[:, pos[v]]
        return out, logq, dead


def sample_cutset(ob: OrderedBuckets, rng, R: Sequence[int] | None = None):
    """Draw one assignment; returns ``(dict var -> value, Q(r))`` or ``(None, 0.0)`` on a dead end."""
    R = ob.variables if R is None else tuple(R)
    n = len(ob.variables)
    u = np.asarray(rng.random(n) if hasattr(rng, "random") else rng, dtype=float).reshape(1, n)
    vals, logq, dead = ob.sample_many(u, R)
    if dead[0]:
        return None, 0.0
    return dict(zip(R, (int(x) for x in vals[0]))), float(np.exp(logq[0]))


def importance_weight(log_weight: float, log_z: float, q: float) -> float:
    """New log-weight: previous + log(target normaliser) - log Q(r); -inf on rejection."""
    if not np.isfinite(log_z) or q <= 0:
        return -np.inf
    return log_weight + log_z - float(np.log(q))


# -- slice machinery ------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _proposal_structure(scopes: tuple, discrete: frozenset, continuous: frozenset, i: int):
    allv = set().union(*scopes) if scopes else set()
    order = min_fill_order(interaction_graph(scopes, allv), continuous)
    jt = join_tree_from_scopes(scopes, discrete, order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IBoundWarning)
        return build_join_graph(jt, i)


def _drop_barren(funcs, ignored: set) -> list:
    """Remove CPDs of ignored variables that no remaining function depends on.

    Such a CPD sums (or integrates) to one over its child, so dropping it is
    exact and avoids integrating an unbounded parent block.  Constraints are
    ignored here since the blind proposal leaves them out.
    """
    funcs = [f for f in funcs if not isinstance(f, ConstraintRelation)]
    while True:
        used = set()
        for f in funcs:
            used.update(f.parents)
        drop = [f for f in funcs if f.child in ignored and f.child not in used]
        if not drop:
            return funcs
        funcs = [f for f in funcs if all(f is not d for d in drop)]


class SliceModel:
    """Compiled per-model context shared by all particles."""

    def __init__(self, dmn: DynamicMixedNetwork, observations, i: int, w: int,
                 cutset: Sequence[int] | None = None, proposal: str = "ijgp"):
        if proposal not in ("ijgp", "prior"):
            raise ValueError("proposal must be 'ijgp' or 'prior'")
        self.dmn = dmn
        self.obs = [dict(o) for o in observations]
        self.i = i
        self.w = w
        self.proposal = proposal
        self.observed = always_observed(dmn, observations)
        self.R = tuple(sorted(cutset)) if cutset is not None else select_slice_cutset(dmn, w, self.observed)
        bad = [v for v in self.R if not dmn.prior.is_discrete(v)]
        if bad:
            raise ModelError(f"cutset variables must be discrete: {bad}")
        self.Rp = tuple(dmn.previous[v] for v in self.R)
        self.Z_fwd = tuple(v for v in dmn.interface if v not in self.R and v not in self.observed)
        self.cards = {v: dmn.transition.card(v) for v in dmn.transition.discrete_ids}
        self._base_cache: dict = {}

    def evidence(self, t: int) -> dict:
        ev = dict(self.obs[t]) if t < len(self.obs) else {}
        if t > 0 and t - 1 < len(self.obs):
            ev.update({self.dmn.previous[v]: x for v, x in self.obs[t - 1].items()})
        return ev

    def base_potentials(self, t: int, r_prev: tuple | None, blind: bool = False) -> list[HybridPotential]:
        """Slice potentials conditioned on evidence and the previous cutset values."""
        key = (t, r_prev, blind)
        if key in self._base_cache:
            return self._base_cache[key]
        if len(self._base_cache) > 4096:
            self._base_cache.clear()
        net = self.dmn.prior if t == 0 else self.dmn.transition
        ev = {} if blind else self.evidence(t)
        if blind and t > 0:
            # previous-slice observations are part of the particle's context
            ev = {self.dmn.previous[v]: x for v, x in self.obs[t - 1].items()} if t - 1 < len(self.obs) else {}
        if t > 0:
            ev.update(zip(self.Rp, r_prev))
        funcs = net.functions()
        if blind:
            funcs = _drop_barren(funcs, set(self.obs[t]) if t < len(self.obs) else set())
        pots = []
        for f in funcs:
            if blind and isinstance(f, ConstraintRelation):
                continue
            p = potential_from_function(f, self.cards)
            pots.append(condition(p, ev) if ev else p)
        self._base_cache[key] = pots
        return pots

    def context(self, t: int, parent: ParticleState | None, blind: bool = False) -> list[HybridPotential]:
        r_prev = parent.r if (t > 0 and parent is not None) else None
        pots = list(self.base_potentials(t, r_prev, blind))
        if t > 0 and parent is not None and parent.phi is not None:
            pots.append(rename(parent.phi, self.dmn.previous))
        return pots


def build_proposal(model: SliceModel, t: int, parent: ParticleState | None) -> CalibratedGraph:
    """IJGP(i) on the slice conditioned on the parent's cutset values, interface belief and evidence."""
    blind = model.proposal == "prior"
    pots = model.context(t, parent, blind)
    scopes = tuple(frozenset(p.scope) for p in pots)
    discrete, continuous = set(), set()
    for p in pots:
        discrete.update(p.dvars)
        continuous.update(p.cvars)
    # cutset variables must appear even when conditioning removed them elsewhere
    missing = frozenset(v for v in model.R if v not in discrete)
    if missing:
        pots = pots + [HybridPotential([v], [model.cards[v]], (), 0.0) for v in sorted(missing)]
        scopes = scopes + tuple(frozenset([v]) for v in sorted(missing))
        discrete |= missing
    jg = _proposal_structure(scopes, frozenset(discrete), frozenset(continuous), model.i)
    return ijgp(jg, pots)


@dataclass
class StepResult:
    log_z: float
    state: ParticleState | None


def exact_step(model: SliceModel, t: int, parent: ParticleState | None, r: tuple[int, ...]) -> StepResult:
    """Join-tree inference on the slice given the parent and the sampled cutset values."""
    pots = model.context(t, parent)
    ev = dict(zip(model.R, r))
    pots = [condition(p, ev) for p in pots]
    present = set()
    for p in pots:
        present.update(p.scope)
    fwd = [v for v in model.Z_fwd if v in present]
    try:
        cal = calibrate(pots, extra_scopes=[fwd] if fwd else ())
    except InconsistentEvidenceError:
        return StepResult(-np.inf, None)
    obs_t = model.obs[t] if t < len(model.obs) else {}
    marg = {v: cal.marginal(v) for v in model.dmn.state_ids
            if v in present and v not in obs_t and v not in model.R}
    phi = cal.joint(fwd) if fwd else None
    return StepResult(cal.log_z, ParticleState(tuple(int(x) for x in r), phi, marg))


# -- the filter -----------------------------------------------------------------------------

@dataclass
class RBPFResult:
    beliefs: list[BeliefState]
    metrics: list[dict]
    cutset: tuple[int, ...]
    particles: ParticleSet | None = None

    @property
    def rejection_rate(self) -> float:
        d = sum(m["draws"] for m in self.metrics)
        return sum(m["rejections"] for m in self.metrics) / d if d else 0.0


def _estimate(model: SliceModel, t: int, states: list[ParticleState], index: np.ndarray, w: np.ndarray) -> dict:
    """Weighted marginals: delta mixture over R, Rao-Blackwellised over Z."""
    sw = np.bincount(index, weights=w, minlength=len(states))
    used = np.flatnonzero(sw > 0)
    obs_t = model.obs[t] if t < len(model.obs) else {}
    out: dict = {}
    for j, v in enumerate(model.R):
        if v in obs_t:
            continue
        p = np.zeros(model.cards[v])
        for s in used:
            p[states[s].r[j]] += sw[s]
        out[v] = p / p.sum()
    names = set()
    for s in used:
        names.update(states[s].marginals)
    for v in sorted(names):
        parts = [(sw[s], states[s].marginals[v]) for s in used if v in states[s].marginals]
        tot = sum(a for a, _ in parts)
        if isinstance(parts[0][1], GaussianMixture):
            ws = np.concatenate([a / tot * m.weights for a, m in parts])
            mu = np.concatenate([m.means for _, m in parts])
            var = np.concatenate([m.variances for _, m in parts])
            out[v] = GaussianMixture(ws, mu, var)
        else:
            out[v] = sum(a * m for a, m in parts) / tot
    return out


def ijgp_rbpf_filter(dmn: DynamicMixedNetwork, observations: Sequence[Mapping[int, float]], i: int = 2,
                     w: int = 1, N: int = 100, seed: int = 0, T: int | None = None, proposal: str = "ijgp",
                     cutset: Sequence[int] | None = None, resample_ess: float | None = None) -> RBPFResult:
    """IJGP-RBPF(i, w, N).

    ``resample_ess``: if given, resample only when ESS < resample_ess * N
    (otherwise every slice).  ``proposal="prior"`` replaces the IJGP
    proposal by a constraint- and evidence-blind one (for comparisons).
    """
    if N < 1 or i < 1 or w < 0:
        raise ValueError("need N >= 1, i >= 1, w >= 0")
    T = len(observations) - 1 if T is None else T
    model = SliceModel(dmn, observations, i, w, cutset, proposal)
    R = model.R
    nR = len(R)
    states: list[ParticleState] = []
    index = np.zeros(N, dtype=np.intp)
    logw = np.zeros(N)
    beliefs, metrics = [], []
    total_rej = total_draws = 0
    ps = None
    for t in range(T + 1):
        t0 = time.perf_counter()
        gen = step_generator(seed, t)
        U = gen.random((N, MAX_RETRIES * max(nR, 1)))
        u_res = gen.random()
        parents = [None] if t == 0 else states
        pidx = np.zeros(N, dtype=np.intp) if t == 0 else index
        new_states: list[ParticleState] = []
        new_key: dict = {}
        step_memo: dict = {}
        new_index = np.zeros(N, dtype=np.intp)
        inc = np.full(N, -np.inf)
        rej = draws = 0
        buckets: dict[int, OrderedBuckets] = {}
        for p in np.unique(pidx):
            parent = parents[p]
            if nR:
                cal = build_proposal(model, t, parent)
                buckets[p] = OrderedBuckets.from_graph(cal, R)
        pending = np.arange(N)
        for attempt in range(MAX_RETRIES):
            if not len(pending):
                break
            still = []
            for p in np.unique(pidx[pending]):
                rows = pending[pidx[pending] == p]
                draws += len(rows)
                if nR:
                    ob = buckets[p]
                    u = U[rows, attempt * nR:(attempt + 1) * nR]
                    vals, logq, dead = ob.sample_many(u, R)
                else:
                    vals = np.zeros((len(rows), 0), dtype=np.intp)
                    logq = np.zeros(len(rows))
                    dead = np.zeros(len(rows), dtype=bool)
                for k, row in enumerate(rows):
                    if dead[k]:
                        rej += 1
                        still.append(row)
                        continue
                    r = tuple(int(x) for x in vals[k])
                    key = (int(p), r)
                    res = step_memo.get(key)
                    if res is None:
                        res = exact_step(model, t, parents[p], r)
                        if res.state is not None:
                            sk = res.state.key
                            if sk not in new_key:
                                new_key[sk] = len(new_states)
                                new_states.append(res.state)
                            res = (res.log_z, new_key[sk])
                        else:
                            res = (-np.inf, -1)
                        step_memo[key] = res
                    lz, sid = res
                    if sid < 0:
                        rej += 1
                        still.append(row)
                        continue
                    new_index[row] = sid
                    inc[row] = lz - logq[k]
            pending = np.array(sorted(still), dtype=np.intp)
        total_rej += rej
        total_draws += draws
        logw = (logw if t else np.zeros(N)) + inc
        ps = ParticleSet(new_states, new_index, logw, total_rej, total_draws, (seed, t))
        if not ps.live.any():
            raise FilterFailure(t, total_rej, total_draws)
        wts = ps.weights()
        ess = ps.ess
        marg = _estimate(model, t, new_states, new_index, wts)
        beliefs.append(BeliefState(t, marg, [], collapsed=any(s.phi is not None and s.phi.collapsed
                                                               for s in new_states),
                                   info={"ess": ess}))
        if resample_ess is None or ess < resample_ess * N:
            ps = resample(ps, u_res, t)
        states, index, logw = ps.states, ps.index, ps.log_weights
        ms = (time.perf_counter() - t0) * 1e3
        metrics.append({"t": t, "ess": ess, "rejections": rej, "draws": draws,
                        "live": int(np.isfinite(inc).sum()), "states": len(new_states), "wall_ms": ms})
    return RBPFResult(beliefs, metrics, R, ps)


# -- plain bootstrap particle filter -----------------------------------------------------

def _sample_cpd_vec(cpd, vals: dict, u: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
    if isinstance(cpd, DiscreteCPD):
        idx = tuple(vals[p] for p in cpd.parents)
        rows = cpd.table[idx] if idx else np.broadcast_to(cpd.table, (len(u), cpd.table.shape[-1]))
        cdf = np.cumsum(rows, axis=1)
        x = (u[:, None] * cdf[:, -1:] >= cdf).sum(axis=1)
        return np.minimum(x, rows.shape[1] - 1)
    key = tuple(vals[p] for p in cpd.discrete_parents)
    n = len(u)
    a = cpd.intercept[key] if key else np.full(n, float(cpd.intercept))
    b = cpd.coefficients[key] if key else np.broadcast_to(cpd.coefficients, (n, len(cpd.continuous_parents)))
    var = cpd.variance[key] if key else np.full(n, float(cpd.variance))
    mean = a + sum(b[:, j] * vals[c] for j, c in enumerate(cpd.continuous_parents))
    return mean + np.sqrt(var) * z


def _log_cpd_vec(cpd, vals: dict, x) -> np.ndarray:
    if isinstance(cpd, DiscreteCPD):
        idx = tuple(vals[p] for p in cpd.parents) + (np.broadcast_to(x, len(next(iter(vals.values())))).astype(np.intp),)
        with np.errstate(divide="ignore"):
            return np.log(cpd.table[idx])
    n = len(next(iter(vals.values())))
    key = tuple(vals[p] for p in cpd.discrete_parents)
    a = cpd.intercept[key] if key else np.full(n, float(cpd.intercept))
    b = cpd.coefficients[key] if key else np.broadcast_to(cpd.coefficients, (n, len(cpd.continuous_parents)))
    var = cpd.variance[key] if key else np.full(n, float(cpd.variance))
    mean = a + sum(b[:, j] * vals[c] for j, c in enumerate(cpd.continuous_parents))
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


@dataclass
class PFResult:
    beliefs: list[BeliefState]
    metrics: list[dict]


def bootstrap_filter(dmn: DynamicMixedNetwork, observations: Sequence[Mapping[int, float]], N: int = 100,
                     seed: int = 0, T: int | None = None) -> PFResult:
    """Plain particle filter: all state variables sampled from the transition model.

    Observed variables weight the particles; constraint violations kill them.
    """
    T = len(observations) - 1 if T is None else T
    ids = dmn.state_ids
    prev_vals: dict[int, np.ndarray] = {}
    beliefs, metrics = [], []
    for t in range(T + 1):
        gen = step_generator(seed, t)
        net = dmn.prior if t == 0 else dmn.transition
        obs_t = dict(observations[t]) if t < len(observations) else {}
        vals = {dmn.previous[v]: x for v, x in prev_vals.items()} if t else {}
        vals["_n"] = np.zeros(N)
        logw = np.zeros(N)
        order = net.topological_order()
        U = gen.random((N, len(order)))
        Zn = gen.standard_normal((N, len(order)))
        for k, v in enumerate(order):
            if v in vals:
                continue
            cpd = net.cpds[v]
            if v in obs_t:
                x = obs_t[v]
                logw += _log_cpd_vec(cpd, vals, x)
                vals[v] = np.full(N, x, dtype=np.intp if isinstance(cpd, DiscreteCPD) else float)
            else:
                vals[v] = _sample_cpd_vec(cpd, vals, U[:, k], Zn[:, k])
        for c in net.constraints:
            tab = c.mask([net.card(v) for v in c.scope])
            ok = tab[tuple(vals[v].astype(np.intp) for v in c.scope)]
            logw = np.where(ok, logw, -np.inf)
        live = np.isfinite(logw)
        if not live.any():
            raise FilterFailure(t, int(N - live.sum()), N)
        wts = np.exp(logw - logw[live].max())
        wts /= wts.sum()
        marg = {}
        for v in ids:
            if v in obs_t:
                continue
            x = vals[v]
            if dmn.prior.is_discrete(v):
                marg[v] = np.bincount(x, weights=wts, minlength=dmn.prior.card(v)).astype(float)
            else:
                marg[v] = GaussianMixture(wts.copy(), np.asarray(x, dtype=float), np.zeros(N))
        ess = 1.0 / float(wts @ wts)
        beliefs.append(BeliefState(t, marg, [], info={"ess": ess}))
        metrics.append({"t": t, "ess": ess, "rejections": int(N - live.sum()), "draws": N, "live": int(live.sum())})
        idx = systematic_indices(wts, gen.random(), N)
        prev_vals = {v: vals[v][idx] for v in ids}
    return PFResult(beliefs, metrics)
