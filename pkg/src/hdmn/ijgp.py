"""Iterative join-graph propagation, static and sliced (filtering) variants.

Messages are computed without division: the message from cluster ``a`` to
``b`` is the product of ``a``'s functions with every incoming message except
the one from ``b``, marginalised onto the separator.  Products keep ZERO
entries absorbing, so a value that gets probability zero is truly impossible
(the approximate support always contains the exact support).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegeneratePotentialError, InconsistentEvidenceError, ModelError
from .exact import BeliefState, potential_marginal, rename, slice_factors
from .joingraph import (
    IBoundWarning,
    JoinGraph,
    SlicedJoinGraph,
    build_join_graph,
    interaction_graph,
    join_tree_from_scopes,
    min_fill_order,
    paste_interfaces,
)
from .network import DynamicMixedNetwork, MixedNetwork
from .potential import (
    HybridPotential,
    marginalize,
    max_abs_diff,
    multiply,
    multiply_all,
    network_potentials,
    normalize,
    normalize_log_max,
)

log = logging.getLogger(__name__)

MAX_ITERS = 30
TOL = 1e-6
DAMPING = 0.5
DAMP_AFTER = 10


def _safe_normalize(p: HybridPotential) -> HybridPotential:
    try:
        return normalize(p)
    except DegeneratePotentialError:
        return normalize_log_max(p)


def _damp(old: HybridPotential, new: HybridPotential, alpha: float) -> HybridPotential:
    """Geometric mixture ``old^alpha * new^(1-alpha)`` (ZERO if either is ZERO)."""
    if set(old.scope) != set(new.scope) or set(old.dvars) != set(new.dvars):
        return new
    new = new.reorder(old.dvars, old.cvars)
    zero = old.zero | new.zero
    return HybridPotential(old.dvars, old.cards, old.cvars, alpha * old.g + (1 - alpha) * new.g,
                           alpha * old.h + (1 - alpha) * new.h, alpha * old.K + (1 - alpha) * new.K,
                           zero, old.collapsed or new.collapsed)


def schedule(jg: JoinGraph) -> list[tuple[int, int]]:
    """Directed edges: forward in cluster construction order, then reverse."""
    fwd, bwd = [], []
    for c in jg.clusters:
        for d in jg.neighbors(c.id):
            if d > c.id:
                fwd.append((c.id, d))
    for c in reversed(jg.clusters):
        for d in reversed(jg.neighbors(c.id)):
            if d < c.id:
                bwd.append((c.id, d))
    return fwd + bwd


@dataclass
class CalibratedGraph:
    """Result of :func:`ijgp`: cluster beliefs plus convergence diagnostics."""

    graph: JoinGraph
    psi: list[HybridPotential]
    messages: dict[tuple[int, int], HybridPotential]
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    _beliefs: dict = field(default_factory=dict, repr=False)

    def belief(self, c: int) -> HybridPotential:
        if c not in self._beliefs:
            b = self.psi[c]
            for d in self.graph.neighbors(c):
                b = multiply(b, self.messages[(d, c)])
            self._beliefs[c] = _safe_normalize(b)
        return self._beliefs[c]

    @property
    def zero_clusters(self) -> list[int]:
        """Clusters whose belief is ZERO everywhere (evidence ruled out by the graph)."""
        return [c.id for c in self.graph.clusters if self.belief(c.id).is_all_zero()]

    @property
    def collapsed(self) -> bool:
        return any(self.belief(c.id).collapsed for c in self.graph.clusters)

    def joint(self, variables) -> HybridPotential:
        vs = set(variables)
        holders = [c.id for c in self.graph.clusters if vs <= c.variables]
        if not holders:
            raise KeyError(f"no cluster holds {sorted(vs)}")
        b = self.belief(holders[0])
        return _safe_normalize(marginalize(b, [v for v in b.scope if v not in vs]))

    def marginal(self, v: int):
        """Marginal of ``v`` from the lowest-id cluster that contains it."""
        b = self.joint([v])
        if b.is_all_zero():
            raise InconsistentEvidenceError(f"belief over variable {v} is identically zero")
        return potential_marginal(b, v)


def ijgp(jg: JoinGraph, potentials: Sequence[HybridPotential], max_iters: int = MAX_ITERS,
         tol: float = TOL, damping: float = DAMPING, init: Mapping | None = None) -> CalibratedGraph:
    """Run IJGP on a join graph whose function slots are filled by ``potentials``.

    Stops when the largest message change in an iteration drops below
    ``tol`` or after ``max_iters`` iterations.  From iteration
    ``DAMP_AFTER`` on, if the residual failed to decrease, new messages are
    mixed geometrically with the old ones (weight ``damping`` on the old).
    ``init`` may seed messages (e.g. from the previous slice).
    """
    if len(potentials) != len(jg.scopes):
        raise ModelError(f"expected {len(jg.scopes)} potentials, got {len(potentials)}")
    for k, p in enumerate(potentials):
        if not set(p.scope) <= jg.scopes[k]:
            raise ModelError(f"potential {k} scope {p.scope} outside slot scope {sorted(jg.scopes[k])}")
    psi = [multiply_all(potentials[f] for f in c.functions) for c in jg.clusters]
    ident = HybridPotential.identity()
    sched = schedule(jg)
    msgs = {e: ident for e in sched}
    if init:
        for e, m in init.items():
            if e in msgs:
                msgs[e] = m
    residuals: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        damp = it > DAMP_AFTER and len(residuals) >= 2 and residuals[-1] >= residuals[-2]
        res = 0.0
        for a, b in sched:
            prod = psi[a]
            for d in jg.neighbors(a):
                if d != b:
                    prod = multiply(prod, msgs[(d, a)])
            sep = jg.separator(a, b)
            m = marginalize(prod, [v for v in prod.scope if v not in sep])
            m = normalize_log_max(m)
            old = msgs[(a, b)]
            if damp:
                m = normalize_log_max(_damp(old, m, damping))
            if set(old.scope) == set(m.scope) and set(old.dvars) == set(m.dvars):
                r = max_abs_diff(m, old)
            else:
                r = 1.0
            res = max(res, r)
            msgs[(a, b)] = m
        residuals.append(res)
        log.debug("ijgp iteration %d residual %.3g", it, res)
        if res < tol:
            converged = True
            break
    return CalibratedGraph(jg, psi, msgs, it, converged, residuals)


def _graph_for(potentials: Sequence[HybridPotential], i: int, extra_scopes=()) -> tuple[JoinGraph, list]:
    pots = list(potentials)
    scopes = [frozenset(p.scope) for p in pots] + [frozenset(s) for s in extra_scopes]
    discrete, continuous = set(), set()
    for p in pots:
        discrete.update(p.dvars)
        continuous.update(p.cvars)
    allv = set().union(*scopes) if scopes else set()
    order = min_fill_order(interaction_graph(scopes, allv), continuous)
    jt = join_tree_from_scopes(scopes, discrete, order)
    jg = build_join_graph(jt, i)
    return jg, pots


def ijgp_infer(net: MixedNetwork, evidence: Mapping[int, float] | None = None, i: int = 2,
               max_iters: int = MAX_ITERS, tol: float = TOL) -> dict:
    """Approximate posterior marginals of a static network with IJGP(i)."""
    evidence = dict(evidence or {})
    pots = network_potentials(net, evidence)
    jg, pots = _graph_for(pots, i)
    cal = ijgp(jg, pots, max_iters=max_iters, tol=tol)
    if cal.zero_clusters:
        raise InconsistentEvidenceError("zero probability mass detected by IJGP")
    return {v: cal.marginal(v) for v in sorted(jg.variables)}


def calibrate_network(net: MixedNetwork, evidence: Mapping[int, float] | None = None, i: int = 2,
                      **kw) -> CalibratedGraph:
    pots = network_potentials(net, dict(evidence or {}))
    jg, pots = _graph_for(pots, i)
    return ijgp(jg, pots, **kw)


# -- sliced filtering ------------------------------------------------------------------

@dataclass
class _PriorTemplate:
    graph: JoinGraph
    forward: list[int]


def _prior_template(dmn: DynamicMixedNetwork, groups, i: int, observed) -> _PriorTemplate:
    net = dmn.prior
    observed = set(observed)
    scopes = [frozenset(f.scope) - observed for f in net.functions()] + [frozenset(g) for g in groups]
    discrete = frozenset(v for v in net.discrete_ids if v not in observed)
    continuous = {v for v in net.continuous_ids if v not in observed}
    allv = set().union(*scopes) if scopes else set()
    allv |= set(discrete) | continuous
    order = min_fill_order(interaction_graph(scopes, allv), continuous)
    jt = join_tree_from_scopes(scopes, discrete, order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IBoundWarning)
        jg = build_join_graph(jt, i)
    owner = {f: c.id for c in jg.clusters for f in c.functions}
    ng = len(groups)
    forward = [owner[len(scopes) - ng + k] for k in range(ng)]
    return _PriorTemplate(jg, forward)


def always_observed(dmn: DynamicMixedNetwork, observations: Sequence[Mapping[int, float]]) -> frozenset:
    if not observations:
        return frozenset()
    obs = set(dmn.state_ids)
    for o in observations:
        obs &= set(o)
    return frozenset(obs)


def ijgp_s_filter(dmn: DynamicMixedNetwork, observations: Sequence[Mapping[int, float]], i: int = 2,
                  T: int | None = None, max_iters: int = MAX_ITERS, tol: float = TOL,
                  template: SlicedJoinGraph | None = None) -> list[BeliefState]:
    """Sliced IJGP(i) filter.

    The slice join graph is built once; the forward interface is carried as
    one potential per interface group (the product of group marginals).
    """
    T = len(observations) - 1 if T is None else T
    observed = always_observed(dmn, observations)
    sj = template if template is not None else paste_interfaces(dmn, i, observed)
    groups = sj.groups
    prior = _prior_template(dmn, groups, sj.i_bound, observed)
    states: list[BeliefState] = []
    interface: list[HybridPotential] = []
    ident = HybridPotential.identity()
    for t in range(T + 1):
        obs_t = dict(observations[t]) if t < len(observations) else {}
        if t == 0:
            graph, fwd = prior.graph, prior.forward
            pots = slice_factors(dmn, 0, observations) + [ident] * len(groups)
        else:
            graph, fwd = sj.graph, sj.forward
            base = slice_factors(dmn, t, observations, ())
            prev_pots = [rename(p, dmn.previous) for p in interface]
            pots = prev_pots + base + [ident] * len(groups)
        cal = ijgp(graph, pots, max_iters=max_iters, tol=tol)
        if cal.zero_clusters:
            raise InconsistentEvidenceError("zero-probability observation", t=t)
        present = set()
        for p in pots:
            present.update(p.scope)
        marg = {v: cal.marginal(v) for v in dmn.state_ids if v not in obs_t and v in present}
        interface = []
        for k, g in enumerate(groups):
            b = cal.belief(fwd[k])
            keep = [v for v in g if v in b.scope]
            interface.append(_safe_normalize(marginalize(b, [v for v in b.scope if v not in keep])))
        states.append(BeliefState(t, marg, interface, collapsed=cal.collapsed,
                                  info={"iterations": cal.iterations, "converged": cal.converged,
                                        "residual": cal.residuals[-1] if cal.residuals else 0.0}))
    return states
