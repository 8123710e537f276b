"""Exact engines: enumeration, join-tree clustering and recursive filtering.

``brute_force_marginals`` deliberately avoids the canonical-form algebra: it
enumerates discrete configurations and propagates moment-form Gaussians
through the linear structural equations, so it can serve as an independent
oracle for everything built on :mod:`hdmn.potential`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InconsistentEvidenceError, ModelError
from .joingraph import interaction_graph, join_tree_from_scopes, min_fill_order
from .network import ConstraintRelation, DiscreteCPD, DynamicMixedNetwork, MixedNetwork
from .potential import (
    HybridPotential,
    condition,
    divide,
    log_mass,
    marginalize,
    multiply,
    multiply_all,
    network_potentials,
    normalize,
    potential_from_function,
    scale,
    total_log_mass,
)

LOG_2PI = math.log(2 * math.pi)


@dataclass
class GaussianMixture:
    """Marginal of a continuous variable: weighted 1-D Gaussian components."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    @property
    def var(self) -> float:
        m = self.mean
        return float(self.weights @ (self.variances + (self.means - m) ** 2))

    def collapse(self) -> "GaussianMixture":
        return GaussianMixture(np.ones(1), np.array([self.mean]), np.array([self.var]))


# -- brute force ------------------------------------------------------------------

def _gaussian_joint(net: MixedNetwork, config: Mapping[int, int], cont: Sequence[int]):
    """Mean and covariance of all continuous variables given a discrete configuration."""
    n = len(cont)
    idx = {v: k for k, v in enumerate(cont)}
    mu = np.zeros(n)
    cov = np.zeros((n, n))
    for v in net.topological_order():
        if v not in idx:
            continue
        cpd = net.cpds[v]
        key = tuple(config[p] for p in cpd.discrete_parents)
        a = float(cpd.intercept[key])
        b = np.asarray(cpd.coefficients[key], dtype=float)
        var = float(cpd.variance[key])
        zi = [idx[z] for z in cpd.continuous_parents]
        k = idx[v]
        mu[k] = a + b @ mu[zi]
        cross = b @ cov[zi, :]
        cov[k, :] = cross
        cov[:, k] = cross
        cov[k, k] = b @ cov[np.ix_(zi, zi)] @ b + var
    return mu, cov


def brute_force_joint(net: MixedNetwork, evidence: Mapping[int, float] | None = None):
    """Enumerate discrete configurations consistent with evidence and constraints.

    Returns ``(dvars, configs, weights, cvars, means, covs)`` where weights are
    normalised posterior probabilities and ``means``/``covs`` describe the
    unobserved continuous variables given each configuration.
    """
    evidence = dict(evidence or {})
    dvars = net.discrete_ids
    free = [v for v in dvars if v not in evidence]
    cards = [net.card(v) for v in free]
    total = int(np.prod(cards)) if cards else 1
    if total > 10**6:
        raise ModelError("brute force limited to 10^6 discrete configurations")
    cont = net.continuous_ids
    e_c = [v for v in cont if v in evidence]
    u_c = [v for v in cont if v not in evidence]
    e_val = np.array([float(evidence[v]) for v in e_c])
    ce = [cont.index(v) for v in e_c]
    cu = [cont.index(v) for v in u_c]
    configs, logw, means, covs = [], [], [], []
    for vals in itertools.product(*(range(c) for c in cards)):
        config = dict(zip(free, vals))
        config.update({v: int(evidence[v]) for v in dvars if v in evidence})
        ok = all(tuple(config[v] for v in c.scope) in c.allowed for c in net.constraints)
        if not ok:
            continue
        lw = 0.0
        for v in dvars:
            cpd = net.cpds.get(v)
            if cpd is None:
                continue
            p = float(cpd.table[tuple(config[u] for u in cpd.scope)])
            if p <= 0:
                lw = -np.inf
                break
            lw += math.log(p)
        if not np.isfinite(lw):
            continue
        mu, cov = _gaussian_joint(net, config, cont)
        if e_c:
            See = cov[np.ix_(ce, ce)]
            d = e_val - mu[ce]
            sol = np.linalg.solve(See, d)
            _, logdet = np.linalg.slogdet(See)
            lw += -0.5 * (len(ce) * LOG_2PI + logdet + d @ sol)
            Sue = cov[np.ix_(cu, ce)]
            m = mu[cu] + Sue @ sol
            c = cov[np.ix_(cu, cu)] - Sue @ np.linalg.solve(See, Sue.T)
        else:
            m, c = mu[cu], cov[np.ix_(cu, cu)]
        configs.append(tuple(config[v] for v in dvars))
        logw.append(lw)
        means.append(m)
        covs.append(c)
    if not configs:
        raise InconsistentEvidenceError("zero total probability mass")
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return dvars, np.array(configs, dtype=int).reshape(len(configs), len(dvars)), w, u_c, np.array(means), np.array(covs)


def brute_force_log_evidence(net: MixedNetwork, evidence: Mapping[int, float] | None = None) -> float:
    """log of the unnormalised mass left after evidence and constraints (P_B scale)."""
    evidence = dict(evidence or {})
    dvars = net.discrete_ids
    free = [v for v in dvars if v not in evidence]
    cont = net.continuous_ids
    e_c = [v for v in cont if v in evidence]
    ce = [cont.index(v) for v in e_c]
    e_val = np.array([float(evidence[v]) for v in e_c])
    acc = []
    for vals in itertools.product(*(range(net.card(v)) for v in free)):
        config = dict(zip(free, vals))
        config.update({v: int(evidence[v]) for v in dvars if v in evidence})
        if not all(tuple(config[v] for v in c.scope) in c.allowed for c in net.constraints):
            continue
        p = 1.0
        for v in dvars:
            cpd = net.cpds.get(v)
            if cpd is not None:
                p *= float(cpd.table[tuple(config[u] for u in cpd.scope)])
        if p <= 0:
            continue
        lw = math.log(p)
        if e_c:
            mu, cov = _gaussian_joint(net, config, cont)
            See = cov[np.ix_(ce, ce)]
            d = e_val - mu[ce]
            _, logdet = np.linalg.slogdet(See)
            lw += -0.5 * (len(ce) * LOG_2PI + logdet + d @ np.linalg.solve(See, d))
        acc.append(lw)
    if not acc:
        return -np.inf
    acc = np.array(acc)
    return float(acc.max() + np.log(np.exp(acc - acc.max()).sum()))


def brute_force_marginals(net: MixedNetwork, evidence: Mapping[int, float] | None = None) -> dict:
    """Posterior marginal of every unobserved variable by full enumeration."""
    dvars, configs, w, u_c, means, covs = brute_force_joint(net, evidence)
    evidence = evidence or {}
    out: dict = {}
    for k, v in enumerate(dvars):
        if v in evidence:
            continue
        out[v] = np.bincount(configs[:, k], weights=w, minlength=net.card(v)).astype(float)
    for k, v in enumerate(u_c):
        out[v] = GaussianMixture(w.copy(), means[:, k].copy(), covs[:, k, k].copy())
    return out


# -- join-tree clustering ---------------------------------------------------------

def rename(p: HybridPotential, mapping: Mapping[int, int]) -> HybridPotential:
    return HybridPotential([mapping.get(v, v) for v in p.dvars], p.cards, [mapping.get(v, v) for v in p.cvars],
                           p.g, p.h, p.K, p.zero, p.collapsed)


def strong_order(scopes: Sequence[Iterable[int]], continuous: Iterable[int], variables: Iterable[int] = ()) -> list[int]:
    adj = interaction_graph(scopes, variables)
    return min_fill_order(adj, set(continuous) & set(adj))


@dataclass
class Calibration:
    """Cluster beliefs of a calibrated join tree."""

    tree: object
    beliefs: list[HybridPotential]
    log_z: float
    cards: dict[int, int]
    continuous: frozenset = field(default_factory=frozenset)

    @property
    def collapsed(self) -> bool:
        return any(b.collapsed for b in self.beliefs)

    def joint(self, variables: Iterable[int]) -> HybridPotential:
        vs = set(variables)
        cid = self.tree.home(vs)
        if cid is None:
            raise KeyError(f"no cluster holds {sorted(vs)}")
        b = self.beliefs[cid]
        return normalize(marginalize(b, [v for v in b.scope if v not in vs]))

    def marginal(self, v: int):
        return potential_marginal(self.joint([v]), v)

    def marginals(self, variables: Iterable[int] | None = None) -> dict:
        vs = self.tree.variables if variables is None else variables
        return {v: self.marginal(v) for v in sorted(vs)}


def potential_marginal(p: HybridPotential, v: int):
    """Marginal of one variable from a potential whose scope contains it."""
    if v in p.dvars:
        q = marginalize(p, [u for u in p.scope if u != v])
        lv = q.log_values()
        mx = lv.max()
        pr = np.exp(lv - mx)
        return pr / pr.sum()
    q = marginalize(p, [u for u in p.cvars if u != v])
    lm = log_mass(q).ravel()
    live = np.isfinite(lm)
    K = q.K.reshape(-1, 1, 1)[live, 0, 0]
    h = q.h.reshape(-1, 1)[live, 0]
    w = np.exp(lm[live] - lm[live].max())
    return GaussianMixture(w / w.sum(), h / K, 1.0 / K)


def calibrate(potentials: Sequence[HybridPotential], extra_scopes: Sequence[Iterable[int]] = (),
              order: Sequence[int] | None = None) -> Calibration:
    """Two-pass (collect/distribute) calibration over a join tree of the potentials.

    The distribute pass divides the parent's weak marginal by the upward
    message, which keeps first and second moments exact on a tree built from a
    continuous-first elimination order.  ``extra_scopes`` force clusters that
    cover the given variable sets (e.g. an interface whose joint is wanted).
    """
    potentials = list(potentials)
    extra = [frozenset(s) for s in extra_scopes]
    scopes = [frozenset(p.scope) for p in potentials] + extra
    cards: dict[int, int] = {}
    continuous = set()
    for p in potentials:
        cards.update(zip(p.dvars, p.cards))
        continuous.update(p.cvars)
    allv = set().union(*scopes) if scopes else set()
    if not allv <= set(cards) | continuous:
        raise ModelError("extra scope mentions a variable absent from every potential")
    if order is None:
        order = strong_order(scopes, continuous, allv)
    tree = join_tree_from_scopes(scopes, cards.keys(), order)
    n = len(tree.clusters)
    psi = []
    for c in tree.clusters:
        ps = [potentials[f] for f in c.functions if f < len(potentials)]
        psi.append(multiply_all(ps))
    # root: the cluster holding the last-eliminated variable
    root = n - 1
    if order:
        last = order[-1]
        for c in tree.clusters:
            if last in c.variables:
                root = c.id
    parent = {root: None}
    pre = [root]
    k = 0
    while k < len(pre):
        c = pre[k]
        k += 1
        for d in tree.neighbors(c):
            if d not in parent:
                parent[d] = c
                pre.append(d)
    children = {c: [] for c in pre}
    for c in pre[1:]:
        children[parent[c]].append(c)
    up: dict[int, HybridPotential] = {}
    shift = 0.0
    for c in reversed(pre[1:]):
        prod = psi[c]
        for ch in children[c]:
            prod = multiply(prod, up[ch])
        sep = tree.separator(c, parent[c])
        m = marginalize(prod, [v for v in prod.scope if v not in sep])
        if m.zero.all():
            raise InconsistentEvidenceError("zero probability mass in join-tree calibration")
        # messages may be improper in continuous variables, so rescale by the largest g
        s = float(np.max(np.where(m.zero, -np.inf, m.g)))
        up[c] = scale(m, -s)
        shift += s
    beliefs: list[HybridPotential | None] = [None] * n
    b = psi[root]
    for ch in children[root]:
        b = multiply(b, up[ch])
    z = total_log_mass(b)
    if not np.isfinite(z):
        raise InconsistentEvidenceError("zero probability mass in join-tree calibration")
    beliefs[root] = scale(b, -z)
    for c in pre[1:]:
        p = parent[c]
        sep = tree.separator(c, p)
        pb = beliefs[p]
        down = marginalize(pb, [v for v in pb.scope if v not in sep])
        down = divide(down, up[c])
        b = multiply(psi[c], down)
        for ch in children[c]:
            b = multiply(b, up[ch])
        beliefs[c] = normalize(b)
    return Calibration(tree, beliefs, z + shift, cards, frozenset(continuous))


def jtc_infer(net: MixedNetwork, evidence: Mapping[int, float] | None = None,
              queries: Iterable[int] | None = None) -> dict:
    """Exact posterior marginals by join-tree clustering."""
    evidence = dict(evidence or {})
    pots = network_potentials(net, evidence)
    free = [v for v in net.variables if v not in evidence]
    cal = calibrate(pots + [_identity_over(net, [v]) for v in free if not _covered(pots, v)])
    qs = free if queries is None else [q for q in queries]
    return {v: cal.marginal(v) for v in qs}


def _covered(pots, v):
    return any(v in p.scope for p in pots)


def _identity_over(net, vs):
    d = [v for v in vs if net.is_discrete(v)]
    c = [v for v in vs if not net.is_discrete(v)]
    if c:
        raise ModelError("continuous variable without any potential")
    return HybridPotential(d, [net.card(v) for v in d], (), 0.0)


def jtc_log_evidence(net: MixedNetwork, evidence: Mapping[int, float] | None = None) -> float:
    pots = network_potentials(net, evidence or {})
    return calibrate(pots).log_z


# -- variable elimination -------------------------------------------------------------

def eliminate(potentials: Sequence[HybridPotential], keep: Iterable[int]) -> HybridPotential:
    """Product of the potentials with everything outside ``keep`` eliminated.

    Continuous variables go first (exact integration).  Before a discrete
    variable is summed out, every potential sharing continuous variables with
    its bucket is absorbed, so the result carries exact first and second
    moments even when the summation collapses a mixture.
    """
    keep = set(keep)
    pots = list(potentials)
    continuous = set()
    for p in pots:
        continuous.update(p.cvars)
    scopes = [p.scope for p in pots]
    allv = set().union(*map(set, scopes)) if scopes else set()
    elim = allv - keep
    adj = interaction_graph(scopes, allv)
    order = [v for v in min_fill_order(adj, continuous) if v in elim]
    for v in order:
        bucket = [p for p in pots if v in p.scope]
        rest = [p for p in pots if v not in p.scope]
        if v not in continuous:
            cv = set().union(*(p.cvars for p in bucket))
            grew = True
            while cv and grew:
                grew = False
                for p in list(rest):
                    if set(p.cvars) & cv:
                        bucket.append(p)
                        rest.remove(p)
                        cv |= set(p.cvars)
                        grew = True
        prod = multiply_all(bucket)
        rest.append(marginalize(prod, [v]))
        pots = rest
    return multiply_all(pots)


# -- filtering ---------------------------------------------------------------------------

@dataclass
class BeliefState:
    """Filtered belief at slice ``t``.

    ``marginals`` maps unobserved state variables to a probability vector or a
    :class:`GaussianMixture`; ``interface`` holds the potential(s) passed to
    slice ``t + 1`` (current-slice ids); ``collapsed`` flags a lossy weak
    marginal in this step.
    """

    t: int
    marginals: dict
    interface: list[HybridPotential]
    collapsed: bool = False
    log_likelihood: float = 0.0
    info: dict = field(default_factory=dict)


def slice_factors(dmn: DynamicMixedNetwork, t: int, observations: Sequence[Mapping[int, float]],
                  interface: Sequence[HybridPotential] = ()) -> list[HybridPotential]:
    """Potentials of slice ``t``: prior (t=0) or incoming interface + transition, with evidence."""
    obs_t = dict(observations[t]) if t < len(observations) else {}
    if t == 0:
        return network_potentials(dmn.prior, obs_t)
    prev_obs = dict(observations[t - 1]) if t - 1 < len(observations) else {}
    ev = dict(obs_t)
    ev.update({dmn.previous[v]: x for v, x in prev_obs.items()})
    pots = network_potentials(dmn.transition, ev)
    prev = dmn.previous
    return [rename(p, prev) for p in interface] + pots


def forward_interface(dmn: DynamicMixedNetwork, observed: Iterable[int]) -> list[int]:
    observed = set(observed)
    return [v for v in dmn.interface if v not in observed]


def _slice_targets(dmn, pots, obs_t, t):
    """State variables of the current slice that need a marginal."""
    present = set()
    for p in pots:
        present.update(p.scope)
    return [v for v in dmn.state_ids if v not in obs_t and v in present]


def exact_filter(dmn: DynamicMixedNetwork, observations: Sequence[Mapping[int, float]],
                 T: int | None = None) -> list[BeliefState]:
    """Recursive predict/update over the joint interface potential.

    The interface keeps one Gaussian per discrete interface tuple; steps where
    summing out discrete variables had to merge differing Gaussians are
    flagged ``collapsed``.
    """
    T = len(observations) - 1 if T is None else T
    states = []
    interface: list[HybridPotential] = []
    for t in range(T + 1):
        obs_t = dict(observations[t]) if t < len(observations) else {}
        pots = slice_factors(dmn, t, observations, interface)
        fwd = forward_interface(dmn, obs_t)
        missing = [v for v in dmn.state_ids if v not in obs_t and not any(v in p.scope for p in pots)]
        if missing:
            raise ModelError(f"state variables {missing} have no potential in slice {t}")
        try:
            cal = calibrate(pots, extra_scopes=[fwd] if fwd else ())
        except InconsistentEvidenceError as exc:
            raise InconsistentEvidenceError("zero-probability observation", t=t) from exc
        targets = _slice_targets(dmn, pots, obs_t, t)
        marg = {v: cal.marginal(v) for v in targets}
        if fwd:
            joint = cal.joint(fwd)
            interface = [joint]
        else:
            interface = []
        states.append(BeliefState(t, marg, list(interface), collapsed=cal.collapsed or
                                  any(p.collapsed for p in interface), log_likelihood=cal.log_z))
    return states
