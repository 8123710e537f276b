"""Random hybrid mixed networks, HMMs and dynamic networks for testing and benchmarks."""

from __future__ import annotations

import numpy as np

from .network import (
    ConstraintRelation,
    DiscreteCPD,
    DynamicMixedNetwork,
    LinearGaussianCPD,
    MixedNetwork,
    Variable,
)


def _random_table(rng, parent_cards, card, alpha=1.0, zero_prob=0.0):
    t = rng.dirichlet(np.full(card, alpha), size=int(np.prod(parent_cards, dtype=int)))
    if zero_prob > 0:
        kill = rng.random(t.shape) < zero_prob
        # keep at least one entry per row
        kill[np.arange(t.shape[0]), t.argmax(axis=1)] = False
        t = np.where(kill, 0.0, t)
        t /= t.sum(axis=1, keepdims=True)
    return t.reshape(tuple(parent_cards) + (card,))


def _random_lg(rng, child, dparents, dcards, cparents, coef_scale=1.0):
    shape = tuple(dcards)
    return LinearGaussianCPD(
        child,
        tuple(dparents),
        tuple(cparents),
        rng.normal(0, 2, size=shape),
        rng.normal(0, coef_scale, size=shape + (len(cparents),)),
        rng.uniform(0.2, 2.0, size=shape),
    )


def _random_relation(rng, scope, cards, density, cover_first=False):
    grid = np.stack(np.meshgrid(*(np.arange(c) for c in cards), indexing="ij"), -1).reshape(-1, len(cards))
    keep = rng.random(len(grid)) < density
    keep[rng.integers(len(grid))] = True
    if cover_first:
        # every value of the first variable keeps at least one allowed tuple
        rows = len(grid) // cards[0]
        for a in range(cards[0]):
            if not keep[a * rows:(a + 1) * rows].any():
                keep[a * rows + rng.integers(rows)] = True
    return ConstraintRelation(tuple(scope), frozenset(map(tuple, grid[keep])), f"c{tuple(scope)}")


def random_hmn(rng, n_discrete=4, n_continuous=3, max_parents=2, max_card=3, n_constraints=1,
               density=0.6, zero_prob=0.0) -> MixedNetwork:
    """Random CLG network with hard constraints over its discrete variables.

    Discrete variables get ids ``0..n_discrete-1`` and only discrete parents;
    continuous variables follow and may have parents of either kind.
    """
    rng = np.random.default_rng(rng)
    variables, cpds = [], []
    cards = {}
    for v in range(n_discrete):
        cards[v] = int(rng.integers(2, max_card + 1))
        variables.append(Variable.discrete(v, f"d{v}", cards[v]))
        k = int(rng.integers(0, min(v, max_parents) + 1))
        parents = sorted(rng.choice(v, size=k, replace=False).tolist()) if k else []
        cpds.append(DiscreteCPD(v, tuple(parents), _random_table(rng, [cards[p] for p in parents], cards[v],
                                                                 zero_prob=zero_prob)))
    for j in range(n_continuous):
        v = n_discrete + j
        variables.append(Variable.continuous(v, f"y{j}"))
        nd = int(rng.integers(0, min(n_discrete, max_parents) + 1))
        nc = int(rng.integers(0, min(j, max_parents) + 1))
        dp = sorted(rng.choice(n_discrete, size=nd, replace=False).tolist()) if nd else []
        cp = sorted((n_discrete + rng.choice(j, size=nc, replace=False)).tolist()) if nc else []
        cpds.append(_random_lg(rng, v, dp, [cards[p] for p in dp], cp))
    constraints = []
    for _ in range(n_constraints if n_discrete >= 2 else 0):
        k = int(rng.integers(2, min(3, n_discrete) + 1))
        scope = sorted(rng.choice(n_discrete, size=k, replace=False).tolist())
        constraints.append(_random_relation(rng, scope, [cards[v] for v in scope], density))
    return MixedNetwork(variables, cpds, constraints)


def random_hmm(rng, n_states=3, n_obs=3, sticky=0.0) -> DynamicMixedNetwork:
    """Discrete hidden Markov model: state ``x`` (id 0), observation ``e`` (id 1)."""
    rng = np.random.default_rng(rng)
    x, e, xp, ep = 0, 1, 2, 3
    init = rng.dirichlet(np.ones(n_states))
    trans = rng.dirichlet(np.ones(n_states), size=n_states)
    if sticky:
        trans = (1 - sticky) * trans + sticky * np.eye(n_states)
    emit = rng.dirichlet(np.ones(n_obs), size=n_states)
    prior = MixedNetwork(
        [Variable.discrete(x, "x", n_states), Variable.discrete(e, "e", n_obs)],
        [DiscreteCPD(x, (), init), DiscreteCPD(e, (x,), emit)],
    )
    transition = MixedNetwork(
        [Variable.discrete(x, "x", n_states), Variable.discrete(e, "e", n_obs),
         Variable.discrete(xp, "x'", n_states), Variable.discrete(ep, "e'", n_obs)],
        [DiscreteCPD(x, (xp,), trans), DiscreteCPD(e, (x,), emit)],
        roots_without_cpd=(xp, ep),
    )
    return DynamicMixedNetwork(prior, transition, {x: xp, e: ep}, name="hmm")


def hmm_parameters(dmn: DynamicMixedNetwork):
    """(initial, transition, emission) arrays of a :func:`random_hmm` model."""
    return (np.asarray(dmn.prior.cpds[0].table), np.asarray(dmn.transition.cpds[0].table),
            np.asarray(dmn.prior.cpds[1].table))


def sample_hmm(dmn: DynamicMixedNetwork, T: int, rng):
    rng = np.random.default_rng(rng)
    init, trans, emit = hmm_parameters(dmn)
    xs, es = [], []
    x = rng.choice(len(init), p=init)
    for t in range(T + 1):
        if t:
            x = rng.choice(len(init), p=trans[x])
        xs.append(int(x))
        es.append(int(rng.choice(emit.shape[1], p=emit[x])))
    return xs, es


def random_dbn(rng, n_discrete=3, n_continuous=1, max_card=2, n_obs=1, max_parents=2,
               n_constraints=0, density=0.7, zero_prob=0.0) -> DynamicMixedNetwork:
    """Random dynamic hybrid network.

    State ids: discrete hidden ``0..n_discrete-1``, continuous hidden next,
    then ``n_obs`` observed continuous children.  Every hidden variable
    depends on its own previous copy plus a few random previous-slice or
    earlier current-slice parents.  Constraints span a previous-slice and a
    current-slice discrete variable.
    """
    rng = np.random.default_rng(rng)
    nd, nc = n_discrete, n_continuous
    n = nd + nc + n_obs
    cards = {v: int(rng.integers(2, max_card + 1)) for v in range(nd)}
    cur_vars = []
    for v in range(nd):
        cur_vars.append(Variable.discrete(v, f"d{v}", cards[v]))
    for j in range(nc):
        cur_vars.append(Variable.continuous(nd + j, f"y{j}"))
    for j in range(n_obs):
        cur_vars.append(Variable.continuous(nd + nc + j, f"o{j}"))
    prev = {v: n + v for v in range(n)}
    prev_vars = [Variable(prev[v.id], v.name + "'", v.domain_size) for v in cur_vars]

    def hidden_cpd(v, with_prev):
        ddisc = [p for p in range(v) if p < nd]
        dcont = [p for p in range(nd, v)] if v >= nd else []
        dp, cp = [], []
        if with_prev:
            if v < nd:
                dp.append(prev[v])
                extra = [prev[u] for u in range(nd) if u != v]
            else:
                cp.append(prev[v])
                extra = [prev[u] for u in range(nd)]
            if extra and rng.random() < 0.5:
                dp.append(int(rng.choice(extra)))
        pool = ddisc + (dcont if v >= nd else [])
        k = int(rng.integers(0, min(len(pool), max_parents) + 1))
        for p in rng.choice(pool, size=k, replace=False).tolist() if k else []:
            (dp if p < nd else cp).append(p)
        dp = sorted(set(dp), key=lambda u: (u % n, u))
        if v < nd:
            dcards = [cards[p % n] for p in dp]
            return DiscreteCPD(v, tuple(dp), _random_table(rng, dcards, cards[v], zero_prob=zero_prob))
        cpd = _random_lg(rng, v, dp, [cards[p % n] for p in dp], sorted(set(cp)), coef_scale=0.6)
        if with_prev:
            # keep the self-coefficient stable
            coefs = np.array(cpd.coefficients)
            k = sorted(set(cp)).index(prev[v])
            coefs[..., k] = rng.uniform(0.5, 0.95, size=coefs.shape[:-1])
            cpd = LinearGaussianCPD(v, cpd.discrete_parents, cpd.continuous_parents, cpd.intercept, coefs, cpd.variance)
        return cpd

    def obs_cpd(v):
        hidden_c = list(range(nd, nd + nc))
        dp = [int(rng.integers(nd))] if nd else []
        cp = [int(rng.choice(hidden_c))] if hidden_c else []
        return _random_lg(rng, v, dp, [cards[p] for p in dp], cp)

    prior_cpds, trans_cpds = [], []
    for v in range(nd + nc):
        prior_cpds.append(hidden_cpd(v, False))
        trans_cpds.append(hidden_cpd(v, True))
    for j in range(n_obs):
        v = nd + nc + j
        c = obs_cpd(v)
        prior_cpds.append(c)
        trans_cpds.append(c)
    constraints = []
    for _ in range(n_constraints if nd else 0):
        a, b = int(rng.integers(nd)), int(rng.integers(nd))
        scope = (prev[a], b)
        constraints.append(_random_relation(rng, scope, [cards[a], cards[b]], density, cover_first=True))
    prior = MixedNetwork(cur_vars, prior_cpds)
    transition = MixedNetwork(cur_vars + prev_vars, trans_cpds, constraints, roots_without_cpd=tuple(prev.values()))
    return DynamicMixedNetwork(prior, transition, prev, name="random-dbn")


def sample_dbn(dmn: DynamicMixedNetwork, T: int, rng, max_tries: int = 1000):
    """Forward sample (with rejection on constraints) a trajectory of full states."""
    rng = np.random.default_rng(rng)
    traj = []
    for t in range(T + 1):
        net = dmn.prior if t == 0 else dmn.transition
        for _ in range(max_tries):
            x = {} if t == 0 else {dmn.previous[v]: val for v, val in traj[-1].items()}
            for v in net.topological_order():
                if v in x:
                    continue
                x[v] = sample_cpd(net.cpds[v], x, rng)
            if all(tuple(x[u] for u in c.scope) in c.allowed for c in net.constraints):
                break
        else:
            raise RuntimeError("constraint rejection sampling did not terminate")
        traj.append({v: x[v] for v in dmn.state_ids})
    return traj


def sample_cpd(cpd, values, rng):
    if isinstance(cpd, DiscreteCPD):
        p = cpd.table[tuple(int(values[u]) for u in cpd.parents)]
        return int(rng.choice(len(p), p=p))
    key = tuple(int(values[u]) for u in cpd.discrete_parents)
    z = np.array([values[u] for u in cpd.continuous_parents], dtype=float)
    m = float(cpd.intercept[key] + cpd.coefficients[key] @ z)
    return float(rng.normal(m, np.sqrt(cpd.variance[key])))


def switching_lds(n_modes: int = 4, obs_var: float = 25.0, stay: float = 0.4, rho: float = 0.9) -> DynamicMixedNetwork:
    """Switching linear-Gaussian chain: mode ``d`` (id 0), state ``y`` (id 1), reading ``o`` (id 2).

    ``y_t = rho * y_{t-1} + mu_d + N(0, 1)`` and ``o_t = y_t + N(0, obs_var)``.
    A large ``obs_var`` keeps the posterior over mode paths diffuse.
    """
    K = n_modes
    d, y, o, dp, yp, op = 0, 1, 2, 3, 4, 5
    mu = np.linspace(-1.0, 1.0, K)
    trans = stay * np.eye(K) + (1 - stay) / K
    cur = [Variable.discrete(d, "d", K), Variable.continuous(y, "y"), Variable.continuous(o, "o")]
    prv = [Variable.discrete(dp, "d'", K), Variable.continuous(yp, "y'"), Variable.continuous(op, "o'")]
    reading = LinearGaussianCPD(o, (), (y,), 0.0, [1.0], obs_var)
    prior = MixedNetwork(cur, [DiscreteCPD(d, (), np.full(K, 1.0 / K)),
                               LinearGaussianCPD(y, (d,), (), mu, np.zeros((K, 0)), np.ones(K)), reading])
    transition = MixedNetwork(cur + prv, [DiscreteCPD(d, (dp,), trans),
                                          LinearGaussianCPD(y, (d,), (yp,), mu, np.full((K, 1), rho), np.ones(K)),
                                          reading], roots_without_cpd=(dp, yp, op))
    return DynamicMixedNetwork(prior, transition, {d: dp, y: yp, o: op}, name="switching-lds")
