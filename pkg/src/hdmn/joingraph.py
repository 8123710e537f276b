"""Elimination orders, join trees, i-bounded join graphs, slice templates and w-cutsets.

Structures here only look at function *scopes*; numeric potentials are
attached later by the inference engines.  Widths count discrete variables
only: continuous variables never consume the i-bound.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ModelError

log = logging.getLogger(__name__)


class IBoundWarning(UserWarning):
    """A cluster had to exceed the requested i-bound."""


# -- interaction graphs and orders ------------------------------------------------

def interaction_graph(scopes: Iterable[Iterable[int]], variables: Iterable[int] = ()) -> dict[int, set[int]]:
    """Undirected (moral) graph: variables sharing a function scope are adjacent."""
    adj: dict[int, set[int]] = {v: set() for v in variables}
    for s in scopes:
        s = list(s)
        for v in s:
            adj.setdefault(v, set())
        for a, b in itertools.combinations(s, 2):
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
    return adj


def _fill_count(adj, v) -> int:
    nb = list(adj[v])
    return sum(1 for a, b in itertools.combinations(nb, 2) if b not in adj[a])


def min_fill_order(adj: dict[int, set[int]], continuous: Iterable[int] = (), strong: bool = True) -> list[int]:
    """Greedy min-fill; with ``strong`` all continuous variables go first.

    Ties break on the lowest variable id.
    """
    adj = {v: set(n) for v, n in adj.items()}
    cont = set(continuous) & set(adj)
    order = []
    phases = [sorted(cont), sorted(set(adj) - cont)] if strong else [sorted(adj)]
    for phase in phases:
        remaining = set(phase)
        while remaining:
            v = min(remaining, key=lambda u: (_fill_count(adj, u), u))
            nb = adj[v]
            for a, b in itertools.combinations(nb, 2):
                adj[a].add(b)
                adj[b].add(a)
            for u in nb:
                adj[u].discard(v)
            del adj[v]
            remaining.discard(v)
            order.append(v)
    return order


def elimination_cliques(adj: dict[int, set[int]], order: Sequence[int]) -> list[frozenset[int]]:
    """Clique ``{v} + later neighbours`` formed when eliminating each variable."""
    adj = {v: set(n) for v, n in adj.items()}
    out = []
    for v in order:
        nb = adj.pop(v)
        out.append(frozenset(nb | {v}))
        for a, b in itertools.combinations(nb, 2):
            adj[a].add(b)
            adj[b].add(a)
        for u in nb:
            adj[u].discard(v)
    return out


def induced_width(adj: dict[int, set[int]], order: Sequence[int], discrete: Iterable[int] | None = None) -> int:
    """Max (discrete) clique size along ``order`` minus one; -1 for an empty graph."""
    cliques = elimination_cliques(adj, order)
    if discrete is None:
        return max((len(c) for c in cliques), default=0) - 1
    d = set(discrete)
    return max((len(c & d) for c in cliques), default=0) - 1


def elimination_order(net, strong: bool = True) -> list[int]:
    """Min-fill order over the moral graph of a MixedNetwork."""
    adj = interaction_graph((f.scope for f in net.functions()), net.variables)
    return min_fill_order(adj, net.continuous_ids, strong=strong)


# -- join graphs ----------------------------------------------------------------------

@dataclass(frozen=True)
class Cluster:
    id: int
    variables: frozenset
    functions: tuple[int, ...]


@dataclass
class JoinGraph:
    """Clusters joined by separator-labelled edges.

    ``scopes[k]`` is the scope of function ``k``; every function is assigned
    to exactly one cluster.  ``oversized`` lists clusters allowed to exceed the
    i-bound (see :func:`build_join_graph`).
    """

    clusters: list[Cluster]
    edges: dict[tuple[int, int], frozenset]
    scopes: list[frozenset]
    discrete: frozenset
    order: tuple[int, ...]
    is_tree: bool
    i_bound: int | None = None
    oversized: frozenset = frozenset()
    _nbrs: dict = field(default=None, repr=False, compare=False)

    def neighbors(self, c: int) -> list[int]:
        if self._nbrs is None:
            nb = {cl.id: [] for cl in self.clusters}
            for a, b in self.edges:
                nb[a].append(b)
                nb[b].append(a)
            self._nbrs = {k: sorted(v) for k, v in nb.items()}
        return self._nbrs[c]

    def separator(self, a: int, b: int) -> frozenset:
        return self.edges[(a, b) if a < b else (b, a)]

    def cluster(self, cid: int) -> Cluster:
        return self.clusters[cid]

    def discrete_size(self, cid: int) -> int:
        return len(self.clusters[cid].variables & self.discrete)

    def max_discrete_size(self) -> int:
        return max((self.discrete_size(c.id) for c in self.clusters), default=0)

    def max_continuous_size(self) -> int:
        return max((len(c.variables - self.discrete) for c in self.clusters), default=0)

    @property
    def variables(self) -> frozenset:
        out = frozenset()
        for c in self.clusters:
            out |= c.variables
        return out

    def clusters_with(self, v: int) -> list[int]:
        return [c.id for c in self.clusters if v in c.variables]

    def home(self, vars_: Iterable[int]) -> int | None:
        """Smallest cluster containing all of ``vars_`` (lowest id on ties)."""
        s = set(vars_)
        best = None
        for c in self.clusters:
            if s <= c.variables and (best is None or len(c.variables) < len(self.clusters[best].variables)):
                best = c.id
        return best

    def check(self) -> None:
        """Raise ModelError if a structural invariant fails."""
        ids = [c.id for c in self.clusters]
        if ids != list(range(len(ids))):
            raise ModelError("cluster ids must be 0..n-1")
        seen = [0] * len(self.scopes)
        for c in self.clusters:
            for f in c.functions:
                seen[f] += 1
                if not self.scopes[f] <= c.variables:
                    raise ModelError(f"function {f} assigned to cluster {c.id} not covering its scope")
        if any(k != 1 for k in seen):
            raise ModelError("every function must be assigned exactly once")
        for (a, b), sep in self.edges.items():
            if not sep <= (self.clusters[a].variables & self.clusters[b].variables):
                raise ModelError(f"separator of edge {(a, b)} not within both clusters")
        for v in self.variables:
            holders = set(self.clusters_with(v))
            start = min(holders)
            stack, reached = [start], {start}
            while stack:
                c = stack.pop()
                for d in self.neighbors(c):
                    if d in holders and d not in reached and v in self.separator(c, d):
                        reached.add(d)
                        stack.append(d)
            if reached != holders:
                raise ModelError(f"clusters containing variable {v} are not connected")
        if self.is_tree:
            if len(self.edges) != len(self.clusters) - 1:
                raise ModelError("tree must have n-1 edges")
            for (a, b), sep in self.edges.items():
                if sep != self.clusters[a].variables & self.clusters[b].variables:
                    raise ModelError("join-tree separators must equal cluster intersections")
        if self.i_bound is not None:
            for c in self.clusters:
                if c.id not in self.oversized and self.discrete_size(c.id) > self.i_bound + 1:
                    raise ModelError(f"cluster {c.id} exceeds i-bound {self.i_bound}")

    def to_dot(self, names=None) -> str:
        """Graphviz text: nodes list their variables, edges their separators."""
        nm = (lambda v: str(v)) if names is None else (lambda v: names.get(v, str(v)))
        lines = ["graph joingraph {"]
        for c in self.clusters:
            label = ",".join(nm(v) for v in sorted(c.variables))
            lines.append(f'  c{c.id} [label="{c.id}: {label}"];')
        for (a, b), sep in sorted(self.edges.items()):
            label = ",".join(nm(v) for v in sorted(sep))
            lines.append(f'  c{a} -- c{b} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)


def _earliest(scope, pos):
    return min(scope, key=lambda v: pos[v])


def _connect_components(n_clusters: int, edges: dict) -> None:
    """Join disconnected pieces with empty separators (keeps a forest a tree)."""
    parent = list(range(n_clusters))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    roots = sorted({find(c) for c in range(n_clusters)})
    for r1, r2 in zip(roots, roots[1:]):
        a, b = sorted((r1, r2))
        edges[(a, b)] = frozenset()
        parent[find(r1)] = find(r2)


def join_tree_from_scopes(scopes: Sequence[Iterable[int]], discrete: Iterable[int], order: Sequence[int],
                          merge: bool = True) -> JoinGraph:
    """Bucket-tree clustering of the given function scopes along ``order``."""
    scopes = [frozenset(s) for s in scopes]
    order = tuple(order)
    pos = {v: k for k, v in enumerate(order)}
    allv = set().union(*scopes) if scopes else set()
    if not allv <= set(order) or len(pos) != len(order):
        raise ModelError("order must be a permutation covering every variable")
    bucket_funcs: dict[int, list[int]] = {v: [] for v in order}
    loose = []
    for k, s in enumerate(scopes):
        if s:
            bucket_funcs[_earliest(s, pos)].append(k)
        else:
            loose.append(k)
    bucket_msgs: dict[int, list[tuple[frozenset, int]]] = {v: [] for v in order}
    vars_of, funcs_of, edges = [], [], {}
    for v in order:
        cid = len(vars_of)
        cv = {v}
        for f in bucket_funcs[v]:
            cv |= scopes[f]
        for s, sender in bucket_msgs[v]:
            cv |= s
            edges[(sender, cid)] = s
        vars_of.append(frozenset(cv))
        funcs_of.append(list(bucket_funcs[v]))
        msg = frozenset(cv - {v})
        if msg:
            bucket_msgs[_earliest(msg, pos)].append((msg, cid))
    if not vars_of:
        vars_of.append(frozenset())
        funcs_of.append([])
    funcs_of[-1].extend(loose)
    _connect_components(len(vars_of), edges)
    if merge:
        vars_of, funcs_of, edges = _merge_subsumed(vars_of, funcs_of, edges)
    clusters = [Cluster(k, vars_of[k], tuple(sorted(funcs_of[k]))) for k in range(len(vars_of))]
    edges = {(min(a, b), max(a, b)): frozenset(vars_of[a] & vars_of[b]) for (a, b) in edges}
    jt = JoinGraph(clusters, edges, scopes, frozenset(discrete), order, True)
    return jt


def _merge_subsumed(vars_of, funcs_of, edges):
    """Absorb clusters whose variables are a subset of a neighbour's."""
    vars_of = list(vars_of)
    funcs_of = [list(f) for f in funcs_of]
    adj = {k: set() for k in range(len(vars_of))}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    alive = set(adj)
    changed = True
    while changed:
        changed = False
        for c in sorted(alive):
            target = None
            for d in sorted(adj[c]):
                if vars_of[c] <= vars_of[d]:
                    target = d
                    break
            if target is None:
                continue
            funcs_of[target].extend(funcs_of[c])
            for d in adj[c]:
                adj[d].discard(c)
                if d != target:
                    adj[d].add(target)
                    adj[target].add(d)
            alive.discard(c)
            del adj[c]
            changed = True
            break
    keep = sorted(alive)
    remap = {old: new for new, old in enumerate(keep)}
    new_edges = {}
    for a in keep:
        for b in adj[a]:
            if a < b:
                new_edges[(remap[a], remap[b])] = frozenset()
    return [vars_of[k] for k in keep], [sorted(funcs_of[k]) for k in keep], new_edges


def build_join_tree(net, order: Sequence[int] | None = None) -> JoinGraph:
    """Join tree of a MixedNetwork: each CPD and constraint lands in one cluster."""
    funcs = net.functions()
    if order is None:
        order = elimination_order(net)
    order = list(order)
    if sorted(order) != sorted(net.variables):
        raise ModelError("order must be a permutation of the network variables")
    return join_tree_from_scopes([f.scope for f in funcs], net.discrete_ids, order)


def build_join_graph(jt: JoinGraph, i: int) -> JoinGraph:
    """i-bounded join graph by mini-bucket partitioning along ``jt.order``.

    Returns ``jt`` itself when every cluster already holds at most ``i + 1``
    discrete variables.  A function whose own discrete scope exceeds the bound
    gets a dedicated cluster, and the bucket of a continuous variable is never
    split (its functions must be integrated together); both cases are listed
    in ``oversized`` and reported with an :class:`IBoundWarning`.
    """
    if i < 1:
        raise ValueError("i-bound must be >= 1")
    if not jt.is_tree:
        raise ValueError("build_join_graph expects a join tree")
    if jt.max_discrete_size() <= i + 1:
        return jt
    return mini_bucket_graph(jt.scopes, jt.discrete, jt.order, i)


def mini_bucket_graph(scopes: Sequence[frozenset], discrete: Iterable[int], order: Sequence[int], i: int) -> JoinGraph:
    scopes = [frozenset(s) for s in scopes]
    discrete = frozenset(discrete)
    order = tuple(order)
    pos = {v: k for k, v in enumerate(order)}
    cap = i + 1

    def dsize(s):
        return len(s & discrete)

    buckets: dict[int, list[tuple[frozenset, str, int]]] = {v: [] for v in order}
    loose = []
    for k, s in enumerate(scopes):
        if s:
            buckets[_earliest(s, pos)].append((s, "f", k))
        else:
            loose.append(k)
    vars_of, funcs_of, edges = [], [], {}
    oversized = set()
    for v in order:
        items = buckets[v]
        union = frozenset({v}).union(*(s for s, _, _ in items))
        if v not in discrete or dsize(union) <= cap:
            parts = [list(items)]
            if dsize(union) > cap:
                oversized.add(len(vars_of))
        else:
            parts = []
            part_scopes = []
            for item in sorted(items, key=lambda it: (-dsize(it[0]), it[1], it[2])):
                s = item[0] | {v}
                for k, ps in enumerate(part_scopes):
                    if dsize(ps | s) <= cap:
                        parts[k].append(item)
                        part_scopes[k] = ps | s
                        break
                else:
                    if dsize(s) > cap:
                        oversized.add(len(vars_of) + len(parts))
                    parts.append([item])
                    part_scopes.append(s)
        if not parts:
            parts = [[]]
        ids = []
        for part in parts:
            cid = len(vars_of)
            cv = frozenset({v}).union(*(s for s, _, _ in part))
            vars_of.append(cv)
            funcs_of.append([k for s, kind, k in part if kind == "f"])
            for s, kind, sender in part:
                if kind == "m":
                    key = (min(sender, cid), max(sender, cid))
                    edges[key] = edges.get(key, frozenset()) | s
            msg = cv - {v}
            if msg:
                buckets[_earliest(msg, pos)].append((msg, "m", cid))
            ids.append(cid)
        for a, b in zip(ids, ids[1:]):
            edges[(a, b)] = edges.get((a, b), frozenset()) | {v}
    if not vars_of:
        vars_of.append(frozenset())
        funcs_of.append([])
    funcs_of[-1].extend(loose)
    _connect_components(len(vars_of), edges)
    clusters = [Cluster(k, vars_of[k], tuple(sorted(funcs_of[k]))) for k in range(len(vars_of))]
    # acyclic with full-intersection separators is a genuine join tree
    is_tree = len(edges) == len(clusters) - 1 and all(
        sep == clusters[a].variables & clusters[b].variables for (a, b), sep in edges.items())
    if oversized:
        msg = (f"{len(oversized)} cluster(s) exceed i-bound {i} "
               f"(function scopes or continuous buckets larger than {cap} discrete variables)")
        warnings.warn(msg, IBoundWarning, stacklevel=3)
    return JoinGraph(clusters, edges, scopes, discrete, order, is_tree, i_bound=i, oversized=frozenset(oversized))


# -- w-cutset ---------------------------------------------------------------------------

def select_w_cutset_scopes(scopes: Sequence[Iterable[int]], discrete: Iterable[int], w: int,
                           candidates: Iterable[int] | None = None, continuous: Iterable[int] = (),
                           coupled=None) -> set[int]:
    """Greedy w-cutset over an interaction graph given by function scopes.

    ``coupled(R)`` may return extra scopes that depend on the current cutset
    (used for slice interfaces); they are added before measuring width.
    """
    if w < 0:
        raise ValueError("w must be >= 0")
    discrete = set(discrete)
    scopes = [frozenset(s) for s in scopes]
    cand = set(discrete if candidates is None else candidates) & discrete
    continuous = set(continuous)
    R: set[int] = set()
    while True:
        extra = list(coupled(R)) if coupled is not None else []
        live = [s - R for s in scopes + [frozenset(e) for e in extra]]
        allv = set().union(*live) if live else set()
        allv |= (discrete | continuous) - R
        adj = interaction_graph(live, allv)
        order = min_fill_order(adj, continuous & allv)
        cliques = elimination_cliques(adj, order)
        over = [c for c in cliques if len(c & discrete) > w + 1]
        if not over:
            return R
        counts = {v: sum(1 for c in over if v in c) for v in cand - R}
        counts = {v: k for v, k in counts.items() if k > 0}
        if not counts:
            return R  # nothing left to remove among the candidates
        best = min(counts, key=lambda v: (-counts[v], -len(adj.get(v, ())), v))
        R.add(best)


def select_w_cutset(net, w: int) -> tuple[set[int], set[int]]:
    """(R, Z): discrete cutset R whose removal leaves discrete width <= w; Z is the rest."""
    R = select_w_cutset_scopes([f.scope for f in net.functions()], net.discrete_ids, w,
                               continuous=net.continuous_ids)
    return R, set(net.variables) - R


def conditioned_width(net, R: Iterable[int]) -> int:
    """Discrete induced width of the network after removing ``R`` (strong min-fill)."""
    R = set(R)
    scopes = [frozenset(f.scope) - R for f in net.functions()]
    adj = interaction_graph(scopes, set(net.variables) - R)
    order = min_fill_order(adj, set(net.continuous_ids) - R)
    return induced_width(adj, order, set(net.discrete_ids) - R)


# -- slice templates ---------------------------------------------------------------------

def split_interface(interface: Sequence[int], scopes: Sequence[Iterable[int]], discrete: Iterable[int],
                    i: int) -> list[tuple[int, ...]]:
    """Partition interface variables into disjoint groups of at most ``i + 1`` discrete ones.

    Variables are packed greedily by how many function scopes they share;
    continuous ones join the group they share most scopes with.
    """
    discrete = set(discrete)
    scopes = [set(s) for s in scopes]

    def affinity(v, group):
        return sum(1 for s in scopes if v in s and s & set(group))

    dv = [v for v in interface if v in discrete]
    cv = [v for v in interface if v not in discrete]
    groups: list[list[int]] = []
    for v in sorted(dv):
        best, best_aff = None, 0
        for k, gr in enumerate(groups):
            if len(gr) >= i + 1:
                continue
            a = affinity(v, gr)
            if a > best_aff:
                best, best_aff = k, a
        if best is None:
            groups.append([v])
        else:
            groups[best].append(v)
    if not groups and cv:
        groups.append([])
    for v in sorted(cv):
        k = max(range(len(groups)), key=lambda k: (affinity(v, groups[k]), -k))
        groups[k].append(v)
    return [tuple(g) for g in groups]


@dataclass
class SlicedJoinGraph:
    """Reusable per-slice join graph for sequential propagation.

    Function slots in ``graph.scopes`` are laid out as: one incoming
    interface potential per group (previous-slice ids), then the slice's
    transition functions (``transition_slots``), then one identity
    placeholder per outgoing group (current-slice ids).
    """

    graph: JoinGraph
    groups: list[tuple[int, ...]]
    prev_groups: list[tuple[int, ...]]
    backward: list[int]
    forward: list[int]
    transition_slots: list[int]
    i_bound: int
    i_cap: int
    observed: frozenset

    def instantiate(self, t: int) -> JoinGraph:
        # structure is slice-invariant; potentials are attached by the caller
        return self.graph


def slice_scopes(dmn, observed: Iterable[int] = ()) -> tuple[list[frozenset], frozenset, frozenset]:
    """Scopes of the transition functions with observed variables (both slices) removed."""
    observed = set(observed)
    gone = observed | {dmn.previous[v] for v in observed}
    trans = dmn.transition
    scopes = [frozenset(f.scope) - gone for f in trans.functions()]
    discrete = frozenset(v for v in trans.discrete_ids if v not in gone)
    continuous = frozenset(v for v in trans.continuous_ids if v not in gone)
    return scopes, discrete, continuous


def paste_interfaces(dmn, i: int, observed: Iterable[int] = ()) -> SlicedJoinGraph:
    """Build the slice join graph once; interfaces are split into groups of <= i+1 discrete vars.

    ``i`` is clamped (with a warning) to the slice-plus-interface treewidth.
    """
    if i < 1:
        raise ValueError("i-bound must be >= 1")
    observed = frozenset(observed)
    scopes, discrete, continuous = slice_scopes(dmn, observed)
    fwd = [v for v in dmn.interface if v not in observed]
    prev = dmn.previous

    def layout(groups):
        pg = [tuple(prev[v] for v in g) for g in groups]
        all_scopes = [frozenset(g) for g in pg] + scopes + [frozenset(g) for g in groups]
        allv = set().union(*all_scopes) if all_scopes else set()
        allv |= set(discrete) | set(continuous)
        adj = interaction_graph(all_scopes, allv)
        order = min_fill_order(adj, continuous & allv)
        return pg, all_scopes, order

    full = [tuple(fwd)] if fwd else []
    _, full_scopes, full_order = layout(full)
    jt_full = join_tree_from_scopes(full_scopes, discrete, full_order)
    cap = max(1, jt_full.max_discrete_size() - 1)
    if i > cap:
        warnings.warn(f"i-bound {i} exceeds the slice/interface treewidth {cap}; clamped", IBoundWarning, stacklevel=2)
        i = cap
    groups = split_interface(fwd, scopes, discrete, i) if fwd else []
    pg, all_scopes, order = layout(groups)
    jt = join_tree_from_scopes(all_scopes, discrete, order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IBoundWarning)
        jg = build_join_graph(jt, i)
    ng = len(groups)
    owner = {}
    for c in jg.clusters:
        for f in c.functions:
            owner[f] = c.id
    backward = [owner[k] for k in range(ng)]
    forward = [owner[len(all_scopes) - ng + k] for k in range(ng)]
    covered = set()
    for k, g in enumerate(groups):
        if not set(g) <= jg.clusters[forward[k]].variables:
            raise ModelError(f"interface group {g} not covered by any cluster")
        covered |= set(g)
    if covered != set(fwd):
        raise ModelError("interface variables not covered by the slice join graph")
    slots = list(range(ng, ng + len(scopes)))
    return SlicedJoinGraph(jg, groups, pg, backward, forward, slots, i, cap, observed)
