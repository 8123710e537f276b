"""Variables, CPDs, constraint relations and (dynamic) hybrid mixed networks.

A :class:`MixedNetwork` pairs a conditional linear Gaussian Bayesian network
with a set of hard constraints over its discrete variables.  The network
denotes the CLG joint restricted to the constraint solutions and
renormalised.  A :class:`DynamicMixedNetwork` is a prior network over one
slice plus a two-slice transition network whose previous-slice copies are
CPD-free roots.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ModelError

SUM_TOL = 1e-9


@dataclass(frozen=True)
class Variable:
    """A discrete (``domain_size`` set) or continuous (``domain_size is None``) variable."""

    id: int
    name: str
    domain_size: int | None = None
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.domain_size is not None:
            if self.domain_size < 1:
                raise ModelError(f"variable {self.name!r}: domain_size must be >= 1")
            if not self.labels:
                object.__setattr__(self, "labels", tuple(str(k) for k in range(self.domain_size)))
            elif len(self.labels) != self.domain_size:
                raise ModelError(f"variable {self.name!r}: {len(self.labels)} labels for domain {self.domain_size}")

    @property
    def is_discrete(self) -> bool:
        return self.domain_size is not None

    @classmethod
    def discrete(cls, id: int, name: str, size: int, labels: Sequence[str] = ()) -> "Variable":
        return cls(id, name, int(size), tuple(labels))

    @classmethod
    def continuous(cls, id: int, name: str) -> "Variable":
        return cls(id, name, None)


@dataclass(frozen=True, eq=False)
class DiscreteCPD:
    """P(child | parents) as a dense table of shape ``parent cards + (child card,)``."""

    child: int
    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        t = np.asarray(self.table, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        if t.ndim != len(self.parents) + 1:
            raise ModelError(f"CPD of {self.child}: table rank {t.ndim} != {len(self.parents) + 1}")
        if np.any(t < 0) or np.any(t > 1 + SUM_TOL):
            raise ModelError(f"CPD of {self.child}: entries outside [0, 1]")
        if not np.allclose(t.sum(axis=-1), 1.0, atol=SUM_TOL, rtol=0):
            raise ModelError(f"CPD of {self.child}: rows do not sum to 1")

    @property
    def scope(self) -> tuple[int, ...]:
        return self.parents + (self.child,)

    def relabel(self, mapping: Mapping[int, int]) -> "DiscreteCPD":
        return DiscreteCPD(mapping[self.child], tuple(mapping[p] for p in self.parents), self.table)


@dataclass(frozen=True, eq=False)
class LinearGaussianCPD:
    """x | I=i, Z=z ~ N(intercept[i] + coefficients[i] . z, variance[i]).

    Arrays are indexed by the discrete parent configuration first, so
    ``intercept`` has shape ``dcards``, ``coefficients`` ``dcards + (|Z|,)``
    and ``variance`` ``dcards``.
    """

    child: int
    discrete_parents: tuple[int, ...]
    continuous_parents: tuple[int, ...]
    intercept: np.ndarray
    coefficients: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "discrete_parents", tuple(self.discrete_parents))
        object.__setattr__(self, "continuous_parents", tuple(self.continuous_parents))
        a = np.asarray(self.intercept, dtype=float)
        b = np.asarray(self.coefficients, dtype=float)
        v = np.asarray(self.variance, dtype=float)
        nd, nz = len(self.discrete_parents), len(self.continuous_parents)
        if b.ndim == a.ndim and nz == 0:
            b = b[..., None][..., :0]
        if a.ndim != nd or v.shape != a.shape:
            raise ModelError(f"linear-Gaussian CPD of {self.child}: intercept/variance shape mismatch")
        if b.shape != a.shape + (nz,):
            raise ModelError(f"linear-Gaussian CPD of {self.child}: coefficients need shape {a.shape + (nz,)}")
        if np.any(v <= 0):
            raise ModelError(f"linear-Gaussian CPD of {self.child}: variances must be > 0")
        for arr, name in ((a, "intercept"), (b, "coefficients"), (v, "variance")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def scope(self) -> tuple[int, ...]:
        return self.discrete_parents + self.continuous_parents + (self.child,)

    @property
    def parents(self) -> tuple[int, ...]:
        return self.discrete_parents + self.continuous_parents

    def relabel(self, mapping: Mapping[int, int]) -> "LinearGaussianCPD":
        return LinearGaussianCPD(
            mapping[self.child],
            tuple(mapping[p] for p in self.discrete_parents),
            tuple(mapping[p] for p in self.continuous_parents),
            self.intercept,
            self.coefficients,
            self.variance,
        )


@dataclass(frozen=True, eq=False)
class ConstraintRelation:
    """Hard constraint: the set of allowed value tuples over ``scope``."""

    scope: tuple[int, ...]
    allowed: frozenset
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        allowed = frozenset(tuple(int(x) for x in t) for t in self.allowed)
        for t in allowed:
            if len(t) != len(self.scope):
                raise ModelError(f"constraint {self.name or self.scope}: tuple {t} has wrong arity")
        object.__setattr__(self, "allowed", allowed)
        if len(set(self.scope)) != len(self.scope):
            raise ModelError(f"constraint {self.name or self.scope}: repeated variable in scope")

    def tuples(self) -> list[tuple[int, ...]]:
        return sorted(self.allowed)

    def mask(self, cards: Sequence[int]) -> np.ndarray:
        """Dense boolean table of allowed tuples."""
        m = np.zeros(tuple(cards), dtype=bool)
        if self.allowed:
            idx = np.array(sorted(self.allowed), dtype=np.intp).T
            m[tuple(idx)] = True
        return m

    def check_domains(self, cards: Sequence[int]) -> None:
        for t in self.allowed:
            if any(not 0 <= x < c for x, c in zip(t, cards)):
                raise ModelError(f"constraint {self.name or self.scope}: value out of domain in {t}")

    def relabel(self, mapping: Mapping[int, int]) -> "ConstraintRelation":
        return ConstraintRelation(tuple(mapping[v] for v in self.scope), self.allowed, self.name)

    @classmethod
    def from_predicate(cls, scope, cards, predicate, name=""):
        """Relation of all tuples over ``scope`` for which ``predicate(*values)`` holds."""
        allowed = [t for t in itertools.product(*(range(c) for c in cards)) if predicate(*t)]
        return cls(tuple(scope), frozenset(allowed), name)


def relation_join(r1: ConstraintRelation, r2: ConstraintRelation) -> ConstraintRelation:
    """Natural join: tuples over the union scope agreeing on shared variables."""
    scope = r1.scope + tuple(v for v in r2.scope if v not in r1.scope)
    shared = [v for v in r2.scope if v in r1.scope]
    pos1 = [r1.scope.index(v) for v in shared]
    pos2 = [r2.scope.index(v) for v in shared]
    extra2 = [i for i, v in enumerate(r2.scope) if v not in r1.scope]
    index: dict[tuple, list[tuple]] = {}
    for t in r2.allowed:
        index.setdefault(tuple(t[i] for i in pos2), []).append(t)
    out = set()
    for t in r1.allowed:
        for u in index.get(tuple(t[i] for i in pos1), ()):
            out.add(t + tuple(u[i] for i in extra2))
    return ConstraintRelation(scope, frozenset(out))


def relation_project(r: ConstraintRelation, onto: Iterable[int]) -> ConstraintRelation:
    """Projection onto ``onto`` (kept in the relation's own scope order)."""
    onto = set(onto)
    keep = [i for i, v in enumerate(r.scope) if v in onto]
    return ConstraintRelation(tuple(r.scope[i] for i in keep), frozenset(tuple(t[i] for i in keep) for t in r.allowed))


CPD = DiscreteCPD | LinearGaussianCPD


class MixedNetwork:
    """A hybrid mixed network: CLG Bayesian network plus discrete constraints.

    ``cpds`` may omit variables listed in ``roots_without_cpd`` (used for the
    previous-slice copies of a transition network).
    """

    def __init__(self, variables: Iterable[Variable], cpds: Iterable[CPD], constraints: Iterable[ConstraintRelation] = (),
                 roots_without_cpd: Iterable[int] = ()):
        self.variables: dict[int, Variable] = {}
        names = set()
        for v in variables:
            if v.id in self.variables:
                raise ModelError(f"duplicate variable id {v.id}")
            if v.name in names:
                raise ModelError(f"duplicate variable name {v.name!r}")
            self.variables[v.id] = v
            names.add(v.name)
        self.cpds: dict[int, CPD] = {}
        for c in cpds:
            if c.child in self.cpds:
                raise ModelError(f"variable {self.name(c.child)!r} has more than one CPD")
            self.cpds[c.child] = c
        self.constraints: list[ConstraintRelation] = list(constraints)
        self.roots_without_cpd = frozenset(roots_without_cpd)
        self._validate()

    # -- lookups -------------------------------------------------------------
    def name(self, vid: int) -> str:
        v = self.variables.get(vid)
        return v.name if v else str(vid)

    def by_name(self, name: str) -> Variable:
        for v in self.variables.values():
            if v.name == name:
                return v
        raise KeyError(name)

    def card(self, vid: int) -> int | None:
        return self.variables[vid].domain_size

    def is_discrete(self, vid: int) -> bool:
        return self.variables[vid].is_discrete

    @property
    def discrete_ids(self) -> list[int]:
        return sorted(v for v, var in self.variables.items() if var.is_discrete)

    @property
    def continuous_ids(self) -> list[int]:
        return sorted(v for v, var in self.variables.items() if not var.is_discrete)

    def parents(self, vid: int) -> tuple[int, ...]:
        c = self.cpds.get(vid)
        return c.parents if c is not None else ()

    def children(self, vid: int) -> list[int]:
        return sorted(c for c, cpd in self.cpds.items() if vid in cpd.parents)

    def functions(self) -> list:
        """All CPDs (in variable-id order) followed by all constraints."""
        return [self.cpds[v] for v in sorted(self.cpds)] + list(self.constraints)

    def topological_order(self) -> list[int]:
        indeg = {v: len(self.parents(v)) for v in self.variables}
        kids: dict[int, list[int]] = {v: [] for v in self.variables}
        for v in self.variables:
            for p in self.parents(v):
                kids[p].append(v)
        ready = sorted(v for v, d in indeg.items() if d == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for k in sorted(kids[v]):
                indeg[k] -= 1
                if indeg[k] == 0:
                    ready.append(k)
            ready.sort()
        if len(order) != len(self.variables):
            raise ModelError("network graph contains a directed cycle")
        return order

    # -- validation ----------------------------------------------------------
    def _validate(self):
        for vid, var in self.variables.items():
            if vid in self.roots_without_cpd:
                if vid in self.cpds:
                    raise ModelError(f"variable {var.name!r} is declared CPD-free but has a CPD")
                continue
            if vid not in self.cpds:
                raise ModelError(f"variable {var.name!r} has no CPD")
        for child, cpd in self.cpds.items():
            if child not in self.variables:
                raise ModelError(f"CPD for undeclared variable id {child}")
            for p in cpd.parents:
                if p not in self.variables:
                    raise ModelError(f"CPD of {self.name(child)!r}: undeclared parent {p}")
            if isinstance(cpd, DiscreteCPD):
                if not self.is_discrete(child):
                    raise ModelError(f"tabular CPD attached to continuous variable {self.name(child)!r}")
                for p in cpd.parents:
                    if not self.is_discrete(p):
                        raise ModelError(
                            f"discrete variable {self.name(child)!r} has continuous parent {self.name(p)!r}")
                want = tuple(self.card(p) for p in cpd.scope)
                if cpd.table.shape != want:
                    raise ModelError(f"CPD of {self.name(child)!r}: table shape {cpd.table.shape} != {want}")
            else:
                if self.is_discrete(child):
                    raise ModelError(f"linear-Gaussian CPD attached to discrete variable {self.name(child)!r}")
                for p in cpd.discrete_parents:
                    if not self.is_discrete(p):
                        raise ModelError(f"CPD of {self.name(child)!r}: {self.name(p)!r} listed as discrete parent")
                for p in cpd.continuous_parents:
                    if self.is_discrete(p):
                        raise ModelError(f"CPD of {self.name(child)!r}: {self.name(p)!r} listed as continuous parent")
                want = tuple(self.card(p) for p in cpd.discrete_parents)
                if cpd.intercept.shape != want:
                    raise ModelError(f"CPD of {self.name(child)!r}: parameter shape {cpd.intercept.shape} != {want}")
        for c in self.constraints:
            for v in c.scope:
                if v not in self.variables:
                    raise ModelError(f"constraint {c.name or c.scope}: undeclared variable {v}")
                if not self.is_discrete(v):
                    raise ModelError(f"constraint {c.name or c.scope}: {self.name(v)!r} is continuous")
            c.check_domains([self.card(v) for v in c.scope])
        self.topological_order()

    def __repr__(self):
        return (f"MixedNetwork({len(self.variables)} variables, {len(self.cpds)} CPDs, "
                f"{len(self.constraints)} constraints)")


@dataclass
class DynamicMixedNetwork:
    """Prior slice network plus a two-slice transition network.

    ``previous`` maps every current-slice variable id to the id of its
    previous-slice copy inside ``transition``.  The prior network is over the
    current-slice ids.
    """

    prior: MixedNetwork
    transition: MixedNetwork
    previous: dict[int, int]
    name: str = ""
    interface: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        state = set(self.previous)
        if set(self.prior.variables) != state:
            raise ModelError("prior network must contain exactly the state variables")
        prev_ids = set(self.previous.values())
        if len(prev_ids) != len(state) or prev_ids & state:
            raise ModelError("previous-slice copies must be distinct from the state variables")
        if set(self.transition.variables) != state | prev_ids:
            raise ModelError("transition network must contain the state variables and their previous copies")
        for cur, prev in self.previous.items():
            a, b = self.transition.variables[cur], self.transition.variables[prev]
            if a.domain_size != b.domain_size or self.prior.variables[cur].domain_size != a.domain_size:
                raise ModelError(f"slice copies of {a.name!r} disagree on kind/domain")
            if prev in self.transition.cpds:
                raise ModelError(f"previous-slice variable {b.name!r} must be a CPD-free root")
            if cur not in self.transition.cpds:
                raise ModelError(f"state variable {a.name!r} has no transition CPD")
        used = set()
        for cpd in self.transition.cpds.values():
            used.update(cpd.parents)
        for c in self.transition.constraints:
            used.update(c.scope)
        self.interface = tuple(sorted(cur for cur, prev in self.previous.items() if prev in used))

    @property
    def state_ids(self) -> list[int]:
        return sorted(self.previous)

    @property
    def current_of(self) -> dict[int, int]:
        return {p: c for c, p in self.previous.items()}

    def variable(self, vid: int) -> Variable:
        return self.transition.variables[vid]

    def unrolled_id(self, t: int, vid: int) -> int:
        """Id of state variable ``vid`` at slice ``t`` inside :func:`unroll` output."""
        ids = self.state_ids
        return t * len(ids) + ids.index(vid)


def unroll(dmn: DynamicMixedNetwork, T: int) -> MixedNetwork:
    """Static network over slices 0..T (prior at 0, one transition copy per t>=1)."""
    if T < 1:
        raise ModelError("unroll needs T >= 1")
    ids = dmn.state_ids
    n = len(ids)
    variables, cpds, constraints = [], [], []
    for t in range(T + 1):
        for k, vid in enumerate(ids):
            v = dmn.prior.variables[vid]
            variables.append(Variable(t * n + k, f"{v.name}[{t}]", v.domain_size, v.labels))
    m0 = {vid: k for k, vid in enumerate(ids)}
    cpds.extend(c.relabel(m0) for c in dmn.prior.functions() if not isinstance(c, ConstraintRelation))
    constraints.extend(c.relabel(m0) for c in dmn.prior.constraints)
    for t in range(1, T + 1):
        m = {vid: t * n + k for k, vid in enumerate(ids)}
        m.update({dmn.previous[vid]: (t - 1) * n + k for k, vid in enumerate(ids)})
        cpds.extend(dmn.transition.cpds[v].relabel(m) for v in sorted(dmn.transition.cpds))
        constraints.extend(c.relabel(m) for c in dmn.transition.constraints)
    return MixedNetwork(variables, cpds, constraints)
