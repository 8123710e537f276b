"""Text model files (format ``hdmn/1``).

Grammar, one statement per line; ``#`` starts a comment and a line that
begins with whitespace continues the previous statement::

    hdmn/1
    DYNAMICS
    dynamic [name]                  # or: static [name]
    interface x z                   # optional; checked against the transition
    VARIABLES
    discrete x 3 [label ...]
    continuous z
    CPDS
    [prior]                         # blocks: [prior]/[transition], or [network] when static
    table x | = 0.5 0.5             # parents after '|', then the table in C order
    table x | x' = 0.9 0.1
        0.2 0.8
    gaussian z | x ; z' = 0 1 1.0  2 0.5 1.0
    CONSTRAINTS
    [transition]
    allow c1 : x' x = 0 0, 1 1      # allowed tuples
    switch-rules D=2 : eq' f' f sw  # the eight goal-switching relations

Within ``gaussian`` the discrete parents come before ``;`` and continuous
parents after it; the numbers are, for every discrete configuration in C
order, the intercept, one coefficient per continuous parent, and the
variance.  In dynamic models ``v'`` names the previous-slice copy of ``v``.
Unknown sections and statements are rejected.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ModelError
from .network import (
    ConstraintRelation,
    DiscreteCPD,
    DynamicMixedNetwork,
    LinearGaussianCPD,
    MixedNetwork,
    Variable,
)

HEADER = "hdmn/1"
SECTIONS = ("DYNAMICS", "VARIABLES", "CPDS", "CONSTRAINTS")


def _statements(text: str, path):
    lines = text.splitlines()
    out = []
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line[0].isspace() and out:
            out[-1] = (out[-1][0], out[-1][1] + " " + line.strip())
        else:
            out.append((no, line.strip()))
    if not out or out[0][1] != HEADER:
        raise ModelError(f"{path}: first line must be '{HEADER}'")
    return out[1:]


def _numbers(s: str, where: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in s.replace(",", " ").split()])
    except ValueError:
        raise ModelError(f"{where}: expected numbers") from None


class _Reader:
    def __init__(self, path):
        self.path = path
        self.dynamic = False
        self.name = ""
        self.interface = None
        self.vars: list[Variable] = []
        self.ids: dict[str, int] = {}
        self.cpds = {"network": [], "prior": [], "transition": []}
        self.cons = {"network": [], "prior": [], "transition": []}

    def err(self, no, msg):
        raise ModelError(f"{self.path}:{no}: {msg}")

    def vid(self, no, name):
        if name not in self.ids:
            self.err(no, f"unknown variable {name!r}")
        return self.ids[name]

    def card(self, vid):
        n = len(self.vars)
        return self.vars[vid % n].domain_size

    def finish_variables(self):
        n = len(self.vars)
        if self.dynamic:
            for v in list(self.vars):
                self.ids[v.name + "'"] = v.id + n

    def block_ok(self, no, block):
        allowed = ("prior", "transition") if self.dynamic else ("network",)
        if block not in allowed:
            self.err(no, f"block [{block}] not valid in a {'dynamic' if self.dynamic else 'static'} model")

    def cpd(self, no, stmt, block):
        head, sep, body = stmt.partition("=")
        if not sep:
            self.err(no, "missing '=' before the numbers")
        toks = head.split()
        kind, child = toks[0], toks[1] if len(toks) > 1 else None
        if child is None or (len(toks) > 2 and toks[2] != "|"):
            self.err(no, f"expected '{kind} <child> | <parents>'")
        c = self.vid(no, child)
        nums = _numbers(body, f"{self.path}:{no}")
        parents = " ".join(toks[3:])
        if kind == "table":
            ps = [self.vid(no, p) for p in parents.split()]
            shape = tuple(self.card(p) for p in ps) + (self.card(c),)
            if any(s is None for s in shape):
                self.err(no, "table CPDs need discrete child and parents")
            if nums.size != int(np.prod(shape)):
                self.err(no, f"table needs {int(np.prod(shape))} numbers, got {nums.size}")
            return DiscreteCPD(c, tuple(ps), nums.reshape(shape))
        if kind == "gaussian":
            dpart, _, cpart = parents.partition(";")
            dp = [self.vid(no, p) for p in dpart.split()]
            cp = [self.vid(no, p) for p in cpart.split()]
            dshape = tuple(self.card(p) for p in dp)
            k = len(cp) + 2
            if nums.size != int(np.prod(dshape, dtype=int)) * k:
                self.err(no, f"gaussian needs {int(np.prod(dshape, dtype=int)) * k} numbers, got {nums.size}")
            rows = nums.reshape(dshape + (k,))
            return LinearGaussianCPD(c, tuple(dp), tuple(cp), rows[..., 0], rows[..., 1:-1], rows[..., -1])
        self.err(no, f"unknown CPD kind {kind!r}")

    def constraint(self, no, stmt):
        head, sep, body = stmt.partition("=") if stmt.startswith("allow") else (stmt, "", "")
        left, colon, scope = head.partition(":")
        if not colon:
            self.err(no, "expected ':' before the scope")
        toks = left.split()
        sc = tuple(self.vid(no, v) for v in scope.split())
        if toks[0] == "allow" and len(toks) == 2 and sep:
            tuples = []
            for part in body.split(","):
                if part.strip():
                    try:
                        tuples.append(tuple(int(x) for x in part.split()))
                    except ValueError:
                        self.err(no, "tuple entries must be integers")
            return [ConstraintRelation(sc, frozenset(tuples), toks[1])]
        if toks[0] == "switch-rules" and len(toks) == 2 and toks[1].startswith("D="):
            from .transport.model import goal_switch_constraints
            if len(sc) != 4:
                self.err(no, "switch-rules scope is: eq' f' f sw")
            return goal_switch_constraints(int(toks[1][2:]), *sc)
        self.err(no, f"unknown constraint statement {toks[0]!r}")

    def parse(self, text):
        section, block = None, None
        seen = []
        for no, stmt in _statements(text, self.path):
            if stmt.isupper() and " " not in stmt:
                if stmt not in SECTIONS:
                    self.err(no, f"unknown section {stmt!r}")
                if stmt in seen:
                    self.err(no, f"duplicate section {stmt}")
                if stmt in ("CPDS", "CONSTRAINTS") and "VARIABLES" not in seen:
                    self.err(no, f"{stmt} must follow VARIABLES")
                if stmt == "VARIABLES" and "DYNAMICS" not in seen:
                    self.err(no, "DYNAMICS must come first")
                if section == "VARIABLES":
                    self.finish_variables()
                seen.append(stmt)
                section, block = stmt, ("network" if not self.dynamic else None)
                continue
            toks = stmt.split()
            if section is None:
                self.err(no, "statement outside a section")
            if section == "DYNAMICS":
                if toks[0] in ("static", "dynamic") and len(toks) <= 2:
                    self.dynamic = toks[0] == "dynamic"
                    self.name = toks[1] if len(toks) == 2 else ""
                elif toks[0] == "interface":
                    self.interface = toks[1:]
                else:
                    self.err(no, f"unknown DYNAMICS statement {toks[0]!r}")
            elif section == "VARIABLES":
                if len(toks) < 2 or toks[1] in self.ids or toks[1].endswith("'"):
                    self.err(no, "bad or duplicate variable name")
                vid = len(self.vars)
                if toks[0] == "discrete" and len(toks) >= 3:
                    size = int(toks[2])
                    labels = tuple(toks[3:])
                    if labels and len(labels) != size:
                        self.err(no, "label count must equal the domain size")
                    self.vars.append(Variable.discrete(vid, toks[1], size, labels))
                elif toks[0] == "continuous" and len(toks) == 2:
                    self.vars.append(Variable.continuous(vid, toks[1]))
                else:
                    self.err(no, f"bad variable declaration {stmt!r}")
                self.ids[toks[1]] = vid
            else:
                if stmt.startswith("[") and stmt.endswith("]"):
                    block = stmt[1:-1]
                    self.block_ok(no, block)
                    continue
                if block is None:
                    self.err(no, "missing [prior]/[transition] block header")
                if section == "CPDS":
                    self.cpds[block].append(self.cpd(no, stmt, block))
                else:
                    self.cons[block].extend(self.constraint(no, stmt))
        if "VARIABLES" not in seen:
            raise ModelError(f"{self.path}: no VARIABLES section")
        if section == "VARIABLES":
            self.finish_variables()
        return self.build()

    def build(self):
        if not self.dynamic:
            return MixedNetwork(self.vars, self.cpds["network"], self.cons["network"])
        n = len(self.vars)
        prev_vars = [Variable(v.id + n, v.name + "'", v.domain_size, v.labels) for v in self.vars]
        for blk in ("prior", "transition"):
            for c in self.cpds[blk] + self.cons[blk]:
                scope = c.scope
                if blk == "prior" and any(u >= n for u in scope):
                    raise ModelError(f"{self.path}: prior block may not use previous-slice variables")
        prior = MixedNetwork(self.vars, self.cpds["prior"], self.cons["prior"])
        trans = MixedNetwork(self.vars + prev_vars, self.cpds["transition"], self.cons["transition"],
                             roots_without_cpd=[v.id for v in prev_vars])
        dmn = DynamicMixedNetwork(prior, trans, {v.id: v.id + n for v in self.vars}, name=self.name)
        if self.interface is not None:
            want = sorted(self.ids[v] for v in self.interface)
            if want != sorted(dmn.interface):
                raise ModelError(f"{self.path}: declared interface {self.interface} does not match the transition")
        return dmn


def loads(text: str, path: str = "<string>") -> MixedNetwork | DynamicMixedNetwork:
    return _Reader(path).parse(text)


def load(path: str | Path) -> MixedNetwork | DynamicMixedNetwork:
    return loads(Path(path).read_text(), str(path))


def _fmt(x: float) -> str:
    return repr(float(x))


def _rows(arr: np.ndarray, width: int) -> str:
    flat = [_fmt(x) for x in np.asarray(arr).reshape(-1)]
    return "\n".join("    " + " ".join(flat[k:k + width]) for k in range(0, len(flat), width))


def _cpd_lines(c, name) -> list[str]:
    if isinstance(c, DiscreteCPD):
        head = f"table {name(c.child)} | {' '.join(name(p) for p in c.parents)}".rstrip() + " ="
        return [head, _rows(c.table, c.table.shape[-1])]
    dp = " ".join(name(p) for p in c.discrete_parents)
    cp = " ".join(name(p) for p in c.continuous_parents)
    rows = np.concatenate([c.intercept[..., None], c.coefficients, c.variance[..., None]], axis=-1)
    return [f"gaussian {name(c.child)} | {dp} ; {cp} =".replace("  ", " "), _rows(rows, rows.shape[-1])]


def _con_lines(r: ConstraintRelation, name, k: int) -> list[str]:
    label = r.name if r.name and " " not in r.name and ":" not in r.name else f"c{k}"
    tuples = ", ".join(" ".join(str(int(x)) for x in t) for t in sorted(r.allowed))
    return [f"allow {label} : {' '.join(name(v) for v in r.scope)} = {tuples}"]


def dumps(model: MixedNetwork | DynamicMixedNetwork) -> str:
    """Serialize a static or dynamic network (constraints written as explicit tuples)."""
    out = [HEADER, "DYNAMICS"]
    if isinstance(model, DynamicMixedNetwork):
        cur = model.state_ids
        names = {v: model.variable(v).name for v in cur}
        names.update({model.previous[v]: names[v] + "'" for v in cur})
        out.append(f"dynamic {model.name}".rstrip())
        out.append("interface " + " ".join(names[v] for v in model.interface))
        blocks = [("prior", model.prior), ("transition", model.transition)]
        variables = [model.variable(v) for v in cur]
    else:
        names = {v: model.variables[v].name for v in model.variables}
        out.append("static")
        blocks = [("network", model)]
        variables = [model.variables[v] for v in sorted(model.variables)]
    out.append("VARIABLES")
    for v in variables:
        if v.is_discrete:
            out.append(f"discrete {names[v.id]} {v.domain_size} {' '.join(v.labels)}".rstrip())
        else:
            out.append(f"continuous {names[v.id]}")
    out.append("CPDS")
    for blk, net in blocks:
        out.append(f"[{blk}]")
        for v in sorted(net.cpds):
            out += _cpd_lines(net.cpds[v], names.__getitem__)
    out.append("CONSTRAINTS")
    for blk, net in blocks:
        out.append(f"[{blk}]")
        for k, r in enumerate(net.constraints):
            out += _con_lines(r, names.__getitem__, k)
    return "\n".join(out) + "\n"


def dump(model, path: str | Path) -> None:
    Path(path).write_text(dumps(model))
