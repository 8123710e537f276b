"""Conditional-Gaussian potentials in canonical form with an explicit ZERO tag.

For each joint value of the discrete scope a :class:`HybridPotential` holds
either ZERO or the function

    phi(x) = exp(g + h.x - x.K.x / 2)

of the continuous scope ``x``.  Products add ``(g, h, K)``; continuous
variables are integrated out exactly, discrete ones summed out, collapsing to
a single moment-matched Gaussian per surviving tuple when the summed
components differ (a weak marginal).
"""

from __future__ import annotations

import hashlib
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegeneratePotentialError, ModelError
from .network import ConstraintRelation, DiscreteCPD, LinearGaussianCPD

LOG_2PI = math.log(2 * math.pi)
PSD_TOL = 1e-8
# relative tolerance for treating summed Gaussian components as identical
SAME_TOL = 1e-12


class HybridPotential:
    """Immutable CG potential over ``dvars`` (discrete) and ``cvars`` (continuous).

    Arrays: ``g`` has shape ``cards``; ``h`` ``cards + (n,)``; ``K``
    ``cards + (n, n)``; ``zero`` is a boolean mask of shape ``cards``.
    ``collapsed`` records whether a lossy weak marginal was taken anywhere
    in this potential's history.
    """

    __slots__ = ("dvars", "cards", "cvars", "g", "h", "K", "zero", "collapsed")

    def __init__(self, dvars, cards, cvars, g, h=None, K=None, zero=None, collapsed=False):
        self.dvars = tuple(int(v) for v in dvars)
        self.cards = tuple(int(c) for c in cards)
        self.cvars = tuple(int(v) for v in cvars)
        n = len(self.cvars)
        g = np.asarray(g, dtype=float)
        if g.shape != self.cards:
            g = np.broadcast_to(g, self.cards)
        if zero is None:
            zero = np.zeros(self.cards, dtype=bool)
        else:
            zero = np.broadcast_to(np.asarray(zero, dtype=bool), self.cards)
        if h is None:
            h = np.zeros(self.cards + (n,))
        if K is None:
            K = np.zeros(self.cards + (n, n))
        h = np.broadcast_to(np.asarray(h, dtype=float), self.cards + (n,))
        K = np.broadcast_to(np.asarray(K, dtype=float), self.cards + (n, n))
        if len(set(self.dvars)) != len(self.dvars) or len(set(self.cvars)) != len(self.cvars):
            raise ModelError("repeated variable in potential scope")
        if set(self.dvars) & set(self.cvars):
            raise ModelError("variable listed as both discrete and continuous")
        g = np.where(zero, 0.0, g)
        for name, arr in (("g", g), ("h", h), ("K", K), ("zero", zero)):
            if arr.flags.writeable:
                arr.setflags(write=False)
            setattr(self, name, arr)
        self.collapsed = bool(collapsed)

    # -- constructors --------------------------------------------------------
    @classmethod
    def identity(cls) -> "HybridPotential":
        return cls((), (), (), 0.0)

    @classmethod
    def from_table(cls, dvars, cards, values) -> "HybridPotential":
        values = np.asarray(values, dtype=float)
        zero = values <= 0
        with np.errstate(divide="ignore"):
            g = np.where(zero, 0.0, np.log(np.where(zero, 1.0, values)))
        return cls(dvars, cards, (), g, zero=zero)

    @classmethod
    def from_log_table(cls, dvars, cards, log_values, zero=None) -> "HybridPotential":
        log_values = np.asarray(log_values, dtype=float)
        z = ~np.isfinite(log_values) if zero is None else zero
        return cls(dvars, cards, (), np.where(z, 0.0, log_values), zero=z)

    @classmethod
    def from_constraint(cls, rel: ConstraintRelation, cards) -> "HybridPotential":
        m = rel.mask(cards)
        return cls(rel.scope, cards, (), 0.0, zero=~m)

    @classmethod
    def from_discrete_cpd(cls, cpd: DiscreteCPD) -> "HybridPotential":
        return cls.from_table(cpd.scope, cpd.table.shape, cpd.table)

    @classmethod
    def from_linear_gaussian(cls, cpd: LinearGaussianCPD, dcards) -> "HybridPotential":
        a = cpd.intercept
        b = cpd.coefficients
        var = cpd.variance
        coef = np.concatenate([-b, np.ones(a.shape + (1,))], axis=-1)  # (.., m+1)
        K = coef[..., :, None] * coef[..., None, :] / var[..., None, None]
        h = coef * (a / var)[..., None]
        g = -0.5 * a * a / var - 0.5 * (LOG_2PI + np.log(var))
        return cls(cpd.discrete_parents, tuple(dcards), cpd.continuous_parents + (cpd.child,), g, h, K)

    @classmethod
    def gaussian(cls, cvars, mean, cov, log_weight=0.0) -> "HybridPotential":
        """Weighted normalised Gaussian density in canonical form."""
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        K = np.linalg.inv(cov)
        h = K @ mean
        _, logdet = np.linalg.slogdet(K)
        g = log_weight - 0.5 * len(mean) * LOG_2PI + 0.5 * logdet - 0.5 * mean @ h
        return cls((), (), cvars, g, h, K)

    @classmethod
    def zeros(cls, dvars, cards, cvars=()) -> "HybridPotential":
        return cls(dvars, cards, cvars, 0.0, zero=True)

    # -- basic properties ----------------------------------------------------
    @property
    def scope(self) -> tuple[int, ...]:
        return self.dvars + self.cvars

    @property
    def n(self) -> int:
        return len(self.cvars)

    def is_all_zero(self) -> bool:
        return bool(self.zero.all())

    def card_map(self) -> dict[int, int]:
        return dict(zip(self.dvars, self.cards))

    def __repr__(self):
        return (f"HybridPotential(d={self.dvars}, c={self.cvars}, "
                f"nonzero={int((~self.zero).sum())}/{self.zero.size})")

    def fingerprint(self) -> str:
        m = hashlib.blake2b(digest_size=16)
        m.update(repr((self.dvars, self.cards, self.cvars)).encode())
        for arr in (self.zero, self.g, self.h, self.K):
            m.update(np.ascontiguousarray(arr).tobytes())
        return m.hexdigest()

    def log_values(self) -> np.ndarray:
        """Discrete-only view: ``g`` with ZERO entries as -inf."""
        return np.where(self.zero, -np.inf, self.g)

    def reorder(self, dvars: Sequence[int] | None = None, cvars: Sequence[int] | None = None) -> "HybridPotential":
        """Same potential with the scope permuted into the given order."""
        dvars = self.dvars if dvars is None else tuple(dvars)
        cvars = self.cvars if cvars is None else tuple(cvars)
        if set(dvars) != set(self.dvars) or set(cvars) != set(self.cvars):
            raise ModelError("reorder must be a permutation of the scope")
        if dvars == self.dvars and cvars == self.cvars:
            return self
        cm = self.card_map()
        zero, g, h, K = _expand(self, dvars, cvars)
        return HybridPotential(dvars, [cm[v] for v in dvars], cvars, g, h, K, zero, self.collapsed)


# -- alignment helpers --------------------------------------------------------

def _expand(p: HybridPotential, dvars: Sequence[int], cvars: Sequence[int]):
    """Arrays of ``p`` laid out for broadcasting over the (superset) scope."""
    dvars = list(dvars)
    pos = [dvars.index(v) for v in p.dvars]
    perm = list(np.argsort(pos))
    shape = [1] * len(dvars)
    for v, c in zip(p.dvars, p.cards):
        shape[dvars.index(v)] = c
    nd = len(p.dvars)
    if perm != list(range(nd)):
        g = np.transpose(p.g, perm)
        zero = np.transpose(p.zero, perm)
        h = np.transpose(p.h, perm + [nd])
        K = np.transpose(p.K, perm + [nd, nd + 1])
    else:
        g, zero, h, K = p.g, p.zero, p.h, p.K
    g = g.reshape(shape)
    zero = zero.reshape(shape)
    m = p.n
    h = h.reshape(shape + [m])
    K = K.reshape(shape + [m, m])
    cvars = list(cvars)
    if list(p.cvars) != cvars:
        n = len(cvars)
        cpos = [cvars.index(v) for v in p.cvars]
        h2 = np.zeros(shape + [n])
        K2 = np.zeros(shape + [n, n])
        if m:
            h2[..., cpos] = h
            K2[(Ellipsis,) + np.ix_(cpos, cpos)] = K
        h, K = h2, K2
    return zero, g, h, K


def _union(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    return tuple(a) + tuple(v for v in b if v not in a)


def _merge_cards(*ps: HybridPotential) -> dict[int, int]:
    cm: dict[int, int] = {}
    for p in ps:
        for v, c in zip(p.dvars, p.cards):
            if cm.setdefault(v, c) != c:
                raise ModelError(f"variable {v} has inconsistent domain sizes")
    return cm


def _check_kinds(a: HybridPotential, b: HybridPotential):
    if set(a.dvars) & set(b.cvars) or set(a.cvars) & set(b.dvars):
        raise ModelError("variable is discrete in one operand and continuous in the other")


# -- the algebra ---------------------------------------------------------------

def multiply(a: HybridPotential, b: HybridPotential) -> HybridPotential:
    """Pointwise product; ZERO is absorbing."""
    _check_kinds(a, b)
    dvars = _union(a.dvars, b.dvars)
    cvars = _union(a.cvars, b.cvars)
    cm = _merge_cards(a, b)
    cards = tuple(cm[v] for v in dvars)
    za, ga, ha, Ka = _expand(a, dvars, cvars)
    zb, gb, hb, Kb = _expand(b, dvars, cvars)
    zero = np.broadcast_to(za | zb, cards)
    g = ga + gb
    h = ha + hb if cvars else np.zeros(cards + (0,))
    K = Ka + Kb if cvars else np.zeros(cards + (0, 0))
    return HybridPotential(dvars, cards, cvars, g, h, K, zero, a.collapsed or b.collapsed)


def multiply_all(ps: Iterable[HybridPotential]) -> HybridPotential:
    out = HybridPotential.identity()
    for p in ps:
        out = multiply(out, p)
    return out


def divide(a: HybridPotential, b: HybridPotential) -> HybridPotential:
    """a / b for scope(b) within scope(a); x/ZERO is taken as ZERO."""
    _check_kinds(a, b)
    if not set(b.dvars) <= set(a.dvars) or not set(b.cvars) <= set(a.cvars):
        raise ModelError("divisor scope must be contained in dividend scope")
    zb, gb, hb, Kb = _expand(b, a.dvars, a.cvars)
    zero = a.zero | zb
    return HybridPotential(a.dvars, a.cards, a.cvars, a.g - gb, a.h - hb, a.K - Kb, zero,
                           a.collapsed or b.collapsed)


def condition(p: HybridPotential, evidence: Mapping[int, float]) -> HybridPotential:
    """Instantiate evidence variables that lie in the scope; others are ignored."""
    dev = {v: int(x) for v, x in evidence.items() if v in p.dvars}
    cev = {v: float(x) for v, x in evidence.items() if v in p.cvars}
    if not dev and not cev:
        return p
    zero, g, h, K = p.zero, p.g, p.h, p.K
    dvars, cards = list(p.dvars), list(p.cards)
    if dev:
        idx = []
        for v, c in zip(p.dvars, p.cards):
            if v in dev:
                if not 0 <= dev[v] < c:
                    raise ModelError(f"evidence value {dev[v]} outside domain of variable {v}")
                idx.append(dev[v])
            else:
                idx.append(slice(None))
        idx = tuple(idx)
        zero, g, h, K = zero[idx], g[idx], h[idx], K[idx]
        keep = [i for i, v in enumerate(p.dvars) if v not in dev]
        dvars = [p.dvars[i] for i in keep]
        cards = [p.cards[i] for i in keep]
    cvars = list(p.cvars)
    if cev:
        e_pos = [i for i, v in enumerate(p.cvars) if v in cev]
        u_pos = [i for i, v in enumerate(p.cvars) if v not in cev]
        e = np.array([cev[p.cvars[i]] for i in e_pos])
        Kee = K[(Ellipsis,) + np.ix_(e_pos, e_pos)]
        Kue = K[(Ellipsis,) + np.ix_(u_pos, e_pos)]
        g = g + h[..., e_pos] @ e - 0.5 * np.einsum("...ij,i,j->...", Kee, e, e)
        h = h[..., u_pos] - Kue @ e
        K = K[(Ellipsis,) + np.ix_(u_pos, u_pos)]
        cvars = [p.cvars[i] for i in u_pos]
    return HybridPotential(dvars, cards, cvars, g, h, K, zero, p.collapsed)


def _safe_chol(Kyy: np.ndarray, zero: np.ndarray) -> np.ndarray:
    """Batched Cholesky of the live entries; raises if any is not positive definite."""
    m = Kyy.shape[-1]
    live = Kyy[~zero]
    if live.size:
        scale = np.maximum(1.0, np.abs(live).max(axis=(-2, -1)))
        ev = np.linalg.eigvalsh(live)
        if np.any(ev[..., 0] <= PSD_TOL * scale):
            raise DegeneratePotentialError("cannot integrate: precision block is not positive definite")
    safe = np.where(zero[..., None, None], np.eye(m), Kyy)
    return np.linalg.cholesky(safe)


def _integrate(p: HybridPotential, elim: Sequence[int]) -> HybridPotential:
    e_pos = [i for i, v in enumerate(p.cvars) if v in elim]
    x_pos = [i for i, v in enumerate(p.cvars) if v not in elim]
    K, h = p.K, p.h
    Kyy = K[(Ellipsis,) + np.ix_(e_pos, e_pos)]
    Kxy = K[(Ellipsis,) + np.ix_(x_pos, e_pos)]
    Kxx = K[(Ellipsis,) + np.ix_(x_pos, x_pos)]
    hy = h[..., e_pos]
    hx = h[..., x_pos]
    L = _safe_chol(Kyy, p.zero)
    m = len(e_pos)
    logdet = 2 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(-1)
    safe_K = L @ np.swapaxes(L, -1, -2)
    # solve Kyy [A | b] = [Kyx | hy]
    rhs = np.concatenate([np.swapaxes(Kxy, -1, -2), hy[..., None]], axis=-1)
    sol = np.linalg.solve(safe_K, rhs)
    A = sol[..., :-1]
    b = sol[..., -1]
    Kn = Kxx - Kxy @ A
    Kn = 0.5 * (Kn + np.swapaxes(Kn, -1, -2))
    hn = hx - np.einsum("...ij,...j->...i", Kxy, b)
    gn = p.g + 0.5 * (m * LOG_2PI - logdet + np.einsum("...i,...i->...", hy, b))
    return HybridPotential(p.dvars, p.cards, [p.cvars[i] for i in x_pos], gn, hn, Kn, p.zero, p.collapsed)


def _logsumexp_masked(g: np.ndarray, zero: np.ndarray, axis):
    lv = np.where(zero, -np.inf, g)
    mx = np.max(lv, axis=axis, keepdims=True)
    mx_safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(under="ignore"):
        s = np.exp(lv - mx_safe).sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + mx_safe
    out = np.squeeze(out, axis=axis)
    return out, ~np.isfinite(out)


def _sum_discrete(p: HybridPotential, elim: Sequence[int]) -> HybridPotential:
    keep = [i for i, v in enumerate(p.dvars) if v not in elim]
    gone = [i for i, v in enumerate(p.dvars) if v in elim]
    perm = keep + gone
    nd = len(p.dvars)
    rshape = tuple(p.cards[i] for i in keep)
    S = int(np.prod([p.cards[i] for i in gone]))
    g = np.transpose(p.g, perm).reshape(rshape + (S,))
    zero = np.transpose(p.zero, perm).reshape(rshape + (S,))
    dvars = [p.dvars[i] for i in keep]
    n = p.n
    if n == 0:
        gn, zn = _logsumexp_masked(g, zero, axis=-1)
        return HybridPotential(dvars, rshape, (), np.where(zn, 0.0, gn), zero=zn, collapsed=p.collapsed)
    h = np.transpose(p.h, perm + [nd]).reshape(rshape + (S, n))
    K = np.transpose(p.K, perm + [nd, nd + 1]).reshape(rshape + (S, n, n))
    live = ~zero
    zn = ~live.any(axis=-1)
    # identical live components sum losslessly
    lh, lK = live[..., None], live[..., None, None]
    hspan = np.where(lh, h, -np.inf).max(axis=-2) - np.where(lh, h, np.inf).min(axis=-2)
    Kspan = np.where(lK, K, -np.inf).max(axis=-3) - np.where(lK, K, np.inf).min(axis=-3)
    hmag = np.where(lh, np.abs(h), 0.0).max(axis=-2)
    Kmag = np.where(lK, np.abs(K), 0.0).max(axis=-3)
    with np.errstate(invalid="ignore"):
        same = (np.all(hspan <= SAME_TOL * (1 + hmag), axis=-1)
                & np.all(Kspan <= SAME_TOL * (1 + Kmag), axis=(-2, -1))) | zn
    gsum, _ = _logsumexp_masked(g, zero, axis=-1)
    first = np.argmax(live, axis=-1)
    hn = np.take_along_axis(h, first[..., None, None], axis=-2)[..., 0, :]
    Kn = np.take_along_axis(K, first[..., None, None, None], axis=-3)[..., 0, :, :]
    gn = np.where(zn, 0.0, gsum)
    collapsed = p.collapsed
    lossy = ~same
    if lossy.any():
        collapsed = True
        gl, hl, Kl = _moment_match(g[lossy], h[lossy], K[lossy], zero[lossy])
        gn = gn.copy()
        hn = hn.copy()
        Kn = Kn.copy()
        gn[lossy], hn[lossy], Kn[lossy] = gl, hl, Kl
    return HybridPotential(dvars, rshape, p.cvars, gn, hn, Kn, zn, collapsed)


def _moment_match(g, h, K, zero):
    """Collapse mixtures (batch B, components S) to single Gaussians.

    Components whose precision is not positive definite have no moments;
    when such a component is present the batch entry falls back to a
    weight-averaged canonical form.
    """
    B, S, n = h.shape
    live = ~zero
    safeK = np.where(live[..., None, None], K, np.eye(n))
    ev = np.linalg.eigvalsh(safeK)
    scale = np.maximum(1.0, np.abs(safeK).max(axis=(-2, -1)))
    proper = ev[..., 0] > PSD_TOL * scale
    ok_row = np.all(proper | ~live, axis=-1)
    gn = np.empty(B)
    hn = np.empty((B, n))
    Kn = np.empty((B, n, n))
    if ok_row.any():
        r = ok_row
        Kr, hr, gr, lr = safeK[r], h[r], g[r], live[r]
        cov = np.linalg.inv(Kr)
        mu = np.einsum("bsij,bsj->bsi", cov, hr)
        _, logdetK = np.linalg.slogdet(Kr)
        lm = gr + 0.5 * (n * LOG_2PI - logdetK + np.einsum("bsi,bsi->bs", hr, mu))
        lm = np.where(lr, lm, -np.inf)
        mx = lm.max(axis=-1, keepdims=True)
        w = np.exp(lm - mx)
        W = w.sum(-1)
        wn = w / W[:, None]
        mean = np.einsum("bs,bsi->bi", wn, mu)
        d = mu - mean[:, None, :]
        C = np.einsum("bs,bsij->bij", wn, cov + d[..., :, None] * d[..., None, :])
        C = 0.5 * (C + np.swapaxes(C, -1, -2))
        Kc = np.linalg.inv(C)
        Kc = 0.5 * (Kc + np.swapaxes(Kc, -1, -2))
        hc = np.einsum("bij,bj->bi", Kc, mean)
        _, logdetC = np.linalg.slogdet(Kc)
        gc = mx[:, 0] + np.log(W) - 0.5 * n * LOG_2PI + 0.5 * logdetC - 0.5 * np.einsum("bi,bi->b", mean, hc)
        gn[r], hn[r], Kn[r] = gc, hc, Kc
    if (~ok_row).any():
        r = ~ok_row
        gr, lr = g[r], live[r]
        gm = np.where(lr, gr, -np.inf)
        mx = gm.max(axis=-1, keepdims=True)
        w = np.exp(gm - mx)
        W = w.sum(-1)
        wn = w / W[:, None]
        gn[r] = mx[:, 0] + np.log(W)
        hn[r] = np.einsum("bs,bsi->bi", wn, np.where(lr[..., None], h[r], 0.0))
        Kn[r] = np.einsum("bs,bsij->bij", wn, np.where(lr[..., None, None], K[r], 0.0))
    return gn, hn, Kn


def marginalize(p: HybridPotential, elim: Iterable[int]) -> HybridPotential:
    """Eliminate ``elim``: continuous variables are integrated out first, then
    discrete variables summed (weak marginal when components differ)."""
    elim = set(elim)
    if not elim <= set(p.scope):
        raise ModelError(f"cannot eliminate {sorted(elim - set(p.scope))}: not in scope")
    out = p
    ce = [v for v in p.cvars if v in elim]
    if ce:
        out = _integrate(out, ce)
    de = [v for v in p.dvars if v in elim]
    if de:
        out = _sum_discrete(out, de)
    return out


def marginal_onto(p: HybridPotential, keep: Iterable[int]) -> HybridPotential:
    keep = set(keep)
    return marginalize(p, [v for v in p.scope if v not in keep])


def log_mass(p: HybridPotential) -> np.ndarray:
    """Per discrete tuple log of the integral over the continuous scope (-inf for ZERO)."""
    q = _integrate(p, p.cvars) if p.cvars else p
    return q.log_values()


def total_log_mass(p: HybridPotential) -> float:
    lv = log_mass(p).ravel()
    if lv.size == 0:
        return -np.inf
    mx = lv.max()
    if not np.isfinite(mx):
        return -np.inf
    return float(mx + np.log(np.exp(lv - mx).sum()))


def normalize(p: HybridPotential) -> HybridPotential:
    """Scale so the total mass is one (no-op for an all-ZERO potential)."""
    z = total_log_mass(p)
    if not np.isfinite(z):
        return p
    return scale(p, -z)


def scale(p: HybridPotential, log_factor: float) -> HybridPotential:
    return HybridPotential(p.dvars, p.cards, p.cvars, p.g + log_factor, p.h, p.K, p.zero, p.collapsed)


def normalize_log_max(p: HybridPotential) -> HybridPotential:
    """Shift ``g`` so its largest live value is zero (cheap rescaling for messages)."""
    if p.zero.all():
        return p
    mx = np.max(np.where(p.zero, -np.inf, p.g))
    return scale(p, -mx)


def moments(p: HybridPotential):
    """Per discrete tuple: (log mass, mean, covariance).  Requires PD precisions."""
    n = p.n
    safeK = np.where(p.zero[..., None, None], np.eye(n), p.K)
    _safe_chol(safeK, p.zero)
    cov = np.linalg.inv(safeK)
    mu = np.einsum("...ij,...j->...i", cov, p.h)
    return log_mass(p), mu, cov


def to_canonical(mean, cov, log_weight=0.0):
    """(g, h, K) of ``exp(log_weight) * N(mean, cov)``."""
    p = HybridPotential.gaussian(tuple(range(len(np.atleast_1d(mean)))), mean, cov, log_weight)
    return float(p.g), p.h.copy(), p.K.copy()


def from_canonical(g, h, K):
    """(log_weight, mean, cov) of a canonical-form Gaussian."""
    K = np.atleast_2d(K)
    cov = np.linalg.inv(K)
    mean = cov @ np.atleast_1d(h)
    _, logdet = np.linalg.slogdet(K)
    lw = g + 0.5 * (len(mean) * LOG_2PI - logdet + np.atleast_1d(h) @ mean)
    return float(lw), mean, cov


def potential_from_function(f, cards: Mapping[int, int]) -> HybridPotential:
    """Potential of a CPD or constraint; ``cards`` gives discrete domain sizes."""
    if isinstance(f, DiscreteCPD):
        return HybridPotential.from_discrete_cpd(f)
    if isinstance(f, LinearGaussianCPD):
        return HybridPotential.from_linear_gaussian(f, [cards[v] for v in f.discrete_parents])
    if isinstance(f, ConstraintRelation):
        return HybridPotential.from_constraint(f, [cards[v] for v in f.scope])
    if isinstance(f, HybridPotential):
        return f
    raise TypeError(f"not a network function: {f!r}")


def network_potentials(net, evidence: Mapping[int, float] | None = None) -> list[HybridPotential]:
    """CPD and constraint potentials of a MixedNetwork, conditioned on ``evidence``."""
    cards = {v: net.card(v) for v in net.discrete_ids}
    out = [potential_from_function(f, cards) for f in net.functions()]
    if evidence:
        out = [condition(p, evidence) for p in out]
    return out


def max_abs_diff(a: HybridPotential, b: HybridPotential) -> float:
    """Largest difference between two same-scope potentials after normalisation.

    Compares normalised discrete weights and the canonical (h, K) of live
    entries; a ZERO pattern mismatch counts as 1.
    """
    b = b.reorder(a.dvars, a.cvars)
    if np.any(a.zero != b.zero):
        return 1.0
    la = a.g - (np.max(np.where(a.zero, -np.inf, a.g)) if not a.zero.all() else 0.0)
    lb = b.g - (np.max(np.where(b.zero, -np.inf, b.g)) if not b.zero.all() else 0.0)
    pa = np.where(a.zero, 0.0, np.exp(la))
    pb = np.where(b.zero, 0.0, np.exp(lb))
    sa, sb = pa.sum(), pb.sum()
    d = float(np.max(np.abs(pa / sa - pb / sb))) if pa.size and sa > 0 and sb > 0 else 0.0
    if a.n:
        live = ~a.zero
        d = max(d, float(np.max(np.abs(a.h[live] - b.h[live]), initial=0.0)),
                float(np.max(np.abs(a.K[live] - b.K[live]), initial=0.0)))
    return d
