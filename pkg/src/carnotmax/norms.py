"""Norms and seminorms on lattice functions.

Every sup over balls is a max over a :class:`BallFamily`, and every sup over
pairs is a max over lattice pairs.  Functionals that depend on a family
return a :class:`NormResult` carrying the family id, so two numbers are only
compared when they were computed over the same balls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .lattice import (Ball, BallFamily, GridFunction, build_stencil, gather, integrate, window_deviation_sums,
                      window_sums)

RELATIONS = ("lebesgue", "spanne", "adams")

DEFAULT_MAX_PAIRS = 10 ** 8
DEFAULT_PAIR_SAMPLES = 10 ** 6

# bound on temporary (rows x points) and (offsets x balls) arrays
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class ExponentTuple:
    """Exponents (beta, p, q, lambda, mu) tied together by one index relation.

    Build it with :meth:`derive`, which solves the relation for q (and mu).
    ``mu`` is the Morrey index of the target space: lambda for ``spanne``,
    lambda q / p for ``adams`` and 0 for ``lebesgue``.
    """

    relation: str
    beta: float
    p: float
    q: float
    Q: int
    lam: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        self._check(self.relation, self.beta, self.p, self.Q, self.lam)
        expected = self._solve_q(self.relation, self.beta, self.p, self.Q, self.lam)
        if not math.isclose(self.q, expected, rel_tol=1e-12):
            raise InputError(f"q = {self.q} violates the {self.relation} relation (expected {expected})")

    @staticmethod
    def _check(relation, beta, p, Q, lam) -> None:
        if relation not in RELATIONS:
            raise InputError(f"unknown relation {relation!r}; expected one of {RELATIONS}")
        if not 0.0 < beta < 1.0:
            raise InputError(f"beta must lie in (0, 1), got {beta}")
        if not 1.0 < p < Q / beta:
            raise InputError(f"p must lie in (1, Q/beta) = (1, {Q / beta:g}), got {p}")
        if relation == "lebesgue":
            if lam != 0.0:
                raise InputError("the Lebesgue relation has lambda = 0")
        elif not 0.0 < lam < Q - beta * p:
            raise InputError(f"lambda must lie in (0, Q - beta p) = (0, {Q - beta * p:g}), got {lam}")

    @staticmethod
    def _solve_q(relation, beta, p, Q, lam) -> float:
        inv_q = 1.0 / p - (beta / (Q - lam) if relation == "spanne" else beta / Q)
        if not inv_q > 0:
            raise InputError(f"no finite q: 1/q = {inv_q}")
        return 1.0 / inv_q

    @classmethod
    def derive(cls, relation: str, beta: float, p: float, Q: int, lam: float = 0.0) -> "ExponentTuple":
        cls._check(relation, beta, p, Q, lam)
        q = cls._solve_q(relation, beta, p, Q, lam)
        mu = {"lebesgue": 0.0, "spanne": lam, "adams": lam * q / p}[relation]
        return cls(relation, float(beta), float(p), q, int(Q), float(lam), mu)

    @property
    def mu_flagged(self) -> bool:
        """True when the derived target index leaves (0, Q); a warning, not an error."""
        return self.relation != "lebesgue" and not 0.0 < self.mu < self.Q

    @property
    def weak_exponent(self) -> float:
        """Q / (Q - beta), the target exponent of the weak-type endpoint."""
        return self.Q / (self.Q - self.beta)


@dataclass(frozen=True)
class NormResult:
    """A computed functional with enough context to compare it like-for-like."""

    name: str
    value: float
    family: str = "-"
    exhaustive: bool = True
    argmax: tuple | None = None
    samples: int | None = None

    def record(self) -> str:
        return f"name={self.name} value={self.value:.17g} family={self.family} exhaustive={self.exhaustive}"


def _defined(f: GridFunction) -> np.ndarray:
    return np.asarray(f.values, dtype=float)[f.mask]


def lp_norm(f: GridFunction, p: float) -> float:
    """(sum |f|^p h^Q)^(1/p); p = inf gives max |f|."""
    if not p >= 1:
        raise InputError(f"p must be >= 1, got {p}")
    vals = np.abs(_defined(f))
    if vals.size == 0:
        return 0.0
    if math.isinf(p):
        return float(vals.max())
    return float(np.sum(vals ** p) * f.lattice.cell_measure) ** (1.0 / p)


def weak_quasinorm(f: GridFunction, s: float) -> float:
    """sup over t > 0 of t |{|f| > t}|^(1/s), exact over the value distribution.

    The sup is approached as t rises to each distinct value v, where the level
    set is {|f| >= v}.
    """
    if not s >= 1:
        raise InputError(f"s must be >= 1, got {s}")
    vals = np.sort(np.abs(_defined(f)))[::-1]
    vals = vals[vals > 0]
    if vals.size == 0:
        return 0.0
    # counts[k] = #{|f| >= vals[k]}, taking the last position of each tie
    distinct, first = np.unique(-vals, return_index=True)
    last = np.append(first[1:], vals.size)
    counts = last.astype(float)
    return float(np.max(-distinct * (counts * f.lattice.cell_measure) ** (1.0 / s)))


def _ball_values(f: GridFunction, family: BallFamily, power: float, scale_exponent: float):
    """Per-ball (mean |f|^power)^(1/power) * measure^scale_exponent.

    Yields (radius, valid mask, values over all centres) for each stencil.
    """
    lat = family.lattice
    vals = np.where(f.mask, np.abs(np.asarray(f.values, dtype=float)), 0.0) ** power
    for stencil in family.stencils:
        valid = family.valid(stencil.radius)
        sums = window_sums(lat, vals, stencil)
        out = np.full(lat.size, -np.inf)
        mean = sums[valid] / stencil.count
        out[valid] = mean ** (1.0 / power) * stencil.discrete_measure ** scale_exponent
        yield stencil.radius, valid, out


def _argmax_over_family(family: BallFamily, per_radius) -> tuple[float, tuple | None]:
    best, where = -np.inf, None
    for radius, valid, vals in per_radius:
        if not valid.any():
            continue
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, where = float(vals[k]), (tuple(int(v) for v in family.lattice.indices[k]), radius)
    if where is None:
        raise InputError(f"the ball family {family.id} has no admissible ball")
    return best, where


def _restricted(f: GridFunction, family: BallFamily) -> BallFamily:
    """The family restricted to balls where f is defined."""
    if f.mask.all() or family.region is not None:
        return family
    return BallFamily(family.lattice, family.radii, family.within, f.mask)


def morrey_norm(f: GridFunction, p: float, lam: float, family: BallFamily) -> NormResult:
    """max over the family of (|B|^(-lam/Q) sum_B |f|^p h^Q)^(1/p).

    Evaluated as mean_B(|f|^p)^(1/p) |B|^((1 - lam/Q)/p) so that an
    indicator of a family ball gives |B|^((1 - lam/Q)/p) with no rounding.
    """
    Q = family.lattice.group.Q
    if not 0.0 <= lam <= Q:
        raise InputError(f"lambda must lie in [0, {Q}], got {lam}")
    if not p >= 1:
        raise InputError(f"p must be >= 1, got {p}")
    family = _restricted(f, family)
    value, where = _argmax_over_family(family, _ball_values(f, family, p, (1.0 - lam / Q) / p))
    return NormResult(f"morrey(p={p:g},lambda={lam:g})", value, family.id, True, where)


def ball_average(b: GridFunction, ball: Ball) -> float:
    """b_B = (1/|B|) integral over B of b."""
    return integrate(b, ball) / ball.measure(b.lattice)


def lipschitz_seminorm(b: GridFunction, beta: float, max_pairs: int = DEFAULT_MAX_PAIRS,
                       samples: int = DEFAULT_PAIR_SAMPLES, seed: int = 0) -> NormResult:
    """max over distinct lattice pairs of |b(x) - b(y)| / dist(y, x)^beta.

    Exhaustive when (points)^2 <= ``max_pairs``; otherwise ``samples`` seeded
    random pairs are used and the result says so.
    """
    if not 0.0 < beta < 1.0:
        raise InputError(f"beta must lie in (0, 1), got {beta}")
    lat = b.lattice
    group = lat.group
    pts = lat.points[b.mask]
    vals = _defined(b)
    n = len(vals)
    if n < 2:
        return NormResult("lipschitz", 0.0, lat.describe(), True)
    if n * n <= max_pairs:
        best, where = 0.0, None
        step = max(1, _CHUNK_ELEMENTS // n)
        for s in range(0, n, step):
            rows = slice(s, min(n, s + step))
            d = group.dist(pts[None, :, :], pts[rows, None, :])
            diff = np.abs(vals[rows, None] - vals[None, :])
            ratio = np.zeros_like(d)
            np.divide(diff, d ** beta, out=ratio, where=d > 0)
            k = int(np.argmax(ratio))
            if ratio.flat[k] > best:
                i, j = divmod(k, n)
                best, where = float(ratio.flat[k]), (s + i, j)
        return NormResult("lipschitz", best, lat.describe(), True, where)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, samples)
    j = rng.integers(0, n, samples)
    d = group.dist(pts[j], pts[i])
    ratio = np.zeros_like(d)
    np.divide(np.abs(vals[i] - vals[j]), d ** beta, out=ratio, where=d > 0)
    k = int(np.argmax(ratio))
    return NormResult("lipschitz", float(ratio[k]), lat.describe(), False, (int(i[k]), int(j[k])), samples)


def oscillation_values(b: GridFunction, beta: float, p: float, family: BallFamily):
    """Per-ball |B|^(-beta/Q) (mean_B |b - b_B|^p)^(1/p), max over B for p = inf.

    Yields (radius, admissible centre flat indices, values) per stencil.
    """
    if not 0.0 < beta < 1.0:
        raise InputError(f"beta must lie in (0, 1), got {beta}")
    if not p >= 1:
        raise InputError(f"p must lie in [1, inf], got {p}")
    family = _restricted(b, family)
    lat = family.lattice
    Q = lat.group.Q
    vals = np.where(b.mask, np.asarray(b.values, dtype=float), 0.0)
    for stencil in family.stencils:
        centers = np.flatnonzero(family.valid(stencil.radius))
        scale = stencil.discrete_measure ** (beta / Q)
        if not math.isinf(p):
            idx = lat.indices[centers]
            avg = window_sums(lat, vals, stencil, idx) / stencil.count
            dev = window_deviation_sums(lat, vals, stencil, idx, reference=avg, power=p) / stencil.count
            yield stencil.radius, centers, dev ** (1.0 / p) / scale
            continue
        out = np.empty(len(centers))
        step = max(1, _CHUNK_ELEMENTS // stencil.count)
        for s in range(0, len(centers), step):
            members = gather(lat, vals, stencil, lat.indices[centers[s:s + step]])
            dev = np.abs(members - members.sum(axis=0) / stencil.count)
            out[s:s + step] = dev.max(axis=0) / scale
        yield stencil.radius, centers, out


def lip_beta_p_norm(b: GridFunction, beta: float, p: float, family: BallFamily) -> NormResult:
    """max over the family of the normalised p-mean oscillation of b."""
    best, where = -np.inf, None
    for radius, centers, vals in oscillation_values(b, beta, p, family):
        if len(vals) == 0:
            continue
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, where = float(vals[k]), (tuple(int(v) for v in family.lattice.indices[centers[k]]), radius)
    if where is None:
        raise InputError(f"the ball family {family.id} has no admissible ball")
    return NormResult(f"lip(beta={beta:g},p={p:g})", best, family.id, True, where)


def ball_oscillation(b: GridFunction, ball: Ball, beta: float, p: float) -> float:
    """Normalised p-mean oscillation over one ball, via :func:`ball_average`."""
    lat = b.lattice
    members = ball.members(lat)
    dev = np.abs(np.asarray(b.values, dtype=float)[members] - ball_average(b, ball))
    inner = dev.max() if math.isinf(p) else np.mean(dev ** p) ** (1.0 / p)
    return float(inner / build_stencil(lat, ball.radius).discrete_measure ** (beta / lat.group.Q))
