"""Quantitative checks of the maximal-commutator inequalities and identities.

Each suite returns a :class:`CheckReport`.  Suites take concrete lattices,
symbols and radius families; the runner decides which ones to build.
Regression-class suites accept ``frozen`` (a value, or a (low, high) band)
recorded by an earlier calibration run and pass when the new value stays
within a factor 1.1 of it.
"""
from __future__ import annotations

import functools
import math
import time
from typing import Sequence

import numpy as np

from ..errors import InputError, RefusalError
from ..groups import GroupDescriptor
from ..lattice import Ball, BallFamily, GridFunction, Lattice, build_stencil, make_lattice
from ..norms import (ExponentTuple, lip_beta_p_norm, lipschitz_seminorm, lp_norm, morrey_norm,
                     weak_quasinorm)
from ..operators import (MODES, MaximalRequest, evaluate, local_maximal, local_radii, maximal,
                         maximal_commutator, nonlinear_commutator, oracle_maximal)
from .reports import CheckReport, ratio_or_zero
from .symbols import FunctionSpec, SymbolSpec, generate_function, generate_symbol

IDENTITY_TOL = 1e-13
BALANCE_TOL = 1e-12
REGRESSION_SLACK = 1.1
DRIFT_TOL = 0.10
COVARIANCE_TOL = 0.02
SPREAD_GATE = 2.0
SPREAD_WITNESS = 4.0


def timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        report = fn(*args, **kwargs)
        object.__setattr__(report, "runtime_ms", 1000.0 * (time.perf_counter() - start))
        return report
    return wrapper


def domination_bound(group: GroupDescriptor, beta: float) -> float:
    """(2 c0)^beta c1^(-beta/Q) times the 1.1 discrete-measure allowance."""
    if not group.calibrated:
        raise InputError(f"{group.name} needs calibrated c0, c1")
    return (2.0 * group.c0) ** beta * group.c1 ** (-beta / group.Q) * 1.1


def _regression(value: float, frozen) -> tuple[float | None, bool, str]:
    if frozen is None:
        return None, bool(np.isfinite(value)), "unfrozen"
    if isinstance(frozen, (tuple, list)):
        lo, hi = frozen
        return hi * REGRESSION_SLACK, bool(lo / REGRESSION_SLACK <= value <= hi * REGRESSION_SLACK), "band"
    return frozen * REGRESSION_SLACK, bool(value <= frozen * REGRESSION_SLACK), "frozen"


def _point(lat: Lattice, flat: int) -> str:
    return "(" + ",".join(f"{v:g}" for v in lat.points[flat]) + ")"


# operator suites --------------------------------------------------------------


@timed
def suite_pointwise_domination(b: GridFunction, f: GridFunction, beta: float, radii=None,
                               mode: str = "centered", label: str = "", lipschitz=None) -> CheckReport:
    """max over the core of M_b f / (||b||_Lambda M_beta f) against the analytic bound."""
    lat = b.lattice
    if not np.any(f.values):
        raise InputError("pointwise domination needs a nonzero f")
    lip = lipschitz if lipschitz is not None else lipschitz_seminorm(b, beta)
    mb = maximal_commutator(b, f, MaximalRequest(mode=mode, radii=radii))
    mbeta = maximal(f, MaximalRequest("fractional", alpha=beta, mode=mode, radii=radii))
    out = mb.mask
    num, den = mb.values[out], lip.value * mbeta.values[out]
    use = mbeta.values[out] > 0
    if lip.value == 0:
        ratios = np.where(num[use] == 0, 0.0, np.inf)
    else:
        ratios = num[use] / den[use]
    k = int(np.argmax(ratios))
    value = float(ratios[k])
    bound = domination_bound(lat.group, beta)
    where = np.flatnonzero(out)[np.flatnonzero(use)[k]]
    return CheckReport("pointwise_domination", lat.group.name, "analytic", value, bound, value <= bound,
                       label=label, beta=beta, worst=_point(lat, where),
                       details=(("mode", mode), ("lipschitz", lip.value), ("exhaustive", lip.exhaustive)))


@timed
def suite_nonlinear_bound(b: GridFunction, f: GridFunction, radii=None, modes: Sequence[str] = MODES,
                          label: str = "") -> CheckReport:
    """|[b, M] f| <= M_b f at every core point, for b >= 0, in every mode."""
    lat = b.lattice
    if np.any(b.values < 0):
        raise InputError("the nonlinear bound needs b >= 0")
    worst, where, mode_at = -np.inf, None, None
    for mode in modes:
        req = MaximalRequest(mode=mode, radii=radii)
        lhs = np.abs(nonlinear_commutator(b, f, req).values)
        rhs = maximal_commutator(b, f, req).values
        gap = lhs - rhs
        k = int(np.nanargmax(gap))
        if gap[k] > worst:
            worst, where, mode_at = float(gap[k]), k, mode
    return CheckReport("nonlinear_bound", lat.group.name, "identity", worst, IDENTITY_TOL,
                       worst <= IDENTITY_TOL, IDENTITY_TOL, label, worst=f"{_point(lat, where)}@{mode_at}")


@timed
def suite_constant_symbol(f: GridFunction, c: float, radii=None, label: str = "") -> CheckReport:
    """b = c >= 0 kills M_b f and [b, M] f in both modes."""
    lat = f.lattice
    if c < 0:
        raise InputError("the constant-symbol identity needs c >= 0")
    b = GridFunction(lat, np.full(lat.size, float(c)))
    worst = 0.0
    for mode in MODES:
        req = MaximalRequest(mode=mode, radii=radii)
        for g in (maximal_commutator(b, f, req), nonlinear_commutator(b, f, req)):
            worst = max(worst, float(np.max(np.abs(g.values[g.mask]))))
    return CheckReport("constant_symbol", lat.group.name, "identity", worst, IDENTITY_TOL,
                       worst <= IDENTITY_TOL, IDENTITY_TOL, label, details=(("c", c),))


@timed
def suite_local_domination(b: GridFunction, ball: Ball, label: str = "") -> CheckReport:
    """M_B0(b) <= M(b) on B0, exactly, with M over the same radii unrestricted.

    Also checks M(chi_B0) = 1 on B0, both for the local maximal function and
    for the unrestricted one (the single-cell ball around x lies in B0).
    """
    lat = b.lattice
    local = local_maximal(b, ball)
    radii = local_radii(lat, ball)
    full = maximal(b, MaximalRequest(mode="containing", radii=radii))
    on = local.mask & full.mask
    if not on.any():
        raise InputError("B0 does not meet the core of the unrestricted maximal function")
    excess = float(np.max(local.values[on] - full.values[on]))
    chi = GridFunction(lat, ball.indicator(lat).astype(float))
    chi_local = local_maximal(chi, ball)
    chi_full = maximal(chi, MaximalRequest(mode="containing", radii=radii))
    chi_dev = max(float(np.max(np.abs(chi_local.values[chi_local.mask] - 1.0))),
                  float(np.max(np.abs(chi_full.values[on] - 1.0))))
    passed = excess <= 0.0 and chi_dev == 0.0
    return CheckReport("local_domination", lat.group.name, "identity", max(excess, chi_dev), 0.0, passed, 0.0,
                       label, details=(("points", int(on.sum())), ("chi_deviation", chi_dev)))


@timed
def suite_oracle_equivalence(group: GroupDescriptor, pairs: int = 25, seed: int = 0) -> CheckReport:
    """Fast kernels against brute force on the small oracle lattices."""
    lat, radii, ball = oracle_lattice(group)
    rng = np.random.default_rng(seed)
    worst, count = 0.0, 0
    for _ in range(pairs):
        b = GridFunction(lat, rng.uniform(-1.0, 1.0, lat.size))
        f = GridFunction(lat, rng.uniform(-1.0, 1.0, lat.size))
        alpha = float(rng.uniform(0.0, group.Q))
        for req in oracle_requests(b, ball, radii, alpha):
            fast = evaluate(f, req)
            slow = oracle_maximal(f, req)
            if not np.array_equal(fast.mask, slow.mask):
                worst = math.inf
                continue
            worst = max(worst, float(np.max(np.abs(fast.values[fast.mask] - slow.values[slow.mask]))))
            count += 1
    return CheckReport("oracle_equivalence", group.name, "identity", worst, IDENTITY_TOL, worst <= IDENTITY_TOL,
                       IDENTITY_TOL, details=(("evaluations", count), ("points", lat.size)))


def oracle_lattice(group: GroupDescriptor) -> tuple[Lattice, tuple[float, ...], Ball]:
    """17 points on R^1, 17^2 on R^2, 9^3 on H^1, with radii and a B0."""
    if group.name == "euclidean1":
        lat = make_lattice(group, 0.125, 1.0, margin=0.5)
        return lat, (0.25, 0.5), Ball((0,), 0.5)
    if group.name == "euclidean2":
        lat = make_lattice(group, 0.125, 1.0, margin=0.5)
        return lat, (0.25, 0.5), Ball((0, 0), 0.5)
    if group.name == "heisenberg1":
        lat = make_lattice(group, 0.25, (1.0, 0.125), margin=0.5)
        return lat, (0.375, 0.5), Ball((0, 0, 0), 0.5)
    raise InputError(f"no oracle lattice for {group.name}")


def oracle_requests(b: GridFunction, ball: Ball, radii, alpha: float) -> list[MaximalRequest]:
    reqs = []
    for mode in MODES:
        reqs += [MaximalRequest("HL", mode=mode, radii=radii),
                 MaximalRequest("fractional", alpha=alpha, mode=mode, radii=radii),
                 MaximalRequest("commutator", b=b, mode=mode, radii=radii),
                 MaximalRequest("nonlinear", b=b, mode=mode, radii=radii)]
    reqs.append(MaximalRequest("local", b=None, ball=ball, mode="containing"))
    return reqs


@timed
def suite_dilation_covariance(lattice: Lattice, f: FunctionSpec, alpha: float, radii: Sequence[float],
                              label: str = "") -> CheckReport:
    """M_alpha(f o delta_2) against 2^-alpha (M_alpha f) o delta_2 on matched points.

    f o delta_2 uses the radii halved; both sides are read where x and
    delta_2 x are core points.
    """
    group = lattice.group
    if len(group.strata_dims) != 1:
        raise InputError("dilation covariance is checked on Euclidean lattices")
    radii = tuple(float(r) for r in radii)
    base = generate_function(f, lattice)
    squeezed = generate_function(f, lattice, scale=0.5)
    big = maximal(base, MaximalRequest("fractional" if alpha else "HL", alpha=alpha, radii=radii))
    small = maximal(squeezed, MaximalRequest("fractional" if alpha else "HL", alpha=alpha,
                                             radii=tuple(r / 2 for r in radii)))
    idx = lattice.indices
    doubled, inside = lattice.flat(2 * idx)
    match = small.mask & inside
    match[match] &= big.mask[doubled[match]]
    lhs = small.values[match]
    rhs = 2.0 ** -alpha * big.values[doubled[match]]
    use = rhs > 0
    err = np.abs(lhs[use] - rhs[use]) / rhs[use]
    k = int(np.argmax(err))
    value = float(err[k])
    where = np.flatnonzero(match)[np.flatnonzero(use)[k]]
    return CheckReport("dilation_covariance", group.name, "analytic", value, COVARIANCE_TOL,
                       value <= COVARIANCE_TOL, COVARIANCE_TOL, label or f.label, beta=None,
                       worst=_point(lattice, where), details=(("alpha", alpha), ("points", int(use.sum()))))


# norm suites ------------------------------------------------------------------


@timed
def suite_chi_morrey(lattice: Lattice, balls: Sequence[Ball], pairs: Sequence[tuple[float, float]],
                     family_radii: Sequence[float]) -> CheckReport:
    """||chi_B||_{L^{p,lambda}} = |B|^((1 - lambda/Q)/p), attained at B itself."""
    Q = lattice.group.Q
    family = BallFamily(lattice, family_radii)
    worst, misses = 0.0, []
    for ball in balls:
        chi = GridFunction(lattice, ball.indicator(lattice).astype(float))
        for p, lam in pairs:
            got = morrey_norm(chi, p, lam, family)
            want = ball.measure(lattice) ** ((1.0 - lam / Q) / p)
            worst = max(worst, abs(got.value - want))
            if got.argmax != (ball.center, ball.radius):
                misses.append(f"{ball.center}@{ball.radius:g}:p={p:g},lambda={lam:g}->{got.argmax}")
    passed = worst == 0.0 and not misses
    return CheckReport("chi_morrey", lattice.group.name, "identity", worst, 0.0, passed, 0.0,
                       worst="; ".join(misses), details=(("balls", len(balls)), ("pairs", len(pairs))))


@timed
def suite_lipschitz_power(lattice: Lattice, beta: float) -> CheckReport:
    """Grid seminorm of rho^beta: exactly 1 on Euclidean lattices, within 1e-9 on H^1."""
    b = generate_symbol(SymbolSpec("power", beta), lattice)
    res = lipschitz_seminorm(b, beta)
    if len(lattice.group.strata_dims) == 1:
        bound, passed = 1.0, res.value == 1.0
    else:
        bound = 1.0 + 1e-9
        passed = 1.0 <= res.value <= bound
    return CheckReport("lipschitz_power", lattice.group.name, "identity", res.value, bound, passed,
                       label=f"exhaustive={res.exhaustive}", beta=beta,
                       details=(("exhaustive", res.exhaustive), ("points", lattice.size)))


@timed
def suite_lip_band(lattice: Lattice, symbols: Sequence[SymbolSpec], beta: float, family_radii: Sequence[float],
                   frozen=None) -> CheckReport:
    """Ratio ||b||_Lambda / ||b||_lip_beta,1 over the symbol family.

    Symbols with both sides zero (constants) satisfy the equivalence
    trivially and are not part of the band.
    """
    family = BallFamily(lattice, family_radii)
    ratios, labels = [], []
    for spec in symbols:
        if spec.kind == "nonlipschitz":
            continue
        b = generate_symbol(spec, lattice)
        lip = lipschitz_seminorm(b, beta).value
        lip1 = lip_beta_p_norm(b, beta, 1, family).value
        if lip == 0 and lip1 == 0:
            continue
        ratios.append(ratio_or_zero(lip, lip1))
        labels.append(spec.label)
    lo, hi = min(ratios), max(ratios)
    bound, passed, how = _regression(hi, None if frozen is None else tuple(frozen))
    if frozen is not None:
        passed = frozen[0] / REGRESSION_SLACK <= lo and hi <= frozen[1] * REGRESSION_SLACK
    return CheckReport("lip_band", lattice.group.name, "regression", hi, bound, passed, REGRESSION_SLACK,
                       beta=beta, worst=labels[int(np.argmax(ratios))],
                       details=(("min_ratio", lo), ("max_ratio", hi), ("symbols", len(ratios)), ("frozen", how)))


# boundedness suites -----------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _replica(lattice: Lattice, symbol: SymbolSpec, f: FunctionSpec, scale: float,
             radii: tuple[float, ...]) -> tuple[GridFunction, GridFunction]:
    """(f_s, M_{b_s} f_s) for replica ``scale``; shared by the boundedness suites."""
    b_s = generate_symbol(symbol, lattice, scale)
    f_s = generate_function(f, lattice, scale)
    req = MaximalRequest(radii=tuple(r * scale for r in radii))
    return f_s, maximal_commutator(b_s, f_s, req)


def _drift(values: Sequence[float]) -> float:
    base = values[0]
    if base == 0:
        return 0.0 if all(v == 0 for v in values) else math.inf
    return max(abs(v / base - 1.0) for v in values)


@timed
def suite_strong_type(lattice: Lattice, symbol: SymbolSpec, functions: Sequence[FunctionSpec],
                      exps: ExponentTuple, radii: Sequence[float], scales: Sequence[float] = (1, 2, 4, 8),
                      frozen=None) -> CheckReport:
    """max over f of ||M_b f||_q / ||f||_p, and its drift over dilated replicas.

    Replica s uses f(delta_{1/s} .), s^beta b(delta_{1/s} .) and radii times s,
    which leaves the continuum ratio unchanged under the Lebesgue relation.
    """
    if exps.relation != "lebesgue":
        raise InputError("the strong-type suite needs the Lebesgue relation")
    per_scale = []
    for s in scales:
        best = 0.0
        for f in functions:
            f_s, g = _replica(lattice, symbol, f, float(s), tuple(radii))
            den = lp_norm(f_s, exps.p)
            if den > 0:
                best = max(best, lp_norm(g, exps.q) / den)
        per_scale.append(best)
    drift = _drift(per_scale)
    bound, reg_ok, how = _regression(per_scale[0], frozen)
    passed = drift <= DRIFT_TOL and reg_ok
    return CheckReport("strong_type", lattice.group.name, "regression", per_scale[0], bound, passed,
                       DRIFT_TOL, symbol.label, exps.beta, exps.p, exps.q, exps.lam, exps.mu,
                       details=(("drift", drift), ("per_scale", ",".join(f"{v:.6g}" for v in per_scale)),
                                ("frozen", how)))


@timed
def suite_weak_type(b: GridFunction, f: GridFunction, beta: float, radii=None, frozen=None,
                    label: str = "") -> CheckReport:
    """sup_t t |{M_b f > t}|^((Q - beta)/Q) / ||f||_1, exact over the value distribution."""
    lat = b.lattice
    Q = lat.group.Q
    norm1 = lp_norm(f, 1)
    if norm1 == 0:
        raise InputError("weak type needs a nonzero f")
    value = weak_quasinorm(maximal_commutator(b, f, MaximalRequest(radii=radii)), Q / (Q - beta)) / norm1
    bound, passed, how = _regression(value, frozen)
    return CheckReport("weak_type", lat.group.name, "regression", value, bound, passed, REGRESSION_SLACK,
                       label, beta, 1.0, Q / (Q - beta), details=(("frozen", how),))


@timed
def suite_morrey(lattice: Lattice, symbol: SymbolSpec, functions: Sequence[FunctionSpec], exps: ExponentTuple,
                 radii: Sequence[float], family_radii: Sequence[float], scales: Sequence[float] = (1,),
                 frozen=None) -> CheckReport:
    """max over f of ||M_b f||_{L^{q,mu}} / ||f||_{L^{p,lambda}}, with replica drift."""
    if exps.relation not in ("spanne", "adams"):
        raise InputError("the Morrey suite needs the spanne or adams relation")
    per_scale = []
    for s in scales:
        fam = BallFamily(lattice, tuple(r * s for r in family_radii))
        best = 0.0
        for f in functions:
            f_s, g = _replica(lattice, symbol, f, float(s), tuple(radii))
            den = morrey_norm(f_s, exps.p, exps.lam, fam).value
            if den > 0:
                best = max(best, morrey_norm(g, exps.q, exps.mu, fam).value / den)
        per_scale.append(best)
    drift = _drift(per_scale)
    bound, reg_ok, how = _regression(per_scale[0], frozen)
    passed = drift <= DRIFT_TOL and reg_ok
    return CheckReport(f"morrey_{exps.relation}", lattice.group.name, "regression", per_scale[0], bound, passed,
                       DRIFT_TOL, symbol.label, exps.beta, exps.p, exps.q, exps.lam, exps.mu,
                       details=(("drift", drift), ("per_scale", ",".join(f"{v:.6g}" for v in per_scale)),
                                ("mu_flagged", exps.mu_flagged), ("frozen", how)))


@timed
def suite_morrey_lambda0(lattice: Lattice, symbol: SymbolSpec, functions: Sequence[FunctionSpec],
                         exps: ExponentTuple, radii: Sequence[float], family_radii: Sequence[float]) -> CheckReport:
    """With lambda = 0 and balls covering the supports, the Morrey ratio is the strong-type ratio."""
    if exps.relation != "lebesgue":
        raise InputError("the lambda = 0 cross-check uses the Lebesgue relation")
    fam = BallFamily(lattice, family_radii)
    morrey, strong = 0.0, 0.0
    for f in functions:
        f_s, g = _replica(lattice, symbol, f, 1.0, tuple(radii))
        if lp_norm(f_s, exps.p) == 0:
            continue
        morrey = max(morrey, morrey_norm(g, exps.q, 0.0, fam).value / morrey_norm(f_s, exps.p, 0.0, fam).value)
        strong = max(strong, lp_norm(g, exps.q) / lp_norm(f_s, exps.p))
    gap = abs(ratio_or_zero(morrey, strong) - 1.0) if strong else morrey
    return CheckReport("morrey_lambda0", lattice.group.name, "identity", gap, 0.02, gap <= 0.02, 0.02,
                       symbol.label, exps.beta, exps.p, exps.q, 0.0, 0.0,
                       details=(("morrey_ratio", morrey), ("strong_ratio", strong)))


# local-maximal suites ---------------------------------------------------------


def functional_terms(b: GridFunction, ball: Ball, beta: float, q: float) -> dict:
    """F(B) and the oscillation chain for one ball.

    F(B) = |B|^(-beta/Q) (mean_B |b - M_B b|^q)^(1/q); the chain is
    |B|^(-1-beta/Q) int_B |b - b_B| = 2 |B|^(-1-beta/Q) int_E |b - b_B|
    <= 2 |B|^(-1-beta/Q) int_E |b - M_B b| <= 2 |B|^(-1-beta/Q) int_B |b - M_B b| <= 2 F(B)
    with E = {b <= b_B}.
    """
    lat = b.lattice
    Q = lat.group.Q
    cell = lat.cell_measure
    members = ball.members(lat)
    vals = b.values[members]
    mb = local_maximal(b, ball).values[members]
    measure = build_stencil(lat, ball.radius).discrete_measure
    avg = float(np.sum(vals) * cell / measure)
    dev = np.abs(vals - mb)
    E = vals <= avg
    norm = measure ** (-1.0 - beta / Q)
    int_E = float(np.sum(np.abs(vals[E] - avg)) * cell)
    int_F = float(np.sum(np.abs(vals[~E] - avg)) * cell)
    return {
        "F": measure ** (-beta / Q) * float(np.mean(dev ** q)) ** (1.0 / q),
        "int_E": int_E, "int_F": int_F,
        "chain": (norm * (int_E + int_F), 2 * norm * int_E, 2 * norm * float(np.sum(dev[E]) * cell),
                  2 * norm * float(np.sum(dev) * cell)),
        "negative_mean": float(np.mean(np.maximum(-vals, 0.0))),
        "gap_mean": float(np.mean(dev)),
        "pointwise_sign_gap": float(np.max(np.maximum(-vals, 0.0) - (mb - vals))),
        "min_b": float(vals.min()),
    }


def ef_balance(b: GridFunction, ball: Ball) -> float:
    """|int_E |b - b_B| - int_F |b - b_B||, which vanishes by definition of b_B."""
    lat = b.lattice
    vals = b.values[ball.members(lat)]
    avg = float(np.sum(vals) * lat.cell_measure / ball.measure(lat))
    E = vals <= avg
    int_E = float(np.sum(np.abs(vals[E] - avg)) * lat.cell_measure)
    int_F = float(np.sum(np.abs(vals[~E] - avg)) * lat.cell_measure)
    return abs(int_E - int_F)


@timed
def suite_ef_balance(lattice: Lattice, radii: Sequence[float], pairs: int = 100, seed: int = 0) -> CheckReport:
    """int_E |b - b_B| = int_F |b - b_B| on seeded (b, B) pairs.

    b is uniform noise in [-1, 1); B has a random radius from ``radii`` and
    a random centre among those whose ball fits.
    """
    rng = np.random.default_rng(seed)
    radii = tuple(float(r) for r in radii)
    worst, where = 0.0, ""
    for _ in range(pairs):
        b = GridFunction(lattice, rng.uniform(-1.0, 1.0, lattice.size))
        r = radii[int(rng.integers(len(radii)))]
        ok = np.flatnonzero(BallFamily(lattice, (r,)).valid(r))
        ball = Ball(tuple(int(v) for v in lattice.indices[ok[int(rng.integers(len(ok)))]]), r)
        gap = ef_balance(b, ball)
        if gap > worst:
            worst, where = gap, f"{ball.center}@{r:g}"
    return CheckReport("ef_balance", lattice.group.name, "identity", worst, BALANCE_TOL, worst <= BALANCE_TOL,
                       BALANCE_TOL, worst=where, details=(("pairs", pairs),))


@timed
def suite_theorem3_functional(b: GridFunction, beta: float, q: float, radii: Sequence[float],
                              centers: Sequence[tuple[int, ...]] = None, spread_gate: bool = True,
                              diagnostic: bool = False, frozen=None, label: str = "") -> CheckReport:
    """F(B) over the balls (centre, r) and its spread across radii.

    The chain and the E/F balance are always asserted, the max of F against
    the frozen regression.  ``spread_gate`` also asserts spread <= 2, which
    is meaningful for symbols homogeneous about the ball centres.
    ``diagnostic`` reports whether the spread reaches 4 (a witness that b is
    not in the Lipschitz class) without ever failing.
    """
    lat = b.lattice
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise RefusalError(f"the functional needs at least 3 radii, got {len(radii)}")
    centers = [tuple([0] * lat.group.dim)] if centers is None else [tuple(c) for c in centers]
    worst_F, worst_ball, spread, chain_gap, balance = 0.0, None, 1.0, -np.inf, 0.0
    for c in centers:
        Fs = []
        for r in radii:
            t = functional_terms(b, Ball(c, r), beta, q)
            Fs.append(t["F"])
            if t["F"] > worst_F:
                worst_F, worst_ball = t["F"], f"{c}@{r:g}"
            balance = max(balance, abs(t["int_E"] - t["int_F"]))
            links = t["chain"] + (2 * t["F"],)
            chain_gap = max(chain_gap, abs(links[0] - links[1]),
                            *(links[i] - links[i + 1] for i in range(1, len(links) - 1)))
        lo, hi = min(Fs), max(Fs)
        spread = max(spread, (hi / lo) if lo > 0 else (1.0 if hi == 0 else math.inf))
    chain_ok = chain_gap <= BALANCE_TOL and balance <= BALANCE_TOL
    details = [("spread", spread), ("balance", balance), ("chain_gap", chain_gap), ("centers", len(centers)),
               ("radii", ",".join(f"{r:g}" for r in radii))]
    if diagnostic:
        witness = spread >= SPREAD_WITNESS
        return CheckReport("theorem3_functional", lat.group.name, "diagnostic", worst_F, None, witness,
                           label=label, beta=beta, q=q, worst=worst_ball,
                           details=details + [("spread_witness", witness)])
    bound, reg_ok, how = _regression(worst_F, frozen)
    passed = chain_ok and reg_ok and (spread <= SPREAD_GATE or not spread_gate)
    return CheckReport("theorem3_functional", lat.group.name, "regression", worst_F, bound, passed,
                       SPREAD_GATE if spread_gate else None, label, beta, q=q, worst=worst_ball,
                       details=details + [("spread_gate", spread_gate), ("frozen", how)])


@timed
def suite_sign(b: GridFunction, balls: Sequence[Ball], label: str = "") -> CheckReport:
    """mean_B b^- = 0 for b >= 0; otherwise mean_B b^- <= mean_B |M_B b - b| ball by ball."""
    lat = b.lattice
    worst, where, nonneg = -np.inf, None, bool(np.all(b.values >= 0))
    for ball in balls:
        t = functional_terms(b, ball, 0.5, 1.0)
        if nonneg:
            gap = t["negative_mean"]  # must be exactly 0
        else:
            gap = max(t["negative_mean"] - t["gap_mean"], t["pointwise_sign_gap"])
        if gap > worst:
            worst, where = gap, f"{ball.center}@{ball.radius:g}"
    passed = worst == 0.0 if nonneg else worst <= BALANCE_TOL
    return CheckReport("sign", lat.group.name, "identity", float(worst), 0.0 if nonneg else BALANCE_TOL, passed,
                       BALANCE_TOL, label, worst=where, details=(("nonnegative", nonneg), ("balls", len(balls))))
