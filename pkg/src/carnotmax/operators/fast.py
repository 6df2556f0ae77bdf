"""Stencil kernels for M, M_alpha, M_b, [b, M] and M_{B0}.

The sup over balls is a max over a finite :class:`BallFamily`.  In centred
mode the balls are B(x, r); in containing mode they are every admissible
B(z, r) with x in it, which on the lattice means z in x . stencil(r).

Linear integrands (|f|, |b f|) go through run-wise prefix sums and running
maxima along the central axis.  The commutator integrand |b(x) - b(y)| |f(y)|
depends on x; centred balls sum it offset by offset with strided reads, and containing
balls sort their members by b so each member is one lookup.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..lattice import (Ball, BallFamily, GridFunction, Lattice, build_stencil, check_same_lattice,
                       core_mask, dyadic_radii, scatter_max, window_deviation_sums, window_max,
                       window_sums)

VARIANTS = ("HL", "fractional", "commutator", "nonlinear", "local")
MODES = ("centered", "containing")

# bound on the temporary (offsets x centres) arrays of the commutator kernel
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True, eq=False)
class MaximalRequest:
    """What to evaluate.

    ``ball`` is B0 for the local variant; for the other variants in
    containing mode it restricts the family to sub-balls of ``ball`` and
    the output to the points of ``ball``.
    ``radii`` defaults to the lattice's dyadic family.
    """

    variant: str = "HL"
    alpha: float = 0.0
    b: GridFunction | None = None
    ball: Ball | None = None
    mode: str = "centered"
    radii: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.variant in ("commutator", "nonlinear") and self.b is None:
            raise InputError(f"variant {self.variant} needs a symbol b")
        if self.variant == "local" and self.ball is None:
            raise InputError("variant local needs the ball B0")
        if self.radii is not None:
            object.__setattr__(self, "radii", tuple(sorted(float(r) for r in self.radii)))


def local_radii(lattice: Lattice, ball: Ball) -> tuple[float, ...]:
    """Default family for M_{B0}: the single cell, dyadic radii below B0's, and B0's own."""
    dyadic = [r for r in dyadic_radii(lattice, K=64) if r < ball.radius]
    return tuple(sorted({lattice.h / 2.0, *dyadic, ball.radius}))


def resolve(f: GridFunction, req: MaximalRequest) -> tuple[Lattice, BallFamily, np.ndarray]:
    """Validate a request against ``f``; return lattice, family and output mask."""
    lat = f.lattice if req.b is None else check_same_lattice(f, req.b)
    Q = lat.group.Q
    if not 0.0 <= req.alpha < Q:
        raise InputError(f"alpha must lie in [0, {Q}), got {req.alpha}")
    if req.alpha != 0.0 and req.variant != "fractional":
        raise InputError(f"alpha only applies to the fractional variant, not {req.variant}")
    local = req.variant == "local"
    if req.ball is not None and req.mode == "centered" and not local:
        raise InputError("centred mode cannot be restricted to a ball")
    if local:
        radii = req.radii if req.radii is not None else local_radii(lat, req.ball)
        if min(radii) > req.ball.radius:
            raise InputError(f"B0 radius {req.ball.radius} is smaller than the smallest stencil {min(radii)}")
        out = req.ball.indicator(lat)
    else:
        radii = req.radii if req.radii is not None else dyadic_radii(lat)
        if max(radii) > lat.spec.margin + 1e-12:
            raise InputError(f"largest radius {max(radii)} exceeds the lattice margin {lat.spec.margin}")
        out = core_mask(lat)
        if req.ball is not None:
            # only points of B0 lie in a sub-ball of B0
            out = out & req.ball.indicator(lat)
    if not out.any():
        raise InputError("the output region is empty; enlarge the lattice or shrink the margin")
    return lat, BallFamily(lat, radii, within=req.ball), out


def _linear_sup(lat: Lattice, absvals: np.ndarray, family: BallFamily, mode: str,
                alpha: float, out: np.ndarray) -> np.ndarray:
    """sup over the family of |B|^(alpha/Q) * mean_B(absvals) at the output points."""
    Q = lat.group.Q
    centers = lat.indices[out]
    best = np.full(len(centers), -np.inf)
    for stencil in family.stencils:
        weight = stencil.discrete_measure ** (alpha / Q)
        if mode == "centered":
            sums = window_sums(lat, absvals, stencil, centers)
            best = np.maximum(best, sums / stencil.count * weight)
        else:
            valid = np.flatnonzero(family.valid(stencil.radius))
            sums = window_sums(lat, absvals, stencil, lat.indices[valid])
            averages = np.full(lat.size, -np.inf)
            averages[valid] = sums / stencil.count * weight
            if len(valid) * stencil.count < len(centers) * len(stencil.run_half):
                cand = scatter_max(lat, averages, stencil, valid)[out]
            else:
                cand = window_max(lat, averages, stencil, centers)
            best = np.maximum(best, cand)
    return _finish(lat, best, out)


def _commutator_sup(lat: Lattice, b: np.ndarray, absf: np.ndarray, family: BallFamily,
                    mode: str, out: np.ndarray) -> np.ndarray:
    """sup over the family of mean_B |b(x) - b(y)| |f(y)| at the output points."""
    centers = lat.indices[out]
    best = np.full(len(centers), -np.inf)
    for stencil in family.stencils:
        if mode == "centered":
            sums = window_deviation_sums(lat, b, stencil, centers, weights=absf)
            best = np.maximum(best, sums / stencil.count)
            continue
        cand = _ball_commutator_max(lat, b, absf, stencil, np.flatnonzero(family.valid(stencil.radius)))
        best = np.maximum(best, cand[out])
    return _finish(lat, best, out)


def _ball_commutator_max(lat: Lattice, b: np.ndarray, absf: np.ndarray, stencil,
                         sources: np.ndarray) -> np.ndarray:
    """max over source balls B containing x of mean_B |b(x) - b(y)| |f(y)|, at every point.

    For one ball, g(t) = sum_B |t - b(y)| |f(y)| is piecewise linear in t.
    With the members sorted by b and prefix sums of |f| and b |f|, g at the
    member values b(x) costs one lookup each, so a ball costs count log count
    instead of count^2.  Ties in b contribute zero on either side of the split.
    """
    out = np.full(lat.size, -np.inf)
    step = max(1, _CHUNK_ELEMENTS // stencil.count)
    for s in range(0, len(sources), step):
        z = lat.indices[sources[s:s + step]]
        idx = lat.translate(z[None, :, :], stencil.offsets[:, None, :])
        flat, _ = lat.flat(idx)
        order = np.argsort(b[flat], axis=0, kind="stable")
        members = np.take_along_axis(flat, order, axis=0)
        t = b[members]
        w = absf[members]
        f_low = np.cumsum(w, axis=0)
        bf_low = np.cumsum(t * w, axis=0)
        # members up to and including row k lie at or below t[k]
        g = (t * f_low - bf_low) + (bf_low[-1] - bf_low) - t * (f_low[-1] - f_low)
        np.maximum.at(out, members.ravel(), g.ravel() / stencil.count)
    return out


def _finish(lat: Lattice, best: np.ndarray, out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(best)):
        bad = lat.points[out][~np.isfinite(best)][0]
        raise InputError(f"no admissible ball contains the point {bad.tolist()}")
    full = np.full(lat.size, np.nan)
    full[out] = best
    return full


def maximal(f: GridFunction, req: MaximalRequest | None = None) -> GridFunction:
    """Hardy-Littlewood (alpha = 0) or fractional maximal function of f."""
    req = req or MaximalRequest()
    if req.variant not in ("HL", "fractional", "local"):
        raise InputError(f"maximal() evaluates HL, fractional or local, not {req.variant}")
    lat, family, out = resolve(f, req)
    vals = _linear_sup(lat, np.abs(f.values), family, req.mode, req.alpha, out)
    return GridFunction(lat, vals, out)


def maximal_commutator(b: GridFunction, f: GridFunction, req: MaximalRequest | None = None) -> GridFunction:
    """M_b f(x) = sup over balls containing x of mean_B |b(x) - b(y)| |f(y)|."""
    req = req or MaximalRequest()
    lat, family, out = resolve(f, _with_symbol(req, b, "commutator"))
    vals = _commutator_sup(lat, np.asarray(b.values, dtype=float), np.abs(f.values), family, req.mode, out)
    return GridFunction(lat, vals, out)


def nonlinear_commutator(b: GridFunction, f: GridFunction, req: MaximalRequest | None = None) -> GridFunction:
    """[b, M] f = b M(f) - M(b f), both maxima over the same family."""
    req = req or MaximalRequest()
    lat, family, out = resolve(f, _with_symbol(req, b, "nonlinear"))
    mf = _linear_sup(lat, np.abs(f.values), family, req.mode, 0.0, out)
    mbf = _linear_sup(lat, np.abs(b.values * f.values), family, req.mode, 0.0, out)
    return GridFunction(lat, b.values * mf - mbf, out)


def local_maximal(b: GridFunction, ball: Ball, radii=None) -> GridFunction:
    """M_{B0}(b) on the points of B0: sup over family balls B inside B0 containing x."""
    req = MaximalRequest("local", ball=ball, mode="containing", radii=radii)
    return maximal(b, req)


def _with_symbol(req: MaximalRequest, b: GridFunction, variant: str) -> MaximalRequest:
    return MaximalRequest(variant, req.alpha, b, req.ball, req.mode, req.radii)


def evaluate(f: GridFunction, req: MaximalRequest) -> GridFunction:
    """Dispatch on ``req.variant``."""
    if req.variant in ("HL", "fractional", "local"):
        if req.variant == "local":
            req = MaximalRequest("local", ball=req.ball, mode="containing", radii=req.radii)
        return maximal(f, req)
    if req.variant == "commutator":
        return maximal_commutator(req.b, f, req)
    return nonlinear_commutator(req.b, f, req)
