"""Brute-force reference for the maximal operators.

Nothing here uses stencils, integer group laws or prefix sums.  Every ball is
found by evaluating dist(y, z) = rho(y^{-1} z) in floating point against every
point y of a padded copy of the lattice; a ball is admissible when none of its
points falls outside the real lattice.
"""
from __future__ import annotations

import functools

import numpy as np

from ..errors import RefusalError
from ..lattice import GridFunction, Lattice
from .fast import MaximalRequest, dyadic_radii, local_radii

ORACLE_MAX_POINTS = 10 ** 4


class _NaiveBalls:
    """Exhaustive ball enumeration, memoised per lattice."""

    def __init__(self, lat: Lattice):
        self.lat = lat
        self.cache = {}

    def _cloud(self, r: float):
        lat, group = self.lat, self.lat.group
        corner = lat.half_counts * lat.axis_spacing
        pad = np.ceil(group.ball_halfwidths(corner, r) / lat.axis_spacing).astype(int) + 1
        axes = [np.arange(-m - p, m + p + 1) for m, p in zip(lat.half_counts, pad)]
        idx = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
        in_box = np.all(np.abs(idx) <= lat.half_counts, axis=-1)
        return idx * lat.axis_spacing, in_box

    def members(self, r: float):
        """(members[z, y] over in-lattice y, fits[z]) for every lattice point z."""
        if r in self.cache:
            return self.cache[r]
        lat, group = self.lat, self.lat.group
        cloud, in_box = self._cloud(r)
        inner = cloud[in_box]  # same row-major order as lat.points
        mem = np.zeros((lat.size, lat.size), dtype=bool)
        fits = np.zeros(lat.size, dtype=bool)
        for zi, z in enumerate(lat.points):
            near = group.dist(cloud, z) < r
            fits[zi] = not np.any(near & ~in_box)
            mem[zi] = group.dist(inner, z) < r
        self.cache[r] = (mem, fits)
        return mem, fits


@functools.lru_cache(maxsize=8)
def _naive_balls(lat: Lattice) -> _NaiveBalls:
    return _NaiveBalls(lat)


def oracle_maximal(f: GridFunction, req: MaximalRequest) -> GridFunction:
    """Same contract as :func:`fast.evaluate`, by exhaustive enumeration."""
    lat = f.lattice
    if lat.size > ORACLE_MAX_POINTS:
        raise RefusalError(f"oracle refuses lattices above {ORACLE_MAX_POINTS} points (got {lat.size})")
    group = lat.group
    naive = _naive_balls(lat)

    if req.variant == "local":
        radii = req.radii if req.radii is not None else local_radii(lat, req.ball)
    else:
        radii = req.radii if req.radii is not None else dyadic_radii(lat)

    within = None
    if req.ball is not None:
        c0 = lat.to_point(req.ball.center)
        within = group.dist(lat.points, c0) < req.ball.radius
        if req.variant == "local":
            out = within
    if req.variant != "local":
        out = naive.members(lat.spec.margin)[1]
        if within is not None:
            out = out & within

    admissible = {}
    for r in radii:
        mem, fits = naive.members(r)
        ok = fits.copy()
        if within is not None:
            ok &= ~np.any(mem & ~within[None, :], axis=1)
        admissible[r] = (mem, ok)

    def average(weights, mem_row):
        return np.sum(weights[mem_row]) / np.count_nonzero(mem_row)

    mode = "containing" if req.variant == "local" else req.mode
    absf = np.abs(np.asarray(f.values, dtype=float))
    b = None if req.b is None else np.asarray(req.b.values, dtype=float)

    def sup_linear(vals, alpha):
        res = np.full(lat.size, np.nan)
        for x in np.flatnonzero(out):
            best = -np.inf
            for r in radii:
                mem, ok = admissible[r]
                centers = [x] if mode == "centered" else np.flatnonzero(ok & mem[:, x])
                for z in centers:
                    measure = np.count_nonzero(mem[z]) * lat.cell_measure
                    best = max(best, average(vals, mem[z]) * measure ** (alpha / group.Q))
            res[x] = best
        return res

    def sup_commutator():
        res = np.full(lat.size, np.nan)
        for x in np.flatnonzero(out):
            best = -np.inf
            terms = np.abs(b[x] - b) * absf
            for r in radii:
                mem, ok = admissible[r]
                centers = [x] if mode == "centered" else np.flatnonzero(ok & mem[:, x])
                for z in centers:
                    best = max(best, average(terms, mem[z]))
            res[x] = best
        return res

    if req.variant in ("HL", "fractional", "local"):
        vals = sup_linear(absf, req.alpha)
    elif req.variant == "commutator":
        vals = sup_commutator()
    else:
        vals = b * sup_linear(absf, 0.0) - sup_linear(np.abs(b * f.values), 0.0)
    return GridFunction(lat, vals, out)
