"""Dilation-adapted lattices, grid functions and ball stencils.

A lattice has layer-1 spacing ``h``; the per-layer spacings come from
``group.layer_spacing``.  Every axis has an odd number of points so the
identity is a lattice point.  Lattice points are addressed by centred integer
multi-indices; on these the group law is exact integer arithmetic, which is
what lets a single stencil describe every ball B(x, r) with x on the lattice.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, InputError, RefusalError
from .groups import GroupDescriptor, get_group

log = logging.getLogger(__name__)

MAX_POINTS = 10 ** 8

# bound on the (offsets x centres) index blocks of scatter_max
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class LatticeSpec:
    group: GroupDescriptor
    spacing: float
    half_extent: tuple[float, ...]  # per layer
    margin: float

    def __post_init__(self):
        object.__setattr__(self, "half_extent", tuple(float(v) for v in np.atleast_1d(self.half_extent)))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "margin", float(self.margin))


@dataclass(frozen=True)
class Lattice:
    """Immutable lattice handle built by :func:`build_lattice`."""

    spec: LatticeSpec

    @property
    def group(self) -> GroupDescriptor:
        return self.spec.group

    @property
    def h(self) -> float:
        return self.spec.spacing

    @cached_property
    def axis_spacing(self) -> np.ndarray:
        per_layer = self.group.layer_spacing(self.h)
        return np.array([per_layer[j - 1] for j in self.group.axis_layers])

    @cached_property
    def half_counts(self) -> np.ndarray:
        per_layer = []
        for L, s in zip(self.spec.half_extent, self.group.layer_spacing(self.h)):
            m = L / s
            if abs(m - round(m)) > 1e-9 * max(1.0, m):
                raise InputError(f"half extent {L} is not a multiple of the layer spacing {s}")
            per_layer.append(int(round(m)))
        return np.array([per_layer[j - 1] for j in self.group.axis_layers], dtype=np.int64)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(2 * m + 1) for m in self.half_counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def cell_measure(self) -> float:
        return float(np.prod(self.axis_spacing))

    @cached_property
    def indices(self) -> np.ndarray:
        """Centred multi-indices of all points, row-major, shape (size, dim)."""
        grids = np.meshgrid(*[np.arange(-m, m + 1) for m in self.half_counts], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)

    @cached_property
    def points(self) -> np.ndarray:
        return self.indices * self.axis_spacing

    def to_point(self, idx) -> np.ndarray:
        return np.asarray(idx, dtype=np.int64) * self.axis_spacing

    def to_index(self, point) -> np.ndarray:
        """Exact inverse of :meth:`to_point`; raises for off-lattice points."""
        point = self.group.point(point)
        raw = point / self.axis_spacing
        idx = np.rint(raw)
        if not np.allclose(raw, idx, rtol=0, atol=1e-9):
            raise InputError(f"{point.tolist()} is not a lattice point")
        idx = idx.astype(np.int64)
        if np.any(np.abs(idx) > self.half_counts):
            raise InputError(f"{point.tolist()} lies outside the lattice")
        return idx

    def flat(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Flat row-major positions of centred indices plus an in-bounds mask."""
        idx = np.asarray(idx, dtype=np.int64)
        shifted = idx + self.half_counts
        inside = np.all((shifted >= 0) & (shifted < np.array(self.shape)), axis=-1)
        clipped = np.clip(shifted, 0, np.array(self.shape) - 1)
        return np.ravel_multi_index(tuple(np.moveaxis(clipped, -1, 0)), self.shape), inside

    def translate(self, center, offsets) -> np.ndarray:
        """Index of center . offset under the group law."""
        return self.group.lattice_mul(center, offsets)

    def describe(self) -> str:
        extents = ",".join(repr(v) for v in self.spec.half_extent)
        return f"{self.group.name}:h={self.h!r}:L=[{extents}]"


def build_lattice(spec: LatticeSpec) -> Lattice:
    if not spec.spacing > 0:
        raise InputError(f"spacing must be positive, got {spec.spacing}")
    if len(spec.half_extent) != len(spec.group.strata_dims):
        raise InputError(
            f"{spec.group.name} needs {len(spec.group.strata_dims)} half extents, got {len(spec.half_extent)}"
        )
    if not spec.margin > 0:
        raise InputError(f"margin must be positive, got {spec.margin}")
    lat = Lattice(spec)
    if np.any(lat.half_counts < 1):
        raise InputError("every axis needs at least 3 points")
    n = float(np.prod([2.0 * m + 1 for m in lat.half_counts]))
    if n > MAX_POINTS:
        raise RefusalError(f"lattice would have {n:.3g} points (limit {MAX_POINTS:.0e})")
    return lat


def make_lattice(group: GroupDescriptor, h: float, half_extent: Sequence[float] | float,
                 margin: float | None = None) -> Lattice:
    """Convenience wrapper; the default margin is a quarter of the layer-1 extent."""
    half_extent = tuple(np.atleast_1d(half_extent).astype(float))
    if len(half_extent) == 1 and len(group.strata_dims) > 1:
        raise InputError("give one half extent per layer")
    if margin is None:
        margin = half_extent[0] / 2.0
    return build_lattice(LatticeSpec(group, h, half_extent, margin))


# grid functions ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values on every lattice point.

    Operator outputs are only defined on part of the lattice; ``core`` marks
    that part and the remaining entries hold NaN.
    """

    lattice: Lattice
    values: np.ndarray
    core: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != self.lattice.size:
            raise DataError(f"value array has {vals.size} entries, lattice has {self.lattice.size}")
        core = None
        if self.core is not None:
            core = np.array(self.core, dtype=bool).reshape(-1)
            if core.size != vals.size:
                raise DataError("core mask does not match the lattice")
            vals = np.where(core, vals, np.nan)
        defined = vals if core is None else vals[core]
        if not np.all(np.isfinite(defined)):
            bad = np.flatnonzero(~np.isfinite(vals) & (core if core is not None else True))[0]
            raise DataError(f"non-finite value at {self.lattice.points[bad].tolist()}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if core is not None:
            core.flags.writeable = False
        object.__setattr__(self, "core", core)

    @property
    def mask(self) -> np.ndarray:
        return np.ones(self.lattice.size, dtype=bool) if self.core is None else self.core

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.lattice.shape)

    def at(self, point) -> float:
        flat, _ = self.lattice.flat(self.lattice.to_index(point))
        return float(self.values[flat])

    def replace(self, values, core=None) -> "GridFunction":
        return GridFunction(self.lattice, values, self.core if core is None else core)

    def save(self, path, binary: bool = False) -> None:
        write_grid(self, path, binary=binary)


def check_same_lattice(*fs: GridFunction) -> Lattice:
    lat = fs[0].lattice
    for f in fs[1:]:
        if f.lattice != lat:
            raise DataError(f"lattice mismatch: {lat.describe()} vs {f.lattice.describe()}")
    return lat


def sample(expr: Callable[[np.ndarray], np.ndarray], lattice: Lattice) -> GridFunction:
    """Evaluate a vectorised expression (points of shape (N, dim) -> (N,))."""
    vals = np.asarray(expr(lattice.points), dtype=float)
    vals = np.broadcast_to(vals, (lattice.size,)).copy()
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise DataError(f"expression is not finite at {lattice.points[bad[0]].tolist()}")
    return GridFunction(lattice, vals)


# on-disk format --------------------------------------------------------------


def _header(lat: Lattice, binary: bool) -> str:
    extents = ",".join(repr(v) for v in lat.spec.half_extent)
    fmt = "binary" if binary else "text"
    return (f"group={lat.group.name} h={lat.h!r} extents=[{extents}] layout=row-major "
            f"margin={lat.spec.margin!r} format={fmt}")


def write_grid(f: GridFunction, path, binary: bool = False) -> None:
    header = _header(f.lattice, binary).encode() + b"\n"
    if binary:
        body = f.values.astype("<f8").tobytes()
    else:
        body = "".join(f"{v:.17g}\n" for v in f.values).encode()
    Path(path).write_bytes(header + body)


def read_grid(path, group: GroupDescriptor | None = None) -> GridFunction:
    """Read a grid file.  ``group`` supplies calibration constants if given."""
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    try:
        fields = dict(tok.split("=", 1) for tok in head.decode().split())
        g = get_group(fields["group"])
        if group is not None:
            if group != g:
                raise DataError(f"file holds {g.name}, expected {group.name}")
            g = group
        extents = tuple(float(v) for v in fields["extents"].strip("[]").split(","))
        lat = build_lattice(LatticeSpec(g, float(fields["h"]), extents, float(fields.get("margin", extents[0] / 2))))
        if fields.get("layout") != "row-major":
            raise DataError(f"unsupported layout {fields.get('layout')!r}")
        if fields.get("format", "text") == "binary":
            vals = np.frombuffer(body, dtype="<f8").astype(float)
        else:
            vals = np.array([float(tok) for tok in body.split()])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"cannot parse grid file {path}: {exc}") from None
    core = np.isfinite(vals)
    return GridFunction(lat, vals, None if core.all() else core)


# stencils ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BallStencil:
    """Offsets o with rho(point(o)) < radius, decided by the cell-centre rule.

    Membership is evaluated on the integer gauge of the offset, so it is
    exactly symmetric and exactly left-invariant.  ``runs`` groups the
    offsets into contiguous intervals along the last (central) axis:
    ``run_prefix[k]`` holds the leading indices and the run covers last-axis
    offsets -run_half[k] .. run_half[k].
    """

    radius: float
    offsets: np.ndarray
    cell_measure: float
    run_prefix: np.ndarray
    run_half: np.ndarray
    flagged: bool = False

    @property
    def count(self) -> int:
        return len(self.offsets)

    @property
    def discrete_measure(self) -> float:
        return self.count * self.cell_measure


def _stencil_offsets(lattice: Lattice, r: float) -> np.ndarray:
    group = lattice.group
    half = group.ball_halfwidths(group.identity(), r)
    bounds = np.ceil(half / lattice.axis_spacing).astype(np.int64)
    axes = [np.arange(-b, b + 1) for b in bounds]
    box = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    key, power = group.lattice_gauge(box)
    inside = key < (r / lattice.h) ** power
    return box[inside]


@functools.lru_cache(maxsize=256)
def build_stencil(lattice: Lattice, r: float) -> BallStencil:
    if not r > 0:
        raise InputError(f"radius must be positive, got {r}")
    offsets = _stencil_offsets(lattice, float(r))
    order = np.lexsort(offsets.T[::-1])
    offsets = offsets[order]
    offsets.flags.writeable = False
    prefix, inverse = np.unique(offsets[:, :-1], axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    half = np.zeros(len(prefix), dtype=np.int64)
    np.maximum.at(half, inverse, offsets[:, -1])
    flagged = r < lattice.h
    if flagged:
        log.warning("radius %g is below the lattice spacing %g: single-cell stencil", r, lattice.h)
    return BallStencil(float(r), offsets, lattice.cell_measure, prefix, half, flagged)


def dyadic_radii(lattice: Lattice, r0: float | None = None, K: int | None = None) -> tuple[float, ...]:
    """r0 * 2^k for k = 0..K; defaults r0 = 2h and the largest radius a quarter of the domain."""
    r0 = 2.0 * lattice.h if r0 is None else float(r0)
    if K is None:
        quarter = lattice.spec.half_extent[0] / 2.0
        K = int(math.floor(math.log2(quarter / r0) + 1e-12))
    if K < 0:
        raise InputError(f"r0={r0} exceeds a quarter of the domain")
    return tuple(r0 * 2.0 ** k for k in range(K + 1))


def build_stencils(lattice: Lattice, radii: Sequence[float]) -> list[BallStencil]:
    radii = sorted(float(r) for r in radii)
    if radii and radii[-1] > lattice.spec.margin + 1e-12:
        raise InputError(f"largest radius {radii[-1]} exceeds the margin {lattice.spec.margin}")
    return [build_stencil(lattice, r) for r in radii]


def fits(lattice: Lattice, r: float, centers: np.ndarray) -> np.ndarray:
    """For each centre index, whether its ball center . stencil(r) lies in the lattice."""
    zeros = np.zeros(lattice.size)
    return ~np.isnan(window_sums(lattice, zeros, build_stencil(lattice, r), centers))


@functools.lru_cache(maxsize=256)
def fit_mask(lattice: Lattice, r: float) -> np.ndarray:
    """Lattice points x whose whole ball x . stencil(r) lies in the lattice."""
    ok = fits(lattice, r, lattice.indices)
    ok.flags.writeable = False
    return ok


def core_mask(lattice: Lattice) -> np.ndarray:
    """Points farther than the margin from the boundary (the margin ball fits)."""
    return fit_mask(lattice, lattice.spec.margin)


def _shear(lattice: Lattice, prefix: np.ndarray) -> np.ndarray:
    """Integer matrix A with x . (prefix, 0) = x + (prefix, 0) + A x on lattice indices.

    Both group laws are affine in x for a fixed right factor, so A is read
    off by translating the unit vectors.
    """
    dim = lattice.group.dim
    o = np.append(prefix, 0).astype(np.int64)
    unit = np.eye(dim, dtype=np.int64)
    return (lattice.translate(unit, o[None, :]) - unit - o[None, :]).T


@dataclass
class _RunPlan:
    """Affine read positions of every stencil run for a box of centres.

    Centre u (0-based array index) reads its run k around last-axis position
    ``maps[k] @ u + shifts[k]`` of the padded table.  ``pad`` is the
    (low, high) padding per axis that keeps every read inside the table.
    """

    lo: np.ndarray
    box: tuple[int, ...]
    select: tuple[np.ndarray, ...]
    maps: list
    shifts: list
    halves: np.ndarray
    pad: list


def _run_plan(lattice: Lattice, stencil: BallStencil, centers: np.ndarray, reach: int) -> _RunPlan:
    """Plan reads of ``-half .. half + reach`` along the last axis around every run centre."""
    m = lattice.half_counts
    shape = np.array(lattice.shape)
    dim = len(shape)
    eye = np.eye(dim, dtype=np.int64)
    lo_u, hi_u = centers.min(axis=0) + m, centers.max(axis=0) + m
    corners = np.array(np.meshgrid(*zip(lo_u, hi_u), indexing="ij")).reshape(dim, -1)
    halves = stencil.run_half.astype(np.int64)
    lo_pos, hi_pos = np.zeros(dim, dtype=np.int64), shape - 1
    maps, shifts = [], []
    for prefix, half in zip(stencil.run_prefix, halves):
        A = _shear(lattice, prefix)
        shift = np.append(prefix, 0) - A @ m
        at = (eye + A) @ corners + shift[:, None]
        lo_pos = np.minimum(lo_pos, at.min(axis=1) - eye[-1] * half)
        hi_pos = np.maximum(hi_pos, at.max(axis=1) + eye[-1] * (half + reach))
        maps.append(eye + A)
        shifts.append(shift)
    pad = [(int(a), int(b)) for a, b in zip(-lo_pos, hi_pos - (shape - 1))]
    shifts = [s + np.array([p[0] for p in pad]) for s in shifts]
    select = tuple((centers + m - lo_u).T)
    return _RunPlan(lo_u, tuple(int(v) for v in hi_u - lo_u + 1), select, maps, shifts, halves, pad)


def _read(table: np.ndarray, plan: _RunPlan, k: int, offset: int) -> np.ndarray:
    """View of ``table`` at run k's centre position plus ``offset`` on the last axis, over the box."""
    strides = np.array(table.strides) // table.itemsize
    first = plan.maps[k] @ plan.lo + plan.shifts[k]
    first[-1] += offset
    return np.lib.stride_tricks.as_strided(table.reshape(-1)[int(first @ strides):], plan.box,
                                           tuple(int(v) * table.itemsize for v in strides @ plan.maps[k]),
                                           writeable=False)


def window_sums(lattice: Lattice, values: np.ndarray, stencil: BallStencil,
                centers: np.ndarray | None = None) -> np.ndarray:
    """Sum of ``values`` over center . stencil for every center.

    Uses prefix sums along the last axis, two reads per run, with the runs
    added in stencil order.  Centres whose ball leaves the lattice get NaN.
    ``centers`` defaults to all points.
    """
    centers = lattice.indices if centers is None else np.asarray(centers, dtype=np.int64)
    if len(centers) == 0:
        return np.empty(0)
    plan = _run_plan(lattice, stencil, centers, 1)
    grid = np.asarray(values, dtype=float).reshape(lattice.shape)

    def prefix_sums(g):
        padded = np.pad(g, plan.pad)
        zero = np.zeros(padded.shape[:-1] + (1,), dtype=padded.dtype)
        return np.ascontiguousarray(np.concatenate([zero, np.cumsum(padded, axis=-1)], axis=-1))

    csum = prefix_sums(grid)
    total = np.zeros(plan.box)
    tmp = np.empty(plan.box)
    for k, half in enumerate(plan.halves):
        np.subtract(_read(csum, plan, k, half + 1), _read(csum, plan, k, -half), out=tmp)
        total += tmp
    total = total[plan.select]
    return np.where(_fits(lattice, plan, centers), total, np.nan)


def window_deviation_sums(lattice: Lattice, values: np.ndarray, stencil: BallStencil, centers: np.ndarray,
                          reference: np.ndarray | None = None, weights: np.ndarray | None = None,
                          power: float = 1.0) -> np.ndarray:
    """Sum over y in center . stencil of |ref - values(y)|^power weights(y), per centre.

    ``ref`` is ``reference`` (one entry per centre) or, by default, the
    value at the centre itself.  The integrand depends on the centre, so
    there are no prefix sums: every offset is one strided read of the
    values (and weights) over the box of centres.  Centres whose ball leaves
    the lattice get NaN.
    """
    centers = np.asarray(centers, dtype=np.int64)
    if len(centers) == 0:
        return np.empty(0)
    plan = _run_plan(lattice, stencil, centers, 0)
    grid = np.asarray(values, dtype=float).reshape(lattice.shape)
    vtab = np.ascontiguousarray(np.pad(grid, plan.pad))
    wtab = None
    if weights is not None:
        wtab = np.ascontiguousarray(np.pad(np.asarray(weights, dtype=float).reshape(lattice.shape), plan.pad))
    if reference is None:
        own = grid[tuple(slice(a, a + n) for a, n in zip(plan.lo, plan.box))]
    else:
        own = np.zeros(plan.box)
        own[plan.select] = reference
    total = np.zeros(plan.box)
    tmp = np.empty(plan.box)
    for k, half in enumerate(plan.halves):
        for t in range(-int(half), int(half) + 1):
            np.subtract(own, _read(vtab, plan, k, t), out=tmp)
            np.abs(tmp, out=tmp)
            if power != 1.0:
                np.power(tmp, power, out=tmp)
            if wtab is not None:
                tmp *= _read(wtab, plan, k, t)
            total += tmp
    total = total[plan.select]
    return np.where(_fits(lattice, plan, centers), total, np.nan)


def _fits(lattice: Lattice, plan: _RunPlan, centers: np.ndarray) -> np.ndarray:
    """Whether every run read by ``plan`` stays inside the lattice, per centre.

    Leading coordinates translate additively, so a run's last-axis position
    minus the centre's own last coordinate depends on the leading
    coordinates only.  The extreme run ends are computed on the leading-axis
    box and compared with the lattice bounds.
    """
    shape = np.array(lattice.shape)
    pad_lo = np.array([p[0] for p in plan.pad])
    u = centers + lattice.half_counts
    lead, last = u[:, :-1], u[:, -1]
    sub = plan.box[:-1]
    axes = np.meshgrid(*[np.arange(n) + a for a, n in zip(plan.lo[:-1], sub)], indexing="ij")
    low = np.full(sub, np.iinfo(np.int64).max)
    high = np.full(sub, np.iinfo(np.int64).min)
    ok = np.ones(sub, dtype=bool)
    for M, shift, half in zip(plan.maps, plan.shifts, plan.halves):
        A = M - np.eye(len(shape), dtype=np.int64)
        if A[:-1].any() or A[-1, -1]:
            raise InputError("run geometry needs additive leading coordinates")
        offset = shift - pad_lo  # (prefix, -A m)
        for a in range(len(sub)):
            ok &= (axes[a] + offset[a] >= 0) & (axes[a] + offset[a] < shape[a])
        rel = offset[-1] + sum(A[-1, a] * axes[a] for a in range(len(sub)))
        np.minimum(low, rel - half, out=low)
        np.maximum(high, rel + half, out=high)
    at = tuple((lead - plan.lo[:-1]).T)
    return ok[at] & (last + low[at] >= 0) & (last + high[at] <= shape[-1] - 1)


def window_max(lattice: Lattice, values: np.ndarray, stencil: BallStencil,
               centers: np.ndarray | None = None) -> np.ndarray:
    """Max of ``values`` over center . stencil; off-lattice points count as -inf.

    Each run of the stencil is an interval along the last axis, so its max
    is two reads of a sparse table of dyadic window maxima.
    """
    centers = lattice.indices if centers is None else np.asarray(centers, dtype=np.int64)
    if len(centers) == 0:
        return np.empty(0)
    plan = _run_plan(lattice, stencil, centers, 0)
    grid = np.asarray(values, dtype=float).reshape(lattice.shape)
    table = np.pad(grid, plan.pad, constant_values=-np.inf)
    levels = np.floor(np.log2(2 * plan.halves + 1)).astype(int)
    out = np.full(plan.box, -np.inf)
    level = 0
    for j in np.unique(levels):
        while level < j:
            # table[..., k] becomes the max over k .. k + 2^(level+1) - 1
            step = 2 ** level
            table[..., :-step] = np.maximum(table[..., :-step], table[..., step:])
            table[..., -step:] = -np.inf
            level += 1
        for k in np.flatnonzero(levels == j):
            half = int(plan.halves[k])
            np.maximum(out, _read(table, plan, k, -half), out=out)
            np.maximum(out, _read(table, plan, k, half - 2 ** j + 1), out=out)
    return out[plan.select]


def scatter_max(lattice: Lattice, values: np.ndarray, stencil: BallStencil, sources: np.ndarray) -> np.ndarray:
    """Max of values[z] over the sources z whose ball z . stencil contains each point.

    Equals :func:`window_max` restricted to ``sources`` (the stencil is
    symmetric); cheaper when few centres are admissible.  Points covered by
    no source get -inf.
    """
    out = np.full(lattice.size, -np.inf)
    vals = np.asarray(values, dtype=float)
    step = max(1, _CHUNK_ELEMENTS // stencil.count)
    for s in range(0, len(sources), step):
        z = sources[s:s + step]
        idx = lattice.translate(lattice.indices[z][None, :, :], stencil.offsets[:, None, :])
        flat, inside = lattice.flat(idx)
        np.maximum.at(out, flat[inside], np.broadcast_to(vals[z], flat.shape)[inside])
    return out


def gather(lattice: Lattice, values: np.ndarray, stencil: BallStencil, centers: np.ndarray) -> np.ndarray:
    """values[center . o] for every offset o and centre; shape (count, N).

    The caller guarantees every ball fits (NaN marks the ones that do not).
    """
    idx = lattice.translate(centers[None, :, :], stencil.offsets[:, None, :])
    flat, inside = lattice.flat(idx)
    vals = np.asarray(values, dtype=float)[flat]
    return np.where(inside, vals, np.nan)


# balls and integration ---------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    """A lattice ball B(center, radius); ``center`` is a lattice multi-index."""

    center: tuple[int, ...]
    radius: float

    @classmethod
    def at(cls, lattice: Lattice, point, radius: float) -> "Ball":
        return cls(tuple(int(v) for v in lattice.to_index(point)), float(radius))

    def members(self, lattice: Lattice) -> np.ndarray:
        """Flat indices of the ball's lattice points; raises if it overflows."""
        stencil = build_stencil(lattice, self.radius)
        idx = lattice.translate(np.array(self.center)[None, :], stencil.offsets)
        flat, inside = lattice.flat(idx)
        if not inside.all():
            raise InputError(f"ball {self} does not fit inside the lattice")
        return flat

    def indicator(self, lattice: Lattice) -> np.ndarray:
        out = np.zeros(lattice.size, dtype=bool)
        out[self.members(lattice)] = True
        return out

    def measure(self, lattice: Lattice) -> float:
        return build_stencil(lattice, self.radius).discrete_measure


def integrate(f: GridFunction, ball: Ball | None = None) -> float:
    """Midpoint rule: sum of values times the cell measure, over a ball or all points."""
    lat = f.lattice
    if ball is None:
        vals = f.values[f.mask]
    else:
        members = ball.members(lat)
        if not f.mask[members].all():
            raise InputError(f"ball {ball} leaves the region where the function is defined")
        vals = f.values[members]
    return float(np.sum(vals) * lat.cell_measure)


@dataclass(frozen=True, eq=False)
class BallFamily:
    """Finite family of lattice balls: every admissible centre at every radius.

    A ball B(z, r) is admissible when it lies inside the lattice, inside
    ``region`` (a boolean mask, e.g. where a function is defined) and inside
    the ball ``within`` when those are given.
    """

    lattice: Lattice
    radii: tuple[float, ...]
    within: Ball | None = None
    region: np.ndarray | None = None

    def __post_init__(self):
        radii = tuple(sorted(float(r) for r in self.radii))
        if not radii:
            raise InputError("ball family needs at least one radius")
        object.__setattr__(self, "radii", radii)

    @cached_property
    def stencils(self) -> list[BallStencil]:
        return [build_stencil(self.lattice, r) for r in self.radii]

    @cached_property
    def _valid(self) -> dict:
        return {}

    def valid(self, r: float) -> np.ndarray:
        """Admissible centres for radius ``r`` as a flat boolean mask."""
        r = float(r)
        if r in self._valid:
            return self._valid[r]
        lat = self.lattice
        stencil = build_stencil(lat, r)
        inside = [np.asarray(m, dtype=bool) for m in
                  (self.within.indicator(lat) if self.within is not None else None, self.region) if m is not None]
        if not inside:
            ok = fit_mask(lat, r).copy()
        else:
            # stencils are nested, so admissibility only shrinks as r grows: the centres
            # admissible at the next smaller family radius are the only candidates
            smaller = [x for x in self.radii if x < r]
            if smaller:
                cand = np.flatnonzero(self.valid(smaller[-1]))
            else:
                cand = np.flatnonzero(np.logical_and.reduce(inside))
            keep = np.ones(len(cand), dtype=bool)
            for m in inside:
                # NaN (ball leaves the lattice) never equals the count
                sums = window_sums(lat, m.astype(float), stencil, lat.indices[cand])
                keep &= sums == stencil.count
            ok = np.zeros(lat.size, dtype=bool)
            ok[cand[keep]] = True
        ok.flags.writeable = False
        self._valid[r] = ok
        return ok

    def balls(self):
        """Yield (centre flat index, stencil) for every admissible ball."""
        for stencil in self.stencils:
            for z in np.flatnonzero(self.valid(stencil.radius)):
                yield int(z), stencil

    @property
    def id(self) -> str:
        radii = ",".join(f"{r:g}" for r in self.radii)
        tag = f"{self.lattice.describe()}:radii=[{radii}]"
        if self.within is not None:
            tag += f":within={self.within.center}@{self.within.radius:g}"
        if self.region is not None:
            tag += f":region={int(np.count_nonzero(self.region))}pts"
        return tag
