"""Stratified groups in exponential coordinates.

Two instances are provided: Euclidean space R^n (one layer) and the first
Heisenberg group H^1 with coordinates (x, y, t), step 2.  Points are plain
numpy arrays whose last axis holds the coordinates, so every operation is
vectorised over leading axes.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, RefusalError

log = logging.getLogger(__name__)

MIN_RESOLUTION = 64
MIN_C0_SAMPLES = 10_000


@dataclass(frozen=True)
class GroupDescriptor:
    """A stratified group: law, inverse, dilations, gauge and constants.

    ``c0`` (quasi-triangle constant) and ``c1`` (volume of the unit ball)
    start out unknown and are filled in by :func:`calibrate`.  They do not
    take part in equality, so a calibrated and an uncalibrated descriptor of
    the same group compare equal.
    """

    name: str
    strata_dims: tuple[int, ...]
    c0: float | None = field(default=None, compare=False)
    c1: float | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return sum(self.strata_dims)

    @property
    def Q(self) -> int:
        return sum(j * d for j, d in enumerate(self.strata_dims, start=1))

    @property
    def axis_layers(self) -> tuple[int, ...]:
        """Layer index (1-based) of every coordinate axis."""
        return tuple(j for j, d in enumerate(self.strata_dims, start=1) for _ in range(d))

    @property
    def calibrated(self) -> bool:
        return self.c0 is not None and self.c1 is not None

    def with_constants(self, c0: float, c1: float) -> "GroupDescriptor":
        if not c0 >= 1.0:
            raise InputError(f"c0 must be >= 1, got {c0}")
        if not c1 > 0.0:
            raise InputError(f"c1 must be > 0, got {c1}")
        return dataclasses.replace(self, c0=float(c0), c1=float(c1))

    def point(self, a) -> np.ndarray:
        """Validate and return ``a`` as a float array of points."""
        arr = np.asarray(a, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.dim:
            raise InputError(f"{self.name}: expected coordinates of length {self.dim}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError(f"{self.name}: non-finite coordinates")
        return arr

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    # group structure -------------------------------------------------------

    def mul(self, a, b) -> np.ndarray:
        raise NotImplementedError

    def inv(self, a) -> np.ndarray:
        return -self.point(a)

    def dilate(self, r: float, a) -> np.ndarray:
        if not r > 0:
            raise InputError(f"dilation factor must be positive, got {r}")
        a = self.point(a)
        weights = np.array([float(r) ** j for j in self.axis_layers])
        return a * weights

    def hom_norm(self, a) -> np.ndarray:
        raise NotImplementedError

    def dist(self, a, x) -> np.ndarray:
        """rho(a^{-1} x); the ball B(x, r) is {a : dist(a, x) < r}."""
        return self.hom_norm(self.mul(self.inv(a), x))

    # lattice support -------------------------------------------------------
    # A lattice with layer-1 spacing h uses these per-layer spacings; the
    # integer group law and gauge below are exact on it.

    def layer_spacing(self, h: float) -> tuple[float, ...]:
        raise NotImplementedError

    def lattice_mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lattice_gauge(self, idx: np.ndarray) -> tuple[np.ndarray, int]:
        """Integer ``k`` and power ``m`` with rho(point(idx)) = h * k**(1/m)."""
        raise NotImplementedError

    def ball_halfwidths(self, center, r: float) -> np.ndarray:
        """Per-axis half widths of a coordinate box containing B(center, r)."""
        raise NotImplementedError


class EuclideanGroup(GroupDescriptor):
    def mul(self, a, b):
        a, b = self.point(a), self.point(b)
        return a + b

    def hom_norm(self, a):
        a = self.point(a)
        return np.sqrt(np.sum(a * a, axis=-1))

    def layer_spacing(self, h):
        return (float(h),)

    def lattice_mul(self, a, b):
        return np.asarray(a) + np.asarray(b)

    def lattice_gauge(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return np.sum(idx * idx, axis=-1), 2

    def ball_halfwidths(self, center, r):
        return np.full(self.dim, float(r))


class HeisenbergGroup(GroupDescriptor):
    """H^1 with law (x,y,t)(x',y',t') = (x+x', y+y', t+t'+(xy'-yx')/2).

    The gauge is the Koranyi norm ((x^2+y^2)^2 + 16 t^2)^(1/4).
    """

    def mul(self, a, b):
        a, b = self.point(a), self.point(b)
        a, b = np.broadcast_arrays(a, b)
        out = a + b
        out[..., 2] += 0.5 * (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
        return out

    def hom_norm(self, a):
        a = self.point(a)
        r2 = a[..., 0] ** 2 + a[..., 1] ** 2
        # sqrt of sqrt keeps perfect fourth powers exact
        return np.sqrt(np.sqrt(r2 * r2 + 16.0 * a[..., 2] ** 2))

    def layer_spacing(self, h):
        # t-spacing h^2/2 makes left translation by lattice points map the
        # lattice onto itself (the shear (x y' - y x')/2 is a multiple of h^2/2)
        return (float(h), float(h) * float(h) / 2.0)

    def lattice_mul(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        out = a + b
        out[..., 2] += a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        return out

    def lattice_gauge(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        r2 = idx[..., 0] ** 2 + idx[..., 1] ** 2
        return r2 * r2 + 4 * idx[..., 2] ** 2, 4

    def ball_halfwidths(self, center, r):
        c = self.point(center)
        r = float(r)
        shear = 0.5 * r * (abs(c[0]) + abs(c[1]))
        return np.array([r, r, r * r / 4.0 + shear])


def euclidean(n: int) -> EuclideanGroup:
    if n < 1:
        raise InputError(f"dimension must be >= 1, got {n}")
    return EuclideanGroup(name=f"euclidean{n}", strata_dims=(n,))


def heisenberg() -> HeisenbergGroup:
    return HeisenbergGroup(name="heisenberg1", strata_dims=(2, 1))


def get_group(name: str) -> GroupDescriptor:
    if name == "heisenberg1":
        return heisenberg()
    if name.startswith("euclidean"):
        try:
            return euclidean(int(name[len("euclidean"):]))
        except ValueError:
            pass
    raise InputError(f"unknown group {name!r}; expected euclidean<n> or heisenberg1")


# calibration ---------------------------------------------------------------

DEFAULT_RESOLUTION = {"euclidean": 1024, "heisenberg": 256}


def default_resolution(group: GroupDescriptor) -> int:
    return DEFAULT_RESOLUTION["heisenberg" if isinstance(group, HeisenbergGroup) else "euclidean"]


def ball_volume(group: GroupDescriptor, r: float = 1.0, resolution: int = 256) -> float:
    """Midpoint-rule volume of B(e, r) on a box with ``resolution`` cells per axis.

    Haar measure is Lebesgue measure in exponential coordinates, so this is
    just the coordinate volume of {rho < r}.
    """
    if resolution < MIN_RESOLUTION:
        raise RefusalError(
            f"quadrature resolution {resolution} < {MIN_RESOLUTION} cells per axis is too coarse"
        )
    half = group.ball_halfwidths(group.identity(), r)
    widths = 2.0 * half / resolution
    axes = [-h + (np.arange(resolution) + 0.5) * w for h, w in zip(half, widths)]
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1) if group.dim > 1 else None
    count = 0
    for x0 in axes[0]:
        if rest is None:
            pts = np.array([[x0]])
        else:
            pts = np.concatenate([np.full(rest.shape[:-1] + (1,), x0), rest], axis=-1)
        count += int(np.count_nonzero(group.hom_norm(pts) < r))
    return count * float(np.prod(widths))


def calibrate_c1(group: GroupDescriptor, resolution: int | None = None) -> float:
    return ball_volume(group, 1.0, resolution or default_resolution(group))


def _random_points(group: GroupDescriptor, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((n, group.dim))
    rho = group.hom_norm(u)
    scale = 2.0 ** rng.uniform(-4.0, 4.0, size=n)
    s = scale / rho
    weights = np.stack([s ** j for j in group.axis_layers], axis=-1)
    return u * weights


def estimate_c0(group: GroupDescriptor, sample_count: int = MIN_C0_SAMPLES, seed: int = 0) -> float:
    """Largest sampled rho(xy) / (rho(x) + rho(y)).

    Pairs (x, e) are always part of the sample; they give the ratio 1
    exactly, so the estimate is never below 1.
    """
    if sample_count < MIN_C0_SAMPLES:
        raise RefusalError(f"sample_count {sample_count} < {MIN_C0_SAMPLES}")
    rng = np.random.default_rng(seed)
    x = _random_points(group, sample_count, rng)
    y = _random_points(group, sample_count, rng)
    ratio = group.hom_norm(group.mul(x, y)) / (group.hom_norm(x) + group.hom_norm(y))
    e = np.zeros_like(x[:1])
    degenerate = group.hom_norm(group.mul(x[:16], e)) / (group.hom_norm(x[:16]) + group.hom_norm(e))
    return float(max(ratio.max(), degenerate.max()))


def calibrate(group: GroupDescriptor, resolution: int | None = None,
              sample_count: int = MIN_C0_SAMPLES, seed: int = 0) -> GroupDescriptor:
    c1 = calibrate_c1(group, resolution)
    c0 = max(1.0, estimate_c0(group, sample_count, seed))
    return group.with_constants(c0, c1)


# calibration cache -----------------------------------------------------------


def format_calibration(group: GroupDescriptor, resolution: int) -> str:
    if not group.calibrated:
        raise InputError(f"{group.name} is not calibrated")
    return f"group={group.name} Q={group.Q} c0={group.c0!r} c1={group.c1!r} resolution={resolution}"


def parse_calibration_line(line: str) -> tuple[GroupDescriptor, int]:
    fields = dict(tok.split("=", 1) for tok in line.split())
    try:
        group = get_group(fields["group"])
        if int(fields["Q"]) != group.Q:
            raise InputError(f"cache line has Q={fields['Q']} but {group.name} has Q={group.Q}")
        return group.with_constants(float(fields["c0"]), float(fields["c1"])), int(fields["resolution"])
    except KeyError as exc:
        raise InputError(f"malformed calibration line {line!r}: missing {exc}") from None


def read_calibration(path) -> dict[str, tuple[GroupDescriptor, int]]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            group, res = parse_calibration_line(line)
            out[group.name] = (group, res)
    return out


def write_calibration(path, entries: dict[str, tuple[GroupDescriptor, int]]) -> None:
    lines = [format_calibration(g, res) for _, (g, res) in sorted(entries.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_or_calibrate(name: str, cache_path=None, resolution: int | None = None,
                      sample_count: int = MIN_C0_SAMPLES, seed: int = 0) -> GroupDescriptor:
    """Calibrated descriptor for ``name``, reusing a cache file when present."""
    group = get_group(name)
    resolution = resolution or default_resolution(group)
    entries = {}
    if cache_path is not None and Path(cache_path).exists():
        entries = read_calibration(cache_path)
        if name in entries and entries[name][1] == resolution:
            return entries[name][0]
    log.info("calibrating %s at resolution %d", name, resolution)
    group = calibrate(group, resolution, sample_count, seed)
    if cache_path is not None:
        entries[name] = (group, resolution)
        write_calibration(cache_path, entries)
    return group

