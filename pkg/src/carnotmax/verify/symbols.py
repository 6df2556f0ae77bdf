"""Symbols b and test functions f, defined on the continuum.

Each generator is a vectorised expression of the group point, sampled on a
lattice at the end.  That keeps a symbol the same function when the lattice
is refined or when a suite works with a dilated replica: ``scale=s`` samples
x -> s^beta b(delta_{1/s} x) for symbols and x -> f(delta_{1/s} x) for test
functions.  The beta power keeps the Lipschitz seminorm unchanged under the
rescaling, and for b = rho^beta the replica is b itself.

RandomLipschitz draws seeded noise on a coarse anchor lattice, projects it
onto the constraint u(a) <= u(a') + dist(a, a')^beta by repeated sweeps, and
extends the result to the whole group by inf-convolution with dist^beta.
The extension agrees with the projected noise on the anchors and is
beta-Holder with constant 1, whatever lattice it is later sampled on.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, InputError
from ..groups import GroupDescriptor
from ..lattice import GridFunction, Lattice, make_lattice, sample

SYMBOL_KINDS = ("power", "shifted_power", "constant", "nonlipschitz", "random_lipschitz")
FUNCTION_KINDS = ("ball", "bump", "noise")

# anchors are consumed in blocks of this many rows when extending
_CHUNK_ELEMENTS = 2_000_000


def smooth_cutoff(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for s <= 1/2, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    u = np.clip(2.0 * (1.0 - s), 0.0, 1.0)  # 1 at s = 1/2, 0 at s = 1

    def g(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    return g(u) / (g(u) + g(1.0 - u))


@dataclass(frozen=True)
class SymbolSpec:
    """Which b to build.

    ``center`` is used by ``shifted_power``; ``value`` by ``constant``;
    ``grain`` and ``half_extent`` fix the anchor lattice of
    ``random_lipschitz`` (so the symbol does not depend on the sampling
    lattice).  Its raw noise lies in [0, amplitude * grain^beta): with
    amplitude <= 1/2 each anchor's basin is at least grain * 2^(-1/beta)
    wide, so the symbol has no features far below the anchor scale.
    """

    kind: str
    beta: float = 0.5
    center: tuple[float, ...] | None = None
    value: float = 1.0
    seed: int = 0
    grain: float = 0.25
    half_extent: tuple[float, ...] | None = None
    amplitude: float = 0.5

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise InputError(f"unknown symbol kind {self.kind!r}; expected one of {SYMBOL_KINDS}")
        if not 0.0 < self.beta < 1.0:
            raise InputError(f"beta must lie in (0, 1), got {self.beta}")
        if self.kind == "random_lipschitz" and self.half_extent is None:
            raise InputError("random_lipschitz needs the anchor half_extent")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.half_extent is not None:
            object.__setattr__(self, "half_extent", tuple(float(v) for v in np.atleast_1d(self.half_extent)))

    @property
    def label(self) -> str:
        extra = {"shifted_power": f"@{self.center}", "constant": f"={self.value:g}",
                 "random_lipschitz": f"#seed{self.seed}"}.get(self.kind, "")
        return f"{self.kind}{extra}"

    @property
    def nonnegative(self) -> bool:
        return self.kind != "constant" or self.value >= 0


def project_lipschitz(group: GroupDescriptor, anchors: np.ndarray, values: np.ndarray, beta: float,
                      max_sweeps: int | None = None) -> tuple[np.ndarray, int]:
    """Sweep u(a) <- min(u(a), min_a' u(a') + dist(a', a)^beta) until nothing moves.

    Returns the fixpoint and the number of sweeps.  Raises ConvergenceError
    after ``max_sweeps`` (default 10 x anchors).
    """
    n = len(values)
    max_sweeps = 10 * n if max_sweeps is None else max_sweeps
    cost = group.dist(anchors[:, None, :], anchors[None, :, :]) ** beta
    u = np.asarray(values, dtype=float).copy()
    for sweep in range(1, max_sweeps + 1):
        new = np.minimum(u, np.min(u[:, None] + cost, axis=0))
        if np.array_equal(new, u):
            return u, sweep
        u = new
    worst = float(np.max(u[:, None] - u[None, :] - cost.T))
    raise ConvergenceError(f"Lipschitz projection did not settle after {max_sweeps} sweeps "
                           f"({n} anchors, worst violation {worst:.3g})")


@functools.lru_cache(maxsize=32)
def _anchors(group: GroupDescriptor, spec: SymbolSpec) -> tuple[np.ndarray, np.ndarray]:
    anchor_lat = make_lattice(group, spec.grain, spec.half_extent, margin=spec.grain)
    rng = np.random.default_rng(spec.seed)
    raw = spec.amplitude * spec.grain ** spec.beta * rng.uniform(0.0, 1.0, anchor_lat.size)
    u, _ = project_lipschitz(group, anchor_lat.points, raw, spec.beta)
    return anchor_lat.points, u


def _inf_convolution(group: GroupDescriptor, anchors: np.ndarray, u: np.ndarray, beta: float,
                     x: np.ndarray) -> np.ndarray:
    out = np.empty(len(x))
    step = max(1, _CHUNK_ELEMENTS // len(anchors))
    for s in range(0, len(x), step):
        d = group.dist(anchors[None, :, :], x[s:s + step, None, :])
        out[s:s + step] = np.min(u[None, :] + d ** beta, axis=1)
    return out


def symbol_expr(spec: SymbolSpec, group: GroupDescriptor, h: float | None = None, scale: float = 1.0):
    """Vectorised expression for b.  ``h`` floors the logarithm of ``nonlipschitz``."""
    beta = spec.beta

    def base(x):
        if spec.kind == "power":
            return group.hom_norm(x) ** beta
        if spec.kind == "shifted_power":
            z = np.zeros(group.dim) if spec.center is None else group.point(spec.center)
            return group.dist(z, x) ** beta
        if spec.kind == "constant":
            return np.full(len(x), float(spec.value))
        if spec.kind == "nonlipschitz":
            if h is None:
                raise InputError("nonlipschitz needs the lattice spacing to floor log(1/rho)")
            rho = group.hom_norm(x)
            return np.maximum(0.0, np.log(1.0 / np.maximum(rho, h / 2.0))) * smooth_cutoff(rho)
        anchors, u = _anchors(group, spec)
        return _inf_convolution(group, anchors, u, beta, x)

    if scale == 1.0:
        return base
    return lambda x: scale ** beta * base(group.dilate(1.0 / scale, x))


def generate_symbol(spec: SymbolSpec, lattice: Lattice, scale: float = 1.0) -> GridFunction:
    """Sample the symbol on ``lattice``; deterministic given the spec."""
    nonlip_h = lattice.h / scale if spec.kind == "nonlipschitz" else None
    return sample(symbol_expr(spec, lattice.group, nonlip_h, scale), lattice)


@dataclass(frozen=True)
class FunctionSpec:
    """A nonnegative test function supported in B(e, radius).

    ``ball``: the indicator of B(e, radius).  ``bump``: rho^beta times a
    smooth cutoff at ``radius``.  ``noise``: seeded values, constant on the
    cells of a ``grain`` lattice, restricted to B(e, radius).
    """

    kind: str
    radius: float
    beta: float = 0.5
    seed: int = 0
    grain: float = 1.0 / 32.0

    def __post_init__(self):
        if self.kind not in FUNCTION_KINDS:
            raise InputError(f"unknown function kind {self.kind!r}; expected one of {FUNCTION_KINDS}")
        if not self.radius > 0:
            raise InputError(f"radius must be positive, got {self.radius}")

    @property
    def label(self) -> str:
        return {"ball": f"ball(r={self.radius:g})", "bump": f"bump(r={self.radius:g},beta={self.beta:g})",
                "noise": f"noise(r={self.radius:g},seed={self.seed})"}[self.kind]


def _cell_noise(group: GroupDescriptor, spec: FunctionSpec, x: np.ndarray) -> np.ndarray:
    """Hash the grain cell of each point into a uniform value in [0, 1)."""
    spacing = np.array([spec.grain ** j for j in group.axis_layers])
    cell = np.floor(x / spacing).astype(np.int64)
    key = np.uint64(spec.seed * 0x9E3779B97F4A7C15 % 2 ** 64)
    for k in range(cell.shape[-1]):
        key = key ^ (cell[..., k].astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9 + 2 * k))
        key = (key ^ (key >> np.uint64(31))) * np.uint64(0x94D049BB133111EB)
    return (key >> np.uint64(11)).astype(float) / 2.0 ** 53


def function_expr(spec: FunctionSpec, group: GroupDescriptor, scale: float = 1.0):
    def base(x):
        rho = group.hom_norm(x)
        inside = (rho < spec.radius).astype(float)
        if spec.kind == "ball":
            return inside
        if spec.kind == "bump":
            return rho ** spec.beta * smooth_cutoff(rho / spec.radius)
        return inside * _cell_noise(group, spec, x)

    if scale == 1.0:
        return base
    return lambda x: base(group.dilate(1.0 / scale, x))


def generate_function(spec: FunctionSpec, lattice: Lattice, scale: float = 1.0) -> GridFunction:
    return sample(function_expr(spec, lattice.group, scale), lattice)


def default_functions(radius: float, seed: int = 0, beta: float = 0.5) -> tuple[FunctionSpec, ...]:
    """Indicators at three radii, two rho^beta bumps and five noise fields."""
    balls = tuple(FunctionSpec("ball", radius * k) for k in (0.25, 0.5, 1.0))
    bumps = tuple(FunctionSpec("bump", radius * k, beta) for k in (0.5, 1.0))
    noise = tuple(FunctionSpec("noise", radius, seed=seed + k) for k in range(5))
    return balls + bumps + noise
