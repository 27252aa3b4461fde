"""Domains, exterior data, grids and lattice direction sets.

Everything here is immutable after construction and safe to share between
workers.  Points are arrays whose last axis has length 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

DOMAIN_KINDS = ("disk", "ellipse", "interval")


class DatumAuditError(ValueError):
    """Sampled datum values fall outside the declared bounds."""


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Strictly convex region: a disk, an axis-aligned ellipse, or an interval.

    The interval kind is the 1-D embedding used for line-only problems: it is
    the open segment ``(c0 - a, c0 + a) x {c1}``.
    """

    kind: str
    center: tuple[float, float] = (0.0, 0.0)
    axes: tuple[float, float] = (1.0, 1.0)
    boundary_samples: int = 256

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "axes", tuple(float(a) for a in self.axes))
        if min(self.axes) <= 0:
            raise ValueError("semi-axes must be positive")
        if self.kind == "disk" and self.axes[0] != self.axes[1]:
            raise ValueError("disk needs equal semi-axes")
        if self.boundary_samples < 3:
            raise ValueError("boundary_samples must be >= 3")

    @classmethod
    def disk(cls, radius=1.0, center=(0.0, 0.0), boundary_samples=256):
        return cls("disk", center, (radius, radius), boundary_samples)

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0), boundary_samples=256):
        return cls("ellipse", center, (a, b), boundary_samples)

    @classmethod
    def interval(cls, lo, hi, y=0.0):
        half = 0.5 * (hi - lo)
        return cls("interval", (0.5 * (lo + hi), y), (half, half), 3)

    @property
    def is_interval(self) -> bool:
        return self.kind == "interval"

    @property
    def diameter(self) -> float:
        return 2.0 * max(self.axes)

    def level(self, x) -> np.ndarray:
        """Ellipse quadratic form; < 1 inside, == 1 on the boundary."""
        x = np.asarray(x, dtype=float)
        d0 = (x[..., 0] - self.center[0]) / self.axes[0]
        if self.is_interval:
            return d0 * d0
        d1 = (x[..., 1] - self.center[1]) / self.axes[1]
        return d0 * d0 + d1 * d1

    def boundary_point(self, angle) -> np.ndarray:
        angle = np.asarray(angle, dtype=float)
        if self.is_interval:
            sign = np.where(np.cos(angle) >= 0, 1.0, -1.0)
            return np.stack([self.center[0] + sign * self.axes[0],
                             np.full_like(sign, self.center[1])], axis=-1)
        return np.stack([self.center[0] + self.axes[0] * np.cos(angle),
                         self.center[1] + self.axes[1] * np.sin(angle)], axis=-1)

    def boundary_sample(self, m: int | None = None) -> np.ndarray:
        m = self.boundary_samples if m is None else m
        return self.boundary_point(2.0 * np.pi * np.arange(m) / m)

    def outward_normal(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.is_interval:
            n = np.zeros_like(y)
            n[..., 0] = np.sign(y[..., 0] - self.center[0])
            return n
        n = np.stack([(y[..., 0] - self.center[0]) / self.axes[0] ** 2,
                      (y[..., 1] - self.center[1]) / self.axes[1] ** 2], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def domain_contains(d: Domain, x) -> np.ndarray | bool:
    """True where ``x`` lies strictly inside ``d`` (boundary points excluded)."""
    x = np.asarray(x, dtype=float)
    inside = d.level(x) < 1.0
    if d.is_interval:
        inside &= x[..., 1] == d.center[1]
    return inside if inside.ndim else bool(inside)


def clip_segment(d: Domain, x, z) -> tuple[float, float]:
    """Parameters ``(t_minus, t_plus)`` where the line ``x + t z`` meets the boundary.

    ``x + t z`` is interior exactly for ``t_minus < t < t_plus``.  ``z`` need
    not be normalized; ``t`` is measured in units of ``z``.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if not domain_contains(d, x):
        raise ValueError(f"clip_segment needs an interior point, got {x.tolist()}")
    tm, tp = _clip(d, x[None, :], z[None, :])
    return float(tm[0]), float(tp[0])


def _clip(d: Domain, x: np.ndarray, z: np.ndarray):
    # Vectorized root-finding for A t^2 + B t + C = 0 with C < 0 (x interior).
    if d.is_interval:
        if np.any(z[..., 1] != 0) or np.any(z[..., 0] == 0):
            raise ValueError("interval domains only admit the axis direction")
        lo = (d.center[0] - d.axes[0] - x[..., 0]) / z[..., 0]
        hi = (d.center[0] + d.axes[0] - x[..., 0]) / z[..., 0]
        return np.minimum(lo, hi), np.maximum(lo, hi)
    a, b = d.axes
    d0 = x[..., 0] - d.center[0]
    d1 = x[..., 1] - d.center[1]
    A = (z[..., 0] / a) ** 2 + (z[..., 1] / b) ** 2
    B = 2.0 * (d0 * z[..., 0] / a**2 + d1 * z[..., 1] / b**2)
    C = (d0 / a) ** 2 + (d1 / b) ** 2 - 1.0
    disc = np.sqrt(B * B - 4.0 * A * C)
    q = -0.5 * (B + np.where(B >= 0, disc, -disc))
    r1 = q / A
    r2 = C / q
    return np.minimum(r1, r2), np.maximum(r1, r2)


def project_to_boundary(d: Domain, x) -> np.ndarray:
    """Closest boundary point to each ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    c = np.asarray(d.center)
    if d.is_interval:
        out[:, 1] = d.center[1]
        out[:, 0] = np.where(x[:, 0] >= c[0], c[0] + d.axes[0], c[0] - d.axes[0])
        return out
    if d.kind == "disk":
        v = x - c
        r = np.linalg.norm(v, axis=1)
        v[r == 0] = (1.0, 0.0)
        r[r == 0] = 1.0
        return c + d.axes[0] * v / r[:, None]
    a, b = d.axes
    for i, p in enumerate(x - c):
        out[i] = c + _ellipse_closest(a, b, p)
    return out


def _ellipse_closest(a: float, b: float, p: np.ndarray) -> np.ndarray:
    # Closest point via the Lagrange parameter t: y_i = a_i^2 p_i / (t + a_i^2).
    sx, sy = (1.0 if p[0] >= 0 else -1.0), (1.0 if p[1] >= 0 else -1.0)
    px, py = abs(p[0]), abs(p[1])
    if py == 0.0 and px < a - b * b / a and a > b:
        # Inside along the major axis, closest point is off-axis.
        x0 = a * a * px / (a * a - b * b)
        y0 = b * math.sqrt(max(0.0, 1.0 - (x0 / a) ** 2))
        return np.array([sx * x0, y0])
    if px == 0.0 and py < b - a * a / b and b > a:
        y0 = b * b * py / (b * b - a * a)
        x0 = a * math.sqrt(max(0.0, 1.0 - (y0 / b) ** 2))
        return np.array([x0, sy * y0])

    def f(t):
        return (a * px / (t + a * a)) ** 2 + (b * py / (t + b * b)) ** 2 - 1.0

    lo = -min(a, b) ** 2 + 1e-14 * max(a, b) ** 2
    hi = max(a, b) * math.hypot(px, py) + 1.0
    while f(hi) > 0:
        hi *= 2.0
    if f(lo) < 0:
        lo = -min(a * a - a * px, b * b - b * py)
    t = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return np.array([sx * a * a * px / (t + a * a), sy * b * b * py / (t + b * b)])


# ---------------------------------------------------------------------------
# Exterior data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExteriorDatum:
    """Bounded continuous exterior datum with declared bounds.

    Subclasses implement ``value`` and ``far_value``; ``far_value(x, z)`` is
    the limit of ``g(x + t z)`` as ``t -> +inf`` (used for the kernel tail).
    """

    lower: float
    upper: float

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def far_value(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.value(np.asarray(x, dtype=float))

    @property
    def bounds(self) -> tuple[float, float]:
        return self.lower, self.upper

    def shifted(self, c: float) -> "ExteriorDatum":
        return Shifted(self.lower + c, self.upper + c, base=self, shift=float(c))


@dataclass(frozen=True)
class Constant(ExteriorDatum):
    level: float = 0.0

    def value(self, x):
        return np.full(x.shape[:-1], self.level)

    def far_value(self, x, z):
        return np.full(np.broadcast_shapes(x.shape, z.shape)[:-1], self.level)


@dataclass(frozen=True)
class ClippedQuadratic(ExteriorDatum):
    """``min(q(x), cap) + shift`` with ``q(x) = sum_i w_i (x_i - c_i)^2``."""

    weights: tuple[float, float] = (1.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    cap: float = 2.0
    shift: float = 0.0

    def _q(self, x):
        return (self.weights[0] * (x[..., 0] - self.center[0]) ** 2
                + self.weights[1] * (x[..., 1] - self.center[1]) ** 2)

    def value(self, x):
        return np.minimum(self._q(x), self.cap) + self.shift

    def far_value(self, x, z):
        x, z = np.broadcast_arrays(x, z)
        grows = self.weights[0] * z[..., 0] ** 2 + self.weights[1] * z[..., 1] ** 2 > 0
        return np.where(grows, self.cap + self.shift, self.value(x))


@dataclass(frozen=True)
class AngularCosine(ExteriorDatum):
    """``amplitude * cos(k * theta + phase) + offset``, theta the polar angle about ``center``."""

    k: int = 2
    amplitude: float = 1.0
    phase: float = 0.0
    offset: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    def _g(self, theta):
        return self.amplitude * np.cos(self.k * theta + self.phase) + self.offset

    def value(self, x):
        theta = np.arctan2(x[..., 1] - self.center[1], x[..., 0] - self.center[0])
        return self._g(theta)

    def far_value(self, x, z):
        x, z = np.broadcast_arrays(x, z)
        return self._g(np.arctan2(z[..., 1], z[..., 0]))


@dataclass(frozen=True)
class SmoothedStep(ExteriorDatum):
    """``low + (high - low) * (1 + tanh((x . e - position) / width)) / 2``."""

    axis: tuple[float, float] = (1.0, 0.0)
    position: float = 0.0
    width: float = 0.25
    low: float = 0.0
    high: float = 1.0

    def value(self, x):
        u = (x[..., 0] * self.axis[0] + x[..., 1] * self.axis[1] - self.position) / self.width
        return self.low + (self.high - self.low) * 0.5 * (1.0 + np.tanh(u))

    def far_value(self, x, z):
        x, z = np.broadcast_arrays(x, z)
        dot = z[..., 0] * self.axis[0] + z[..., 1] * self.axis[1]
        return np.where(dot > 0, self.high, np.where(dot < 0, self.low, self.value(x)))


@dataclass(frozen=True)
class Shifted(ExteriorDatum):
    base: ExteriorDatum = field(default=None)
    shift: float = 0.0

    def value(self, x):
        return self.base.value(x) + self.shift

    def far_value(self, x, z):
        return self.base.far_value(x, z) + self.shift


def constant_datum(level: float) -> Constant:
    return Constant(level, level, level=float(level))


def clipped_quadratic(weights=(1.0, 0.0), center=(0.0, 0.0), cap=2.0, shift=0.0):
    return ClippedQuadratic(shift, cap + shift, weights=tuple(weights),
                            center=tuple(center), cap=cap, shift=shift)


def angular_cosine(k=2, amplitude=1.0, phase=0.0, offset=0.0, center=(0.0, 0.0)):
    return AngularCosine(offset - abs(amplitude), offset + abs(amplitude), k=k,
                         amplitude=amplitude, phase=phase, offset=offset,
                         center=tuple(center))


def smoothed_step(axis=(1.0, 0.0), position=0.0, width=0.25, low=0.0, high=1.0):
    return SmoothedStep(min(low, high), max(low, high), axis=tuple(axis),
                        position=position, width=width, low=low, high=high)


CATALOG: dict[str, Callable[..., ExteriorDatum]] = {
    "constant": constant_datum,
    "clipped_quadratic": clipped_quadratic,
    "angular_cosine": angular_cosine,
    "smoothed_step": smoothed_step,
}


def make_datum(kind: str, params: dict | None = None,
               bounds: tuple[float, float] | None = None) -> ExteriorDatum:
    """Build a catalog datum; ``bounds`` overrides the derived ones when given."""
    try:
        factory = CATALOG[kind]
    except KeyError:
        raise ValueError(f"unknown datum kind {kind!r}") from None
    g = factory(**(params or {}))
    if bounds is not None:
        lo, hi = (float(b) for b in bounds)
        if lo > hi:
            raise ValueError("datum bounds must satisfy lower <= upper")
        g = _with_bounds(g, lo, hi)
    return g


def _with_bounds(g: ExteriorDatum, lo: float, hi: float) -> ExteriorDatum:
    import dataclasses
    return dataclasses.replace(g, lower=lo, upper=hi)


def datum_eval(g: ExteriorDatum, x) -> np.ndarray:
    return g(x)


def datum_bounds(g: ExteriorDatum, d: Domain | None = None, width: float | None = None,
                 n: int = 20000, seed: int = 0) -> tuple[float, float]:
    """Declared ``(m, M)`` of ``g``; audited on ``n`` exterior samples when ``d`` is given.

    Samples are drawn uniformly in the annulus ``1 <= |x|_d <= 1 + width/r``
    (ellipse-scaled), plus the boundary itself.
    """
    if d is not None:
        width = d.diameter * 4.0 if width is None else width
        rng = np.random.default_rng(seed)
        ang = rng.uniform(0.0, 2.0 * np.pi, n)
        scale = 1.0 + rng.uniform(0.0, 1.0, n) * width / min(d.axes)
        pts = np.stack([d.center[0] + d.axes[0] * scale * np.cos(ang),
                        d.center[1] + d.axes[1] * scale * np.sin(ang)], axis=-1)
        pts = np.concatenate([pts, d.boundary_sample(512)])
        vals = g(pts)
        slack = 1e-12 * (1.0 + abs(g.lower) + abs(g.upper))
        if vals.min() < g.lower - slack or vals.max() > g.upper + slack:
            raise DatumAuditError(
                f"datum samples span [{vals.min():.6g}, {vals.max():.6g}] outside "
                f"declared bounds [{g.lower:.6g}, {g.upper:.6g}]")
    return g.lower, g.upper


# ---------------------------------------------------------------------------
# Grids and directions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values on a uniform grid; ``values[i, j]`` sits at ``origin + h*(i, j)``."""

    origin: tuple[float, float]
    h: float
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask shapes differ")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def nodes(self) -> np.ndarray:
        nx, ny = self.shape
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        return np.stack([self.origin[0] + self.h * i, self.origin[1] + self.h * j], axis=-1)

    def interior_nodes(self) -> np.ndarray:
        return self.nodes()[self.mask]

    def interior_values(self) -> np.ndarray:
        return self.values[self.mask]

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.origin, self.h, np.asarray(values, dtype=float), self.mask)

    def with_interior(self, interior: np.ndarray, exterior: ExteriorDatum | None = None):
        """Copy with interior values replaced; masked-out nodes filled from ``exterior``."""
        vals = self.values.copy()
        if exterior is not None:
            vals[~self.mask] = exterior(self.nodes()[~self.mask])
        vals[self.mask] = interior
        return GridFunction(self.origin, self.h, vals, self.mask)

    def interpolate(self, x, g: ExteriorDatum | None = None, d: Domain | None = None):
        """Bilinear interpolation; points outside ``d`` return ``g`` when both are given."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nx, ny = self.shape
        fx = (x[:, 0] - self.origin[0]) / self.h
        i0 = np.clip(np.floor(fx).astype(int), 0, max(nx - 2, 0))
        tx = fx - i0
        if ny == 1:
            out = (1 - tx) * self.values[i0, 0] + tx * self.values[np.minimum(i0 + 1, nx - 1), 0]
        else:
            fy = (x[:, 1] - self.origin[1]) / self.h
            j0 = np.clip(np.floor(fy).astype(int), 0, ny - 2)
            ty = fy - j0
            v = self.values
            out = ((1 - tx) * (1 - ty) * v[i0, j0] + tx * (1 - ty) * v[i0 + 1, j0]
                   + (1 - tx) * ty * v[i0, j0 + 1] + tx * ty * v[i0 + 1, j0 + 1])
        if g is not None and d is not None:
            outside = ~np.asarray(domain_contains(d, x), dtype=bool)
            if outside.any():
                out[outside] = g(x[outside])
        return out


def make_grid(d: Domain, h: float, padding: int = 2) -> GridFunction:
    """Zero grid covering ``d`` with ``padding`` extra nodes per side; the centre is a node."""
    if h <= 0:
        raise ValueError("h must be positive")
    nxh = int(math.ceil(d.axes[0] / h)) + padding
    if d.is_interval:
        origin = (d.center[0] - nxh * h, d.center[1])
        shape = (2 * nxh + 1, 1)
    else:
        nyh = int(math.ceil(d.axes[1] / h)) + padding
        origin = (d.center[0] - nxh * h, d.center[1] - nyh * h)
        shape = (2 * nxh + 1, 2 * nyh + 1)
    grid = GridFunction(origin, h, np.zeros(shape), np.zeros(shape, dtype=bool))
    mask = np.asarray(domain_contains(d, grid.nodes()), dtype=bool)
    return GridFunction(origin, h, np.zeros(shape), mask)


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Lattice directions ``(p, q)``, one per line (antipodes removed), sorted by ``(p, q)``."""

    vectors: np.ndarray  # int, shape (D, 2)
    h: float

    @classmethod
    def build(cls, width: int, h: float) -> "DirectionSet":
        if width < 1:
            raise ValueError("stencil width must be >= 1")
        vecs = []
        for p in range(0, width + 1):
            for q in range(-width, width + 1):
                if (p, q) == (0, 0) or math.gcd(p, abs(q)) != 1:
                    continue
                if p == 0 and q < 0:
                    continue
                vecs.append((p, q))
        return cls(np.array(sorted(vecs), dtype=int), float(h))

    @classmethod
    def axis(cls, h: float) -> "DirectionSet":
        return cls(np.array([[1, 0]], dtype=int), float(h))

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def norms(self) -> np.ndarray:
        return np.hypot(self.vectors[:, 0], self.vectors[:, 1])

    @property
    def units(self) -> np.ndarray:
        return self.vectors / self.norms[:, None]

    @property
    def steps(self) -> np.ndarray:
        """Lattice step length along each direction."""
        return self.h * self.norms


@dataclass(frozen=True)
class FracParams:
    s: float
    radius: float
    tol_fp: float = 1e-8
    tol_res: float = 1e-6
    max_iter: int = 200000

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if self.radius <= 0 or self.tol_fp <= 0 or self.tol_res <= 0 or self.max_iter <= 0:
            raise ValueError("radius, tolerances and max_iter must be positive")

    @property
    def c(self) -> float:
        from .frac1d import frac_constant
        return frac_constant(self.s)

    @classmethod
    def for_domain(cls, s: float, d: Domain, datum: ExteriorDatum | None = None,
                   radius_factor: float = 8.0, **kw) -> "FracParams":
        """Defaults: radius = 8 diameters, tolerances scaled by ``M - m + 1``."""
        scale = 1.0 if datum is None else datum.upper - datum.lower + 1.0
        kw.setdefault("tol_fp", 1e-8 * scale)
        kw.setdefault("tol_res", 1e-6 * scale)
        return cls(s, radius_factor * d.diameter, **kw)

    def check_domain(self, d: Domain) -> None:
        if self.radius <= d.diameter:
            raise ValueError("truncation radius must exceed the domain diameter")
