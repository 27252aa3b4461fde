"""Audits of computed envelopes: s-convexity along segments, barriers, bounds."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (Domain, DirectionSet, ExteriorDatum, FracParams, GridFunction,
                   domain_contains, project_to_boundary)
from .envelope import EnvelopeResult, fractional_scheme
from .frac1d import LineProblem, solve_dirichlet_1d


def _line_params(params: FracParams, length: float) -> FracParams:
    # the line is parametrized over [0, 1]; lengths scale by 1/length
    return FracParams(params.s, params.radius / length, params.tol_fp, params.tol_res,
                      params.max_iter)


def _u_ext(u: GridFunction, g: ExteriorDatum, d: Domain):
    """The upper g-extension of ``u`` as a function of points."""
    def f(pts):
        return u.interpolate(pts, g, d)
    return f


# ---------------------------------------------------------------------------
# s-convexity along segments
# ---------------------------------------------------------------------------


@dataclass
class SegmentReport:
    segments: np.ndarray      # (S, 2, 2) endpoints (x, y)
    violations: np.ndarray    # worst u - v per segment
    tol: float

    @property
    def max_violation(self) -> float:
        return float(self.violations.max()) if self.violations.size else -math.inf

    @property
    def passed(self) -> bool:
        return bool(np.all(self.violations <= self.tol))


def random_segments(d: Domain, count: int, seed: int, min_length: float = 0.1) -> np.ndarray:
    """``count`` segments with endpoints uniform in ``d`` (seeded)."""
    rng = np.random.default_rng(seed)
    out = []
    lo = np.array(d.center) - np.array(d.axes)
    hi = np.array(d.center) + np.array(d.axes)
    while len(out) < count:
        pts = rng.uniform(lo, hi, size=(2, 2))
        if d.is_interval:
            pts[:, 1] = d.center[1]
        if not np.all(domain_contains(d, pts)):
            continue
        if np.linalg.norm(pts[0] - pts[1]) < min_length * d.diameter:
            continue
        out.append(pts)
    return np.array(out)


def segment_violation(u: GridFunction, g: ExteriorDatum, d: Domain, params: FracParams,
                      x, y, nodes: int | None = None) -> float:
    """Worst ``u(p(t)) - v(t)`` over interior nodes of the segment ``p(t) = t x + (1-t) y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (domain_contains(d, x) and domain_contains(d, y)):
        raise ValueError("segment endpoints must lie inside the domain")
    length = float(np.linalg.norm(x - y))
    if nodes is None:
        nodes = max(16, int(math.ceil(length / u.h)))
    ue = _u_ext(u, g, d)
    direc = (x - y) / length

    def along(t):
        t = np.asarray(t, dtype=float)
        return y + t[..., None] * (x - y)

    def exterior(t):
        return ue(along(t))

    def far_plus(t):
        return g.far_value(along(t), direc)

    def far_minus(t):
        return g.far_value(along(t), -direc)

    prob = LineProblem.on_interval(0.0, 1.0, nodes, exterior, far_minus, far_plus)
    v = solve_dirichlet_1d(prob, _line_params(params, length))
    t = prob.coords(np.arange(prob.n))
    return float(np.max(ue(along(t)) - v))


def _segment_job(args):
    return segment_violation(*args)


def s_convexity_check(u: GridFunction, g: ExteriorDatum, d: Domain, params: FracParams,
                      segments: np.ndarray, tol: float, workers: int = 1) -> SegmentReport:
    """Compare ``u`` with the s-harmonic replacement of its own trace on each segment.

    Segments are independent; with ``workers > 1`` they run in a process pool
    and the violations come back in segment order.
    """
    segments = np.asarray(segments, dtype=float)
    jobs = [(u, g, d, params, seg[0], seg[1]) for seg in segments]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            viol = list(pool.map(_segment_job, jobs))
    else:
        viol = [_segment_job(j) for j in jobs]
    return SegmentReport(segments, np.array(viol, dtype=float), tol)


# ---------------------------------------------------------------------------
# Barriers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BarrierSpec:
    """Parameters of the upper (1-D) or lower (paraboloid) barrier at ``x0``."""

    kind: str
    x0: tuple[float, float]
    eta: float
    x_hat: tuple[float, float] | None = None   # upper
    theta: float | None = None                 # upper
    cap: float | None = None                   # upper: defaults to max g
    slope: float | None = None                 # lower: K
    eps: float | None = None                   # lower: convexity weight
    kappa: float | None = None                 # lower: strip width

    def __post_init__(self):
        if self.kind not in ("upper", "lower"):
            raise ValueError("barrier kind must be 'upper' or 'lower'")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.kind == "upper":
            if self.x_hat is None or self.theta is None or self.theta <= 0:
                raise ValueError("upper barrier needs x_hat and theta > 0")
        else:
            if None in (self.slope, self.eps, self.kappa):
                raise ValueError("lower barrier needs slope, eps and kappa")
            if self.slope <= 0 or self.kappa <= 0 or self.eps < 0:
                raise ValueError("lower barrier needs slope > 0, kappa > 0 and eps >= 0")


def calibrate_theta(g: ExteriorDatum, d: Domain, x0, x_hat, eta: float,
                    theta_max: float | None = None, samples: int = 400) -> float:
    """Largest collar ``theta`` with ``g <= g(x0) + eta/3`` on the ray behind ``x0`` (bisection)."""
    x0 = np.asarray(x0, dtype=float)
    z = np.asarray(x_hat, dtype=float) - x0
    z /= np.linalg.norm(z)
    level = float(g(x0)) + eta / 3.0
    theta_max = d.diameter if theta_max is None else theta_max

    def ok(theta):
        t = -np.linspace(0.0, theta, samples)
        return bool(np.all(g(x0 + t[:, None] * z) <= level))

    if ok(theta_max):
        return float(theta_max)
    lo, hi = 0.0, theta_max
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    if lo <= 0:
        raise ValueError("datum is not continuous enough at x0 for any positive collar")
    return lo


@dataclass
class UpperBarrierReport:
    t: np.ndarray
    w: np.ndarray
    u: np.ndarray
    max_violation: float
    radius: float     # largest t with w_s <= g(x0) + eta on (0, t]
    limit_distance: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def upper_barrier_line(spec: BarrierSpec, g: ExteriorDatum, params: FracParams,
                       nodes: int = 256):
    """Solve for the upper barrier on ``(0, |x0 - x_hat|)``; returns ``(t, w, limit)``."""
    x0 = np.asarray(spec.x0, dtype=float)
    length = float(np.linalg.norm(np.asarray(spec.x_hat) - x0))
    cap = g.upper if spec.cap is None else spec.cap
    low = float(g(x0)) + spec.eta / 3.0
    theta = spec.theta / length

    def exterior(t):
        t = np.asarray(t, dtype=float)
        return np.where((t > -theta) & (t <= 0.0), low, cap)

    prob = LineProblem.on_interval(0.0, 1.0, nodes, exterior, cap, cap)
    w = solve_dirichlet_1d(prob, _line_params(params, length))
    tau = prob.coords(np.arange(prob.n))
    limit = low + tau * (cap - low)
    return tau * length, w, limit


def barrier_upper_check(u_s: EnvelopeResult, spec: BarrierSpec, g: ExteriorDatum,
                        d: Domain, params: FracParams, tol: float, nodes: int = 256):
    if spec.kind != "upper":
        raise ValueError("expected an upper barrier spec")
    t, w, limit = upper_barrier_line(spec, g, params, nodes)
    x0 = np.asarray(spec.x0, dtype=float)
    z = np.asarray(spec.x_hat, dtype=float) - x0
    z /= np.linalg.norm(z)
    pts = x0 + t[:, None] * z
    u = u_s.solution.interpolate(pts, g, d)
    viol = float(np.max(u - w))
    target = float(g(x0)) + spec.eta
    bad = np.nonzero(w > target)[0]
    radius = float(t[bad[0] - 1]) if bad.size and bad[0] > 0 else (0.0 if bad.size else float(t[-1]))
    return UpperBarrierReport(t, w, u, viol, radius, float(np.max(np.abs(w - limit))), tol)


@dataclass(frozen=True)
class LowerBarrier(ExteriorDatum):
    """``g(x0) - eta/2 - K x1' + eps |x'|^2`` on the domain plus strip, ``min g`` beyond."""

    domain: Domain = field(default=None)
    spec: BarrierSpec = field(default=None)
    anchor: float = 0.0

    def local(self, x):
        x0 = np.asarray(self.spec.x0, dtype=float)
        n_in = -self.domain.outward_normal(x0)
        tang = np.array([-n_in[1], n_in[0]])
        rel = x - x0
        x1 = rel @ n_in
        x2 = rel @ tang
        return (self.anchor - self.spec.eta / 2.0 - self.spec.slope * x1
                + self.spec.eps * (x1 * x1 + x2 * x2))

    def in_support(self, x):
        inside = np.asarray(domain_contains(self.domain, x), dtype=bool)
        return inside | (boundary_distance(self.domain, x) <= self.spec.kappa)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self.in_support(x), self.local(x), self.lower)

    def far_value(self, x, z):
        return np.full(np.broadcast_shapes(x.shape, z.shape)[:-1], self.lower)


def boundary_distance(d: Domain, x) -> np.ndarray:
    """Distance from exterior points to the boundary (0 inside)."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 2)
    out = np.zeros(len(flat))
    outside = ~np.asarray(domain_contains(d, flat), dtype=bool)
    if d.kind == "disk":
        r = np.linalg.norm(flat - np.asarray(d.center), axis=1) - d.axes[0]
        out = np.maximum(r, 0.0)
    elif outside.any():
        proj = project_to_boundary(d, flat[outside])
        out[outside] = np.linalg.norm(flat[outside] - proj, axis=1)
    return out.reshape(x.shape[:-1])


def lower_barrier(spec: BarrierSpec, g: ExteriorDatum, d: Domain) -> LowerBarrier:
    return LowerBarrier(g.lower, g.upper, domain=d, spec=spec, anchor=float(g(np.asarray(spec.x0))))


def strip_points(d: Domain, kappa: float, m: int = 720, layers: int = 24) -> np.ndarray:
    y = d.boundary_sample(m)
    n = d.outward_normal(y)
    offs = np.linspace(0.0, kappa, layers + 1)[1:]
    return (y[None, :, :] + offs[:, None, None] * n[None, :, :]).reshape(-1, 2)


@dataclass
class LowerBarrierReport:
    strip_margin: float                  # min of g - u2 on the strip; (a) needs > 0
    strip_witness: np.ndarray
    operator_min: dict[float, float]     # per s: min scaled directional operator; (b) needs > 0
    operator_witness: dict[float, tuple[int, int]]   # (node, direction)
    sandwich_violation: float | None     # max of u~ - u_s on the grid; (c) needs <= tol
    tol: float

    @property
    def strip_ok(self) -> bool:
        return self.strip_margin > 0

    @property
    def operator_ok(self) -> bool:
        return all(v > 0 for v in self.operator_min.values())

    @property
    def sandwich_ok(self) -> bool:
        return self.sandwich_violation is None or self.sandwich_violation <= self.tol

    @property
    def passed(self) -> bool:
        return self.strip_ok and self.operator_ok and self.sandwich_ok


def lower_operator_min(barrier: LowerBarrier, d: Domain, params: FracParams,
                       grid: GridFunction, Z: DirectionSet) -> tuple[float, tuple[int, int]]:
    """Minimum over nodes and directions of the barrier's scaled discrete operator."""
    scheme = fractional_scheme(d, barrier, params, grid, Z)
    vals = barrier(grid.interior_nodes())
    res = scheme.residuals(vals)
    di, node = np.unravel_index(int(np.argmin(res)), res.shape)
    return float(res[di, node]), (int(node), int(di))


def barrier_lower_check(u_s: EnvelopeResult | None, spec: BarrierSpec, g: ExteriorDatum,
                        d: Domain, params_list: list[FracParams], grid: GridFunction,
                        Z: DirectionSet, tol: float) -> LowerBarrierReport:
    """Checks (a) strip inequality, (b) discrete s-convexity for each ``params``, (c) sandwich."""
    if spec.kind != "lower":
        raise ValueError("expected a lower barrier spec")
    bar = lower_barrier(spec, g, d)
    pts = strip_points(d, spec.kappa)
    margin = g(pts) - bar.local(pts)
    k = int(np.argmin(margin))
    op_min, op_wit = {}, {}
    for params in params_list:
        op_min[params.s], op_wit[params.s] = lower_operator_min(bar, d, params, grid, Z)
    sandwich = None
    if u_s is not None:
        nodes = u_s.solution.interior_nodes()
        sandwich = float(np.max(bar(nodes) - u_s.interior))
    return LowerBarrierReport(float(margin[k]), pts[k], op_min, op_wit, sandwich, tol)


def calibrate_lower_barrier(g: ExteriorDatum, d: Domain, x0, eta: float,
                            params_list: list[FracParams], grid: GridFunction,
                            Z: DirectionSet, slopes=(0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
                            kappas=None, eps_max: float = 1.0) -> BarrierSpec | None:
    """Search for ``(K, kappa, eps)`` meeting checks (a) and (b).

    For each ``(K, kappa)`` the largest admissible ``eps`` for (a) is found by
    bisection; the first candidate whose discrete operator is positive for
    every ``params`` wins.  Returns ``None`` if nothing qualifies.
    """
    x0 = tuple(float(c) for c in x0)
    kappas = tuple(d.diameter * f for f in (0.1, 0.05, 0.025)) if kappas is None else kappas
    for kappa, slope in itertools.product(kappas, slopes):
        pts = strip_points(d, kappa)
        gv = g(pts)

        def margin(eps):
            sp = BarrierSpec("lower", x0, eta, slope=slope, eps=eps, kappa=kappa)
            return float(np.min(gv - lower_barrier(sp, g, d).local(pts)))

        if margin(0.0) <= 0:
            continue
        lo, hi = 0.0, eps_max
        if margin(hi) > 0:
            lo = hi
        else:
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if margin(mid) > 0 else (lo, mid)
        eps = 0.5 * lo  # keep a margin inside the admissible range
        if eps <= 0:
            continue
        spec = BarrierSpec("lower", x0, eta, slope=slope, eps=eps, kappa=kappa)
        bar = lower_barrier(spec, g, d)
        if all(lower_operator_min(bar, d, p, grid, Z)[0] > 0 for p in params_list):
            return spec
    return None


# ---------------------------------------------------------------------------
# Bounds and boundary attainment
# ---------------------------------------------------------------------------


@dataclass
class BoundsReport:
    below: float              # max of (m - tol) - u over interior nodes; > 0 is a violation
    above: float              # max of u - (M + tol)
    boundary_deviation: float
    boundary_threshold: float
    worst_node: np.ndarray

    @property
    def bounds_ok(self) -> bool:
        return self.below <= 0 and self.above <= 0

    @property
    def boundary_ok(self) -> bool:
        return self.boundary_deviation <= self.boundary_threshold

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.boundary_ok


def datum_modulus(g: ExteriorDatum, d: Domain, h: float, m: int = 2048) -> float:
    """Sampled modulus of continuity of ``g`` at scale ``h`` on a collar outside the boundary."""
    y = d.boundary_sample(m)
    ring = np.concatenate([y, y + h * d.outward_normal(y)])
    vals = g(ring)
    best = float(np.max(np.abs(vals[:m] - vals[m:])))
    span = max(1, int(math.ceil(h * m / (2 * math.pi * min(d.axes)))))
    for shift in range(1, span + 1):
        other = np.roll(ring.reshape(2, m, 2), shift, axis=1).reshape(-1, 2)
        close = np.linalg.norm(ring - other, axis=1) <= h
        if close.any():
            diff = np.abs(vals - g(other))
            best = max(best, float(diff[close].max()))
    return best


def bounds_and_boundary_check(u_s: EnvelopeResult, g: ExteriorDatum, d: Domain, tol: float,
                              c_b: float = 2.0) -> BoundsReport:
    """Datum bounds on all nodes; ``|u - g(pi(x))| <= c_b (h + omega_g(h))`` within one cell of the boundary."""
    u = u_s.interior
    lo, hi = g.bounds
    below = float(np.max((lo - tol) - u)) if u.size else -math.inf
    above = float(np.max(u - (hi + tol))) if u.size else -math.inf
    nodes = u_s.solution.interior_nodes()
    h = u_s.solution.h
    proj = project_to_boundary(d, nodes)
    near = np.linalg.norm(nodes - proj, axis=1) <= h
    threshold = c_b * (h + datum_modulus(g, d, h))
    if near.any():
        dev = np.abs(u[near] - g(proj[near]))
        k = int(np.argmax(dev))
        return BoundsReport(below, above, float(dev[k]), threshold, nodes[near][k])
    return BoundsReport(below, above, 0.0, threshold, np.zeros(2))
