"""The s -> 1 experiment: fractional envelopes against the classical one.

For every ``s`` the fractional envelope is computed on a shared grid and
compared with the classical convex envelope ``Upsilon`` in the sup norm over
interior nodes.  ``Upsilon`` is itself cross-checked against the exhaustive
hull oracle at a fixed set of probe nodes before it is trusted.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Domain, DirectionSet, ExteriorDatum, FracParams, GridFunction, make_grid
from .envelope import EnvelopeResult, classical_envelope, fractional_envelope, hull_oracle_at

log = logging.getLogger(__name__)

S_MAX = 0.995


class SweepCheckError(RuntimeError):
    """A trend, floor or oracle check failed; ``result`` holds the full tables."""

    def __init__(self, message: str, result: "SweepResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class SweepConfig:
    domain: Domain
    datum: ExteriorDatum
    h: float
    width: int
    s_values: tuple[float, ...]
    radius_factor: float = 8.0
    tol_fp: float | None = None
    tol_res: float | None = None
    max_iter: int = 200000
    padding: int = 2
    thresholds: tuple[float, ...] = (0.6, 0.7, 0.8, 0.9)
    c_f: float = 0.5
    trend_factor: float = 1e-3
    probes: int = 25
    oracle_samples: int | None = None   # defaults to round(4 / h)

    def __post_init__(self):
        s = tuple(float(v) for v in self.s_values)
        if not s:
            raise ValueError("at least one s value is required")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError("s values must be strictly ascending")
        if s[0] <= 0.0 or s[-1] > S_MAX:
            raise ValueError(f"s values must lie in (0, {S_MAX}]")
        if self.probes < 1:
            raise ValueError("probes must be positive")
        object.__setattr__(self, "s_values", s)
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))

    @property
    def floor(self) -> float:
        """``C_f (h + 1/W^2)``: the discretization floor for distances to ``Upsilon``."""
        return self.c_f * (self.h + 1.0 / self.width ** 2)

    @property
    def trend_slack(self) -> float:
        """``trend_factor (M - m)``, floored at rounding level so constant data pass."""
        g = self.datum
        return max(self.trend_factor * (g.upper - g.lower),
                   1e-13 * (1.0 + abs(g.upper) + abs(g.lower)))

    def params(self, s: float) -> FracParams:
        kw = {"max_iter": self.max_iter}
        if self.tol_fp is not None:
            kw["tol_fp"] = self.tol_fp
        if self.tol_res is not None:
            kw["tol_res"] = self.tol_res
        return FracParams.for_domain(s, self.domain, self.datum, self.radius_factor, **kw)


@dataclass
class GapRow:
    threshold: float
    count: int
    spread: float | None
    note: str = ""


@dataclass
class SweepResult:
    s_values: tuple[float, ...]
    envelopes: dict[float, EnvelopeResult] = field(repr=False)
    classical: EnvelopeResult = field(repr=False)
    sup_distance: np.ndarray
    mean_distance: np.ndarray
    iterations: np.ndarray
    probe_nodes: np.ndarray
    probe_classical: np.ndarray
    probe_oracle: np.ndarray
    floor: float
    trend_slack: float
    gap: list[GapRow]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def oracle_gap(self) -> float:
        return float(np.max(np.abs(self.probe_classical - self.probe_oracle)))

    @property
    def oracle_ok(self) -> bool:
        return self.oracle_gap <= self.floor

    @property
    def trend_ok(self) -> bool:
        d = self.sup_distance
        return bool(np.all(np.diff(d) <= self.trend_slack))

    @property
    def floor_ok(self) -> bool:
        return bool(self.sup_distance[-1] <= self.floor)

    @property
    def gap_ok(self) -> bool:
        spreads = [r.spread for r in self.gap if r.spread is not None]
        return all(b <= a for a, b in zip(spreads, spreads[1:]))

    @property
    def improvement(self) -> float:
        """Final sup distance over the first one (``nan`` when the first is 0)."""
        first = self.sup_distance[0]
        return float(self.sup_distance[-1] / first) if first > 0 else float("nan")

    def distance_rows(self) -> list[tuple[float, float, float, int]]:
        return [(s, float(a), float(b), int(n)) for s, a, b, n in
                zip(self.s_values, self.sup_distance, self.mean_distance, self.iterations)]

    def failures(self) -> list[str]:
        out = []
        if not self.oracle_ok:
            out.append(f"classical vs hull oracle gap {self.oracle_gap:.3e} > floor {self.floor:.3e}")
        if not self.trend_ok:
            out.append("sup distance increases beyond the trend slack")
        if not self.floor_ok:
            out.append(f"final sup distance {self.sup_distance[-1]:.3e} > floor {self.floor:.3e}")
        return out


def probe_nodes(d: Domain, grid: GridFunction, count: int = 25) -> np.ndarray:
    """Interior grid nodes nearest to a centre-plus-rings pattern (deterministic)."""
    nodes = grid.interior_nodes()
    rings = max(1, int(np.ceil((count - 1) / 8)))
    targets = [np.asarray(d.center)]
    for r in np.arange(1, rings + 1) / (rings + 1):
        ang = np.arange(8) * np.pi / 4 + r * 0.5
        targets.extend(np.stack([d.center[0] + r * d.axes[0] * np.cos(ang),
                                 d.center[1] + r * d.axes[1] * np.sin(ang)], axis=-1))
    chosen: list[int] = []
    for t in targets[:count]:
        order = np.argsort(np.linalg.norm(nodes - t, axis=1), kind="stable")
        chosen.append(int(next(i for i in order if i not in chosen)))
    return np.array(chosen, dtype=int)


def half_relaxed_gap(envelopes: dict[float, np.ndarray], thresholds) -> list[GapRow]:
    """Sup over nodes of ``max_{s >= s0} u_s - min_{s >= s0} u_s`` per threshold ``s0``.

    Thresholds with a single value above them are skipped; fewer than three
    values are computed but flagged.
    """
    s_sorted = sorted(envelopes)
    rows = []
    for s0 in thresholds:
        sel = [s for s in s_sorted if s >= s0]
        if len(sel) < 2:
            rows.append(GapRow(s0, len(sel), None, "skipped: fewer than two s values"))
            continue
        stack = np.stack([np.asarray(envelopes[s], dtype=float) for s in sel])
        spread = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
        note = "fewer than three s values" if len(sel) < 3 else ""
        rows.append(GapRow(s0, len(sel), spread, note))
    return rows


def _one_s(args) -> tuple[float, EnvelopeResult, float]:
    config, s = args
    grid = make_grid(config.domain, config.h, config.padding)
    Z = DirectionSet.build(config.width, config.h)
    t0 = time.perf_counter()
    res = fractional_envelope(config.domain, config.datum, config.params(s), grid, Z)
    # the assembled scheme is large and not needed downstream
    return s, replace(res, scheme=None), time.perf_counter() - t0


def fractional_envelopes(config: SweepConfig, workers: int = 1
                         ) -> dict[float, tuple[EnvelopeResult, float]]:
    """Envelope and wall time for every ``s``, keyed in ascending order.

    Runs are independent and may execute in a process pool; results do not
    depend on ``workers``.
    """
    jobs = [(config, s) for s in config.s_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            runs = list(pool.map(_one_s, jobs))
    else:
        runs = [_one_s(j) for j in jobs]
    runs.sort(key=lambda r: r[0])
    return {s: (res, dt) for s, res, dt in runs}


def run_convergence_sweep(config: SweepConfig, workers: int = 1,
                          check: bool = True) -> SweepResult:
    """Fractional envelopes for every ``s`` plus the classical reference.

    With ``check`` set, a failed oracle, trend or floor check raises
    :class:`SweepCheckError` carrying the complete result.
    """
    d, g = config.domain, config.datum
    grid = make_grid(d, config.h, config.padding)
    Z = DirectionSet.build(config.width, config.h)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    classical = classical_envelope(d, g, grid, Z, max_iter=max(config.max_iter, 500000))
    timings["classical"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    probes = probe_nodes(d, grid, config.probes)
    m = config.oracle_samples or int(round(4.0 / config.h))
    oracle = hull_oracle_at(d, g, grid.interior_nodes()[probes], m)
    timings["hull_oracle"] = time.perf_counter() - t0

    runs = fractional_envelopes(config, workers)

    envelopes = {}
    sup, mean, iters = [], [], []
    ref = classical.interior
    for s, (res, dt) in runs.items():
        envelopes[s] = res
        timings[f"fractional_s={s:g}"] = dt
        diff = np.abs(res.interior - ref)
        sup.append(float(diff.max()))
        mean.append(float(diff.mean()))
        iters.append(res.iterations)
        log.info("s=%g sup=%.6e mean=%.6e iterations=%d", s, sup[-1], mean[-1], res.iterations)

    gap = half_relaxed_gap({s: r.interior for s, r in envelopes.items()}, config.thresholds)
    result = SweepResult(config.s_values, envelopes, classical, np.array(sup), np.array(mean),
                         np.array(iters, dtype=int), probes, classical.interior[probes], oracle,
                         config.floor, config.trend_slack, gap, timings)
    if check and result.failures():
        raise SweepCheckError("; ".join(result.failures()), result)
    return result
