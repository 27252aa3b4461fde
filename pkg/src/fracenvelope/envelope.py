"""Fractional and classical convex envelopes on lattice-line stencils.

Both solvers share one structure.  For every interior node ``x`` and every
lattice direction ``z`` the replacement value is affine in the interior
unknowns,

    alpha_z(x) = load_z(x) + sum_y C_z(x, y) u(y),   C_z >= 0,

with the exterior datum folded into ``load``.  A Jacobi sweep sets
``u <- min_z alpha_z``.  Starting from the datum's upper bound the sweeps
decrease monotonically to the fixed point.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from .core import (Domain, DirectionSet, ExteriorDatum, FracParams, GridFunction,
                   _clip)
from .frac1d import ConvergenceError, weights_for


@dataclass(eq=False)
class LineScheme:
    grid: GridFunction
    directions: DirectionSet
    load: np.ndarray             # (D, n)
    coupling: sparse.csr_matrix  # (D*n, n), rows ordered direction-major
    scale: np.ndarray            # (D, n): raw operator = scale * (alpha - u)

    @property
    def n(self) -> int:
        return self.load.shape[1]

    def replace(self, u: np.ndarray) -> np.ndarray:
        """Replacement values ``alpha_z(x)`` for all directions, shape ``(D, n)``."""
        return self.load + (self.coupling @ u).reshape(self.load.shape)

    def residuals(self, u: np.ndarray) -> np.ndarray:
        """Directional operators divided by their diagonal weight."""
        return self.replace(u) - u[None, :]


@dataclass
class ResidualReport:
    min_residual: np.ndarray   # per node, min over directions (scaled)
    argmin: np.ndarray         # index into the direction set
    raw_min: np.ndarray        # same minimum in operator units
    max_abs_min: float
    most_negative: float

    def summary(self) -> dict:
        return {"max_abs_min_residual": self.max_abs_min,
                "most_negative_directional": self.most_negative}


@dataclass
class EnvelopeResult:
    solution: GridFunction
    iterations: int
    final_update: float
    report: ResidualReport
    trace: np.ndarray = field(repr=False)
    scheme: LineScheme | None = field(default=None, repr=False)

    @property
    def interior(self) -> np.ndarray:
        return self.solution.interior_values()


def _interior_index(grid: GridFunction) -> np.ndarray:
    index = np.full(grid.shape, -1, dtype=np.int64)
    index[grid.mask] = np.arange(int(grid.mask.sum()))
    return index


def _lookup(index: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    nx, ny = index.shape
    ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
    out = np.full(ii.shape, -1, dtype=np.int64)
    out[ok] = index[ii[ok], jj[ok]]
    return out


def _check_resolution(d: Domain, grid: GridFunction) -> None:
    nx, ny = grid.mask.sum(axis=0).max(), grid.mask.sum(axis=1).max()
    need = (nx,) if d.is_interval else (nx, ny)
    if min(need) < 8:
        raise ValueError("grid must resolve the domain with at least 8 interior nodes per axis")


def fractional_scheme(d: Domain, g: ExteriorDatum, params: FracParams,
                      grid: GridFunction, Z: DirectionSet) -> LineScheme:
    """Assemble the lattice-line fractional operator for datum ``g``."""
    params.check_domain(d)
    index = _interior_index(grid)
    ii0, jj0 = np.nonzero(grid.mask)
    n = ii0.size
    nodes = grid.interior_nodes()
    ox, oy = grid.origin
    h = grid.h
    D = len(Z)
    load = np.zeros((D, n))
    scale = np.zeros((D, n))
    rows, cols, vals = [], [], []
    arange = np.arange(n)
    for di, ((p, q), ell, unit) in enumerate(zip(Z.vectors, Z.steps, Z.units)):
        w = weights_for(params, ell)
        acc = np.zeros(n)
        for sign in (1, -1):
            any_interior = True
            for k in range(1, w.K + 1):
                ii = ii0 + sign * k * p
                jj = jj0 + sign * k * q
                if any_interior:
                    idx = _lookup(index, ii, jj)
                    inner = idx >= 0
                    any_interior = bool(inner.any())
                else:
                    inner = np.zeros(n, dtype=bool)
                if any_interior:
                    rows.append(arange[inner] + di * n)
                    cols.append(idx[inner])
                    vals.append(np.full(int(inner.sum()), w.omega[k - 1] / w.total))
                    outer = ~inner
                    pts = np.stack([ox + h * ii[outer], oy + h * jj[outer]], axis=-1)
                    acc[outer] += w.omega[k - 1] * g(pts)
                else:
                    pts = np.stack([ox + h * ii, oy + h * jj], axis=-1)
                    acc += w.omega[k - 1] * g(pts)
        acc += w.tail * (g.far_value(nodes, unit[None, :]) + g.far_value(nodes, -unit[None, :]))
        load[di] = acc / w.total
        scale[di] = w.total
    coupling = _assemble(rows, cols, vals, D * n, n)
    return LineScheme(grid, Z, load, coupling, scale)


def classical_scheme(d: Domain, g: ExteriorDatum, grid: GridFunction,
                     Z: DirectionSet) -> LineScheme:
    """Chordal interpolation between lattice neighbours or clipped boundary points."""
    index = _interior_index(grid)
    ii0, jj0 = np.nonzero(grid.mask)
    n = ii0.size
    nodes = grid.interior_nodes()
    D = len(Z)
    load = np.zeros((D, n))
    scale = np.zeros((D, n))
    rows, cols, vals = [], [], []
    arange = np.arange(n)
    for di, ((p, q), ell, unit) in enumerate(zip(Z.vectors, Z.steps, Z.units)):
        tm, tp = _clip(d, nodes, np.broadcast_to(unit, nodes.shape))
        fwd = _lookup(index, ii0 + p, jj0 + q)
        bwd = _lookup(index, ii0 - p, jj0 - q)
        a = np.where(fwd >= 0, ell, np.minimum(tp, ell))
        b = np.where(bwd >= 0, ell, np.minimum(-tm, ell))
        wf = b / (a + b)
        wb = a / (a + b)
        gf = g(nodes + a[:, None] * unit)
        gb = g(nodes - b[:, None] * unit)
        load[di] = np.where(fwd >= 0, 0.0, wf * gf) + np.where(bwd >= 0, 0.0, wb * gb)
        for nb, wt in ((fwd, wf), (bwd, wb)):
            inner = nb >= 0
            rows.append(arange[inner] + di * n)
            cols.append(nb[inner])
            vals.append(wt[inner])
        scale[di] = 2.0 / (a * b)
    coupling = _assemble(rows, cols, vals, D * n, n)
    return LineScheme(grid, Z, load, coupling, scale)


def _assemble(rows, cols, vals, nrows, ncols) -> sparse.csr_matrix:
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    v = np.concatenate(vals) if vals else np.zeros(0)
    mat = sparse.coo_matrix((v, (r, c)), shape=(nrows, ncols)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def jacobi(scheme: LineScheme, u0: np.ndarray, tol: float, max_iter: int):
    """Monotone Jacobi sweeps ``u <- min_z alpha_z(u)``; returns ``(u, iterations, trace)``."""
    u = np.array(u0, dtype=float)
    trace = np.empty(max_iter)
    for it in range(1, max_iter + 1):
        new = scheme.replace(u).min(axis=0)
        delta = float(np.max(np.abs(new - u))) if u.size else 0.0
        trace[it - 1] = delta
        u = new
        if delta <= tol:
            return u, it, trace[:it]
    raise ConvergenceError(f"no convergence after {max_iter} sweeps (last update {delta:.3e})",
                           residual=delta, trace=trace, result=u)


def residual_diagnostics(u: GridFunction | np.ndarray, scheme: LineScheme) -> ResidualReport:
    vals = u.interior_values() if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    res = scheme.residuals(vals)
    if res.shape[1] == 0:
        empty = np.zeros(0)
        return ResidualReport(empty, empty.astype(int), empty, 0.0, 0.0)
    arg = np.argmin(res, axis=0)
    cols = np.arange(res.shape[1])
    mins = res[arg, cols]
    raw = scheme.scale[arg, cols] * mins
    return ResidualReport(mins, arg, raw, float(np.max(np.abs(mins))), float(res.min()))


def _solve(d, g, scheme, grid, tol_fp, tol_res, max_iter) -> EnvelopeResult:
    u0 = np.full(scheme.n, g.upper)
    u, iters, trace = jacobi(scheme, u0, tol_fp, max_iter)
    report = residual_diagnostics(u, scheme)
    sol = grid.with_interior(u, g)
    result = EnvelopeResult(sol, iters, float(trace[-1]), report, trace, scheme)
    if report.max_abs_min > tol_res or report.most_negative < -tol_res:
        raise ConvergenceError(
            f"residual {report.max_abs_min:.3e} exceeds tolerance {tol_res:.3e}",
            residual=report.max_abs_min, trace=trace, result=result)
    return result


def fractional_envelope(d: Domain, g: ExteriorDatum, params: FracParams,
                        grid: GridFunction, Z: DirectionSet) -> EnvelopeResult:
    """s-convex envelope of the exterior datum ``g`` on the grid's interior nodes."""
    if len(Z) == 0:
        raise ValueError("direction set is empty")
    _check_resolution(d, grid)
    scheme = fractional_scheme(d, g, params, grid, Z)
    return _solve(d, g, scheme, grid, params.tol_fp, params.tol_res, params.max_iter)


def classical_envelope(d: Domain, g: ExteriorDatum, grid: GridFunction, Z: DirectionSet,
                       tol_fp: float | None = None, tol_res: float | None = None,
                       max_iter: int = 500000) -> EnvelopeResult:
    """Convex envelope of ``g`` restricted to the boundary."""
    if len(Z) == 0:
        raise ValueError("direction set is empty")
    _check_resolution(d, grid)
    scale = g.upper - g.lower + 1.0
    tol_fp = 1e-8 * scale if tol_fp is None else tol_fp
    tol_res = 1e-6 * scale if tol_res is None else tol_res
    scheme = classical_scheme(d, g, grid, Z)
    return _solve(d, g, scheme, grid, tol_fp, tol_res, max_iter)


# ---------------------------------------------------------------------------
# Hull oracle
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _combinations(m: int, r: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(m), r)), dtype=np.int64)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def hull_envelope_oracle(d: Domain, samples: np.ndarray, values: np.ndarray, x) -> float:
    """Minimum of ``sum l_i g(y_i)`` over convex weights with ``sum l_i y_i = x``.

    Exhaustive over sample pairs and triples (three points suffice in the
    plane).  Raises ``ValueError`` when ``x`` is outside the samples' hull.
    """
    y = np.asarray(samples, dtype=float)
    gv = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    m = len(y)
    if m < 3:
        raise ValueError("need at least three boundary samples")
    span = float(np.max(np.ptp(y, axis=0)))
    eps = 1e-12

    best = math.inf
    tri = _combinations(m, 3)
    for chunk in np.array_split(tri, max(1, len(tri) // 200000)):
        A, B, C = y[chunk[:, 0]], y[chunk[:, 1]], y[chunk[:, 2]]
        area = _cross(B - A, C - A)
        ok = np.abs(area) > eps * span * span
        la = _cross(B - x, C - x)
        lb = _cross(C - x, A - x)
        lc = _cross(A - x, B - x)
        with np.errstate(divide="ignore", invalid="ignore"):
            la, lb, lc = la / area, lb / area, lc / area
        feas = ok & (la >= -eps) & (lb >= -eps) & (lc >= -eps)
        if feas.any():
            v = la * gv[chunk[:, 0]] + lb * gv[chunk[:, 1]] + lc * gv[chunk[:, 2]]
            best = min(best, float(v[feas].min()))

    pairs = _combinations(m, 2)
    A, B = y[pairs[:, 0]], y[pairs[:, 1]]
    seg = B - A
    len2 = np.einsum("ij,ij->i", seg, seg)
    col = np.abs(_cross(seg, x - A)) <= eps * span * span
    lam = np.einsum("ij,ij->i", x - A, seg) / np.where(len2 > 0, len2, 1.0)
    feas = col & (len2 > 0) & (lam >= -eps) & (lam <= 1 + eps)
    if feas.any():
        v = (1 - lam) * gv[pairs[:, 0]] + lam * gv[pairs[:, 1]]
        best = min(best, float(v[feas].min()))

    if not math.isfinite(best):
        raise ValueError("point lies outside the hull of the boundary samples; sample more densely")
    return best


def hull_oracle_at(d: Domain, g: ExteriorDatum, points, m: int | None = None) -> np.ndarray:
    """Hull oracle at several points using ``m`` equally spaced boundary samples."""
    y = d.boundary_sample(m)
    gv = g(y)
    return np.array([hull_envelope_oracle(d, y, gv, p) for p in np.atleast_2d(points)])
