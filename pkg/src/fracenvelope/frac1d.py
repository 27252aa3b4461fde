"""One-dimensional fractional Laplacian with exterior data.

The discrete operator at node ``j`` of a line with spacing ``ell`` is

    L v_j = sum_{k=1}^{K} omega_k (v_{j+k} + v_{j-k} - 2 v_j)
            + tau (g_far^+ + g_far^- - 2 v_j)

where ``omega_1`` carries the quadratic near-cell model plus the transition
cell ``(ell, 3/2 ell)``, ``omega_k`` (k >= 2) is the exact kernel mass of the
cell around ``k ell`` and ``tau`` is the analytic tail beyond ``K ell``.  All
weights are positive, so the scheme is monotone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import matmul_toeplitz, solve, toeplitz

from .core import FracParams

DENSE_LIMIT = 2048

FarField = Union[float, Callable[[np.ndarray], np.ndarray]]


class ConvergenceError(RuntimeError):
    """Iteration stopped at ``max_iter`` without meeting its tolerance."""

    def __init__(self, message, residual=None, trace=None, result=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace
        self.result = result


def frac_constant(s: float) -> float:
    """Normalizing constant ``2^{2s} s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s))``."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    log_c = (2.0 * s * math.log(2.0) + math.log(s) + math.lgamma(s + 0.5)
             - 0.5 * math.log(math.pi) - math.lgamma(1.0 - s))
    return math.exp(log_c)


def _kernel_mass(c: float, s: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # c * int_a^b r^{-1-2s} dr, written to avoid cancellation for b close to a
    return c / (2.0 * s) * a ** (-2.0 * s) * -np.expm1(-2.0 * s * np.log(b / a))


@dataclass(frozen=True, eq=False)
class KernelWeights:
    s: float
    spacing: float
    K: int
    c: float
    near: float          # coefficient of the centred second difference
    omega: np.ndarray    # omega[k-1] multiplies (v_{j+k} + v_{j-k} - 2 v_j)
    tail: float          # kernel mass beyond K * spacing, per side

    @property
    def transition(self) -> float:
        return float(self.omega[0] - self.near)

    @property
    def total(self) -> float:
        """Diagonal weight: sum of all coefficients over both sides."""
        return 2.0 * float(np.sum(self.omega)) + 2.0 * self.tail


def kernel_weights(s: float, ell: float, K: int) -> KernelWeights:
    """Singularity-corrected quadrature weights out to ``K`` nodes per side."""
    if K < 2:
        raise ValueError("K must be at least 2")
    if ell <= 0:
        raise ValueError("spacing must be positive")
    c = frac_constant(s)
    k = np.arange(1, K + 1, dtype=float)
    lo = (k - 0.5) * ell
    hi = (k + 0.5) * ell
    lo[0] = ell
    hi[-1] = K * ell
    omega = _kernel_mass(c, s, lo, hi)
    near = c * ell ** (-2.0 * s) / (2.0 - 2.0 * s)
    omega[0] += near
    tail = c / (2.0 * s) * (K * ell) ** (-2.0 * s)
    return KernelWeights(s, ell, K, c, near, omega, tail)


def weights_for(params: FracParams, ell: float) -> KernelWeights:
    return kernel_weights(params.s, ell, max(2, int(math.ceil(params.radius / ell))))


def _far(value: FarField, t):
    if callable(value):
        return np.asarray(value(t), dtype=float)
    return np.full(np.shape(t), float(value))


@dataclass(eq=False)
class LineProblem:
    """Interior nodes ``t_i = origin + i * spacing``, ``i = 0..n-1``.

    ``exterior`` maps coordinates of non-interior nodes to data values;
    ``far_minus``/``far_plus`` give the datum beyond the truncation radius,
    either as constants or as functions of the interior node coordinate.
    """

    spacing: float
    n: int
    origin: float
    exterior: Callable[[np.ndarray], np.ndarray]
    far_minus: FarField
    far_plus: FarField
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a line problem needs at least one interior node")
        if self.values is None:
            self.values = np.zeros(self.n)
        self.values = np.asarray(self.values, dtype=float)

    @classmethod
    def on_interval(cls, lo: float, hi: float, nodes: int, exterior, far_minus, far_plus,
                    values=None):
        """Interval ``(lo, hi)`` split into ``nodes`` cells; endpoints are exterior."""
        ell = (hi - lo) / nodes
        return cls(ell, nodes - 1, lo + ell, exterior, far_minus, far_plus, values)

    def coords(self, idx) -> np.ndarray:
        return self.origin + np.asarray(idx, dtype=float) * self.spacing

    def with_values(self, values) -> "LineProblem":
        return LineProblem(self.spacing, self.n, self.origin, self.exterior,
                           self.far_minus, self.far_plus, np.asarray(values, dtype=float))


def _neighbour_values(p: LineProblem, K: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    idx_r = j + np.arange(1, K + 1)
    idx_l = j - np.arange(1, K + 1)
    vals = []
    for idx in (idx_r, idx_l):
        inside = (idx >= 0) & (idx < p.n)
        v = np.empty(K)
        v[inside] = p.values[idx[inside]]
        if (~inside).any():
            v[~inside] = p.exterior(p.coords(idx[~inside]))
        vals.append(v)
    return vals[0], vals[1]


def apply_frac_lap_line(p: LineProblem, w: KernelWeights, j: int) -> float:
    """Discrete ``c(s) PV int (v(t+r) - v(t)) |r|^{-1-2s} dr`` at interior node ``j``."""
    if not 0 <= j < p.n:
        raise IndexError("j must be an interior node")
    right, left = _neighbour_values(p, w.K, j)
    t = p.coords(j)
    fm, fp = float(_far(p.far_minus, t)), float(_far(p.far_plus, t))
    vj = p.values[j]
    near = w.near * ((right[0] - vj) + (left[0] - vj))
    far_cells = w.omega.copy()
    far_cells[0] -= w.near
    body = np.sum(far_cells * ((right - vj) + (left - vj)))
    return float(near + body + w.tail * ((fp - vj) + (fm - vj)))


def harmonic_replacement(p: LineProblem, w: KernelWeights, j: int) -> float:
    """Value at node ``j`` making the discrete operator vanish there."""
    if not 0 <= j < p.n:
        raise IndexError("j must be an interior node")
    right, left = _neighbour_values(p, w.K, j)
    t = p.coords(j)
    fm, fp = float(_far(p.far_minus, t)), float(_far(p.far_plus, t))
    num = np.sum(w.omega * (right + left)) + w.tail * (fp + fm)
    return float(num / w.total)


def exterior_load(p: LineProblem, w: KernelWeights) -> np.ndarray:
    """Per-node sum of weighted exterior values plus the tail terms."""
    n, K = p.n, w.K
    m = np.arange(1, K + 1)
    ext_right = p.exterior(p.coords(n - 1 + m))   # index n-1+m
    ext_left = p.exterior(p.coords(-m))           # index -m
    load = np.empty(n)
    for i in range(n):
        # right neighbours i+k >= n  <=>  k >= n-i
        k0 = n - i
        r = np.dot(w.omega[k0 - 1:], ext_right[: K - k0 + 1]) if k0 <= K else 0.0
        k1 = i + 1
        l = np.dot(w.omega[k1 - 1:], ext_left[: K - k1 + 1]) if k1 <= K else 0.0
        load[i] = r + l
    t = p.coords(np.arange(n))
    return load + w.tail * (_far(p.far_minus, t) + _far(p.far_plus, t))


def _coupling_column(n: int, w: KernelWeights) -> np.ndarray:
    col = np.zeros(n)
    m = min(n - 1, w.K)
    col[1:m + 1] = w.omega[:m]
    return col


def line_operator(p: LineProblem, w: KernelWeights, values=None) -> np.ndarray:
    """The discrete operator at every interior node, summed as differences.

    Same sum as :func:`apply_frac_lap_line`, vectorized over nodes, so
    constant data give exactly zero.
    """
    v = p.values if values is None else np.asarray(values, dtype=float)
    n, K = p.n, w.K
    m = np.arange(1, K + 1)
    padded = np.concatenate([p.exterior(p.coords(-m[::-1])), v,
                             p.exterior(p.coords(n - 1 + m))])
    out = np.zeros(n)
    for k in range(1, K + 1):
        right = padded[K + k:K + k + n]
        left = padded[K - k:K - k + n]
        out += w.omega[k - 1] * ((right - v) + (left - v))
    t = p.coords(np.arange(n))
    return out + w.tail * ((_far(p.far_plus, t) - v) + (_far(p.far_minus, t) - v))


def solve_dirichlet_1d(p: LineProblem, params: FracParams,
                       weights: KernelWeights | None = None) -> np.ndarray:
    """Values at the interior nodes with the discrete operator equal to zero.

    Dense solve of the (strictly diagonally dominant) M-matrix system up to
    ``DENSE_LIMIT`` unknowns, Jacobi beyond.  The scaled residual
    ``L v / total weight`` must end up within ``params.tol_res``.
    """
    w = weights_for(params, p.spacing) if weights is None else weights
    load = exterior_load(p, w)
    col = _coupling_column(p.n, w)
    total = w.total
    if p.n <= DENSE_LIMIT:
        A = total * np.eye(p.n) - toeplitz(col)
        v = solve(A, load, assume_a="gen")
    else:
        v = np.array(p.values, dtype=float)
        for it in range(params.max_iter):
            new = (load + matmul_toeplitz((col, col), v)) / total
            delta = float(np.max(np.abs(new - v)))
            v = new
            if delta <= params.tol_fp:
                break
        else:
            raise ConvergenceError(f"Jacobi line solve stalled at update {delta:.3e}",
                                   residual=delta)
    res = (load + matmul_toeplitz((col, col), v) - total * v) / total
    worst = float(np.max(np.abs(res)))
    if worst > params.tol_res:
        raise ConvergenceError(f"line solve residual {worst:.3e} exceeds tolerance",
                               residual=worst)
    return v
