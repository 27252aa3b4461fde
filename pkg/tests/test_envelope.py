from dataclasses import dataclass

import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import linprog

from fracenvelope.core import (DirectionSet, Domain, ExteriorDatum, FracParams, angular_cosine,
                               clipped_quadratic, constant_datum, make_grid, smoothed_step)
from fracenvelope.envelope import (LineScheme, classical_envelope, classical_scheme, fractional_envelope,
                                   fractional_scheme, hull_envelope_oracle, hull_oracle_at, jacobi,
                                   residual_diagnostics)
from fracenvelope.frac1d import ConvergenceError, LineProblem, solve_dirichlet_1d


@dataclass(frozen=True)
class Affine(ExteriorDatum):
    a: tuple = (0.3, -0.7)
    b: float = 0.2

    def value(self, x):
        return self.b + x[..., 0] * self.a[0] + x[..., 1] * self.a[1]


def lp_hull(samples, values, x):
    """Convex-combination minimum by linear programming (independent of the enumeration)."""
    m = len(samples)
    A = np.vstack([samples.T, np.ones(m)])
    res = linprog(values, A_eq=A, b_eq=np.r_[x, 1.0], bounds=[(0, None)] * m, method="highs")
    assert res.status == 0
    return res.fun


class TestFractional:
    def test_constant_one_sweep(self, disk, coarse):
        grid, Z = coarse
        g = constant_datum(0.7)
        env = fractional_envelope(disk, g, FracParams.for_domain(0.8, disk, g), grid, Z)
        assert env.iterations == 1
        # loads are pre-summed with normalized weights: equal up to rounding
        assert np.max(np.abs(env.interior - 0.7)) <= 1e-14

    def test_interval_matches_line_solver(self):
        d = Domain.interval(0.0, 1.0)
        h = 1.0 / 64
        g = smoothed_step(position=0.5, width=0.3)
        params = FracParams.for_domain(0.7, d, g, tol_fp=1e-13, tol_res=1e-10)
        env = fractional_envelope(d, g, params, make_grid(d, h), DirectionSet.axis(h))
        on = lambda t: np.stack([t, np.zeros_like(t)], axis=-1)
        p = LineProblem.on_interval(0.0, 1.0, 64, lambda t: g(on(t)),
                                    lambda t: g.far_value(on(t), np.array([-1.0, 0.0])),
                                    lambda t: g.far_value(on(t), np.array([1.0, 0.0])))
        v = solve_dirichlet_1d(p, params)
        assert np.max(np.abs(env.interior - v)) <= 1e-8

    def test_converged_residuals(self, disk, coarse):
        grid, Z = coarse
        g = clipped_quadratic(weights=(1.0, 1.0))
        params = FracParams.for_domain(0.8, disk, g)
        env = fractional_envelope(disk, g, params, grid, Z)
        assert env.final_update <= params.tol_fp
        assert env.report.max_abs_min <= params.tol_res
        assert env.report.most_negative >= -params.tol_res
        assert g.lower <= env.interior.min() and env.interior.max() <= g.upper

    def test_perturbation_detected(self, disk, coarse):
        grid, Z = coarse
        g = clipped_quadratic(weights=(1.0, 1.0))
        params = FracParams.for_domain(0.8, disk, g)
        env = fractional_envelope(disk, g, params, grid, Z)
        u = env.interior.copy()
        k = len(u) // 2
        u[k] += 0.1
        rep = residual_diagnostics(u, env.scheme)
        assert rep.min_residual[k] < -params.tol_res

    def test_closer_to_classical_as_s_grows(self, disk, coarse):
        grid, Z = coarse
        g = clipped_quadratic(weights=(1.0, 1.0))
        ref = classical_envelope(disk, g, grid, Z).interior
        dist = [np.max(np.abs(fractional_envelope(disk, g, FracParams.for_domain(s, disk, g),
                                                  grid, Z).interior - ref))
                for s in (0.6, 0.95)]
        assert dist[1] < dist[0]

    def test_non_convergence(self, disk, coarse):
        grid, Z = coarse
        g = clipped_quadratic()
        params = FracParams.for_domain(0.9, disk, g, max_iter=3)
        with pytest.raises(ConvergenceError) as exc:
            fractional_envelope(disk, g, params, grid, Z)
        assert len(exc.value.trace) == 3

    def test_resolution_and_directions_checked(self, disk):
        g = constant_datum(0.0)
        with pytest.raises(ValueError):
            fractional_envelope(disk, g, FracParams.for_domain(0.5, disk), make_grid(disk, 0.3),
                                DirectionSet.build(1, 0.3))
        grid = make_grid(disk, 1 / 16)
        with pytest.raises(ValueError):
            fractional_envelope(disk, g, FracParams.for_domain(0.5, disk), grid,
                                DirectionSet(np.zeros((0, 2), dtype=int), 1 / 16))

    def test_jacobi_is_monotone(self, disk, coarse):
        grid, Z = coarse
        g = angular_cosine()
        scheme = fractional_scheme(disk, g, FracParams.for_domain(0.7, disk, g), grid, Z)
        u = np.full(scheme.n, g.upper)
        for _ in range(25):
            new = scheme.replace(u).min(axis=0)
            assert np.all(new <= u)
            u = new

    def test_argmin_tie_break(self, coarse):
        grid, Z = coarse
        n = 5
        load = np.zeros((len(Z), n))
        load[3:] = -1.0   # directions 3.. tie for the minimum
        scheme = LineScheme(grid, Z, load, sparse.csr_matrix((len(Z) * n, n)), np.ones_like(load))
        rep = residual_diagnostics(np.zeros(n), scheme)
        assert np.all(rep.argmin == 3)
        assert np.all(rep.min_residual == -1.0)


class TestClassical:
    def test_affine_fixed_point(self, disk, coarse):
        grid, Z = coarse
        g = Affine(-2.0, 2.0)
        env = classical_envelope(disk, g, grid, Z)
        nodes = grid.interior_nodes()
        assert np.max(np.abs(env.interior - g(nodes))) < 1e-6

    def test_quadratic_boundary_data(self, disk, coarse):
        grid, Z = coarse
        env = classical_envelope(disk, clipped_quadratic(), grid, Z)
        x = grid.interior_nodes()
        assert np.max(np.abs(env.interior - x[:, 0] ** 2)) <= 0.5 * (1 / 16 + 1 / 9)

    def test_cosine_centre(self, disk, coarse):
        grid, Z = coarse
        env = classical_envelope(disk, angular_cosine(), grid, Z)
        c = np.argmin(np.linalg.norm(grid.interior_nodes(), axis=1))
        assert env.interior[c] == pytest.approx(-1.0, abs=0.5 * (1 / 16 + 1 / 9))

    def test_monotone_sweeps(self, disk, coarse):
        grid, Z = coarse
        g = angular_cosine()
        scheme = classical_scheme(disk, g, grid, Z)
        u, _, trace = jacobi(scheme, np.full(scheme.n, g.upper), 1e-8, 100000)
        assert np.all(trace >= 0)
        v = np.full(scheme.n, g.upper)
        for _ in range(10):
            nv = scheme.replace(v).min(axis=0)
            assert np.all(nv <= v)
            v = nv


class TestHullOracle:
    def test_constant(self, disk):
        y = disk.boundary_sample(32)
        assert hull_envelope_oracle(disk, y, np.full(32, 2.0), (0.1, 0.2)) == pytest.approx(2.0)

    def test_quadratic_centre(self, disk):
        val = hull_oracle_at(disk, clipped_quadratic(), [(0.0, 0.0)], 64)[0]
        assert -1e-15 <= val <= 10.0 / 64 ** 2

    def test_cosine_against_linprog(self, disk):
        g = angular_cosine()
        y = disk.boundary_sample(64)
        for x in ((0.5, 0.0), (0.1, -0.3), (-0.45, 0.6)):
            assert hull_envelope_oracle(disk, y, g(y), x) == pytest.approx(
                lp_hull(y, g(y), np.array(x)), abs=1e-9)
        # continuum value along the vertical chord through (0.5, 0) is 2 x1^2 - 1
        assert hull_envelope_oracle(disk, y, g(y), (0.5, 0.0)) == pytest.approx(-0.5, abs=0.01)

    def test_outside_hull(self, disk):
        y = disk.boundary_sample(3)
        with pytest.raises(ValueError):
            hull_envelope_oracle(disk, y, np.zeros(3), (-0.9, 0.0))

    def test_needs_three_samples(self, disk):
        with pytest.raises(ValueError):
            hull_envelope_oracle(disk, disk.boundary_sample(8)[:2], np.zeros(2), (0.0, 0.0))
