import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subpot import (
    AtomicPart,
    LevyModel,
    SeriesRadiusError,
    bv_split,
    laplace_crosscheck,
    series_radius,
    u_series,
    u_volterra,
)
from conftest import delta1_u, random_atomic_model


class TestSeries:
    def test_delta1_value(self, delta1):
        v, err, terms = u_series(delta1, 0.5, tol=1e-10)
        assert v == pytest.approx(math.exp(-0.5), abs=1e-9)
        assert err < 1e-10
        assert abs(v - math.exp(-0.5)) <= err + 1e-12

    def test_limit_at_zero(self, delta1, stable_half):
        v, _, _ = u_series(delta1, 1e-8)
        assert v == pytest.approx(1.0, abs=1e-6)
        # the stable density leaves 1/drift like 2*C*sqrt(x): slower approach
        v, _, _ = u_series(stable_half, 1e-8)
        assert v == pytest.approx(1.0, abs=3e-4)
        assert 1.0 - v == pytest.approx(2.0 * math.sqrt(1e-8), rel=1e-3)

    def test_pure_drift_single_term(self, pure_drift):
        v, err, terms = u_series(pure_drift, 3.0)
        assert v == 0.5
        assert terms == 1
        assert err == 0.0

    def test_radius_gate(self, delta1):
        with pytest.raises(SeriesRadiusError):
            u_series(delta1, 0.9)

    def test_radius_location(self, delta1):
        assert series_radius(delta1, 5.0) == pytest.approx(0.5, abs=1e-9)

    def test_killed_pure_drift(self):
        model = LevyModel(drift=1.0, q=1.0)
        v, _, _ = u_series(model, 0.4, tol=1e-12)
        assert v == pytest.approx(math.exp(-0.4), rel=1e-10)


class TestVolterra:
    def test_delta1_closed_form(self, delta1, delta1_grid):
        xs = np.linspace(0.025, 5.0, 200)
        want = np.array([delta1_u(x) for x in xs])
        assert np.max(np.abs(delta1_grid(xs) - want)) < 1e-6

    def test_named_values(self, delta1_grid):
        # oracle: u(1.5) = e^{-1.5} + 0.5 e^{-0.5},  u(2.5) adds the 2-jump term
        assert delta1_grid(1.5) == pytest.approx(math.exp(-1.5) + 0.5 * math.exp(-0.5), abs=1e-6)
        assert delta1_grid(2.5) == pytest.approx(delta1_u(2.5), abs=1e-6)
        assert delta1_grid(2.5) == pytest.approx(0.4925966, abs=1e-6)
        assert delta1_grid.u[0] == pytest.approx(1.0)

    def test_continuity_at_atoms(self, delta1_grid):
        for a in (1.0, 2.0):
            i = np.searchsorted(delta1_grid.nodes, a)
            gaps = np.abs(np.diff(delta1_grid.u[i - 2 : i + 2]))
            assert np.all(gaps < 1e-3)  # u continuous: no jump across the atom

    def test_positive_and_bounded(self, delta1_grid, stable_grid):
        for grid in (delta1_grid, stable_grid):
            assert np.all(grid.u > 0)
            assert np.all(grid.u <= 1.0 / grid.drift + 1e-8)

    def test_long_run_level(self, delta1):
        # u(x) -> 1/E[X_1] = 1/2
        grid = u_volterra(delta1, 45.0)
        assert grid(40.0) == pytest.approx(0.5, abs=1e-4)

    def test_order_two_convergence(self, delta1):
        # halving h reduces the self-reported error by ~4x
        g1 = u_volterra(delta1, 3.0, h_target=0.016, max_refine=1, tol=1e-2)
        g2 = u_volterra(delta1, 3.0, h_target=0.008, max_refine=1, tol=1e-2)
        e1 = np.max(g1.err_est[g1.nodes > g1.series_head_end])
        e2 = np.max(g2.err_est[g2.nodes > g2.series_head_end])
        assert e1 / e2 == pytest.approx(4.0, rel=0.5)

    def test_err_estimate_is_honest(self, delta1_grid):
        xs = np.linspace(0.6, 4.9, 77)
        want = np.array([delta1_u(x) for x in xs])
        got = delta1_grid(xs)
        # true error bounded by the reported estimate plus interpolation slack
        assert np.all(np.abs(got - want) <= delta1_grid.err_at(xs) + 1e-6)

    def test_stable_head_matches_series(self, stable_half, stable_grid):
        for x in (0.01, 0.03):
            v, err, _ = u_series(stable_half, x, tol=1e-12)
            assert stable_grid(x) == pytest.approx(v, abs=1e-6)

    def test_route_agreement_series_vs_volterra(self, delta1, delta1_grid):
        for x in (0.1, 0.3, 0.45):
            v, err, _ = u_series(delta1, x, tol=1e-10)
            assert abs(v - delta1_grid(x)) <= err + delta1_grid.err_at(x) + 1e-7


class TestKilledRoutes:
    def test_killed_atomic_three_routes(self):
        from subpot import invert_density

        model = LevyModel(drift=1.2, q=0.5, atomic=AtomicPart.from_pairs([(0.8, 0.7)]))
        grid = u_volterra(model, 3.0, tol=1e-8)
        for x in (0.15, 0.9, 2.2):
            inv, err = invert_density(model, x, N=3, tol=1e-9)
            assert abs(grid(x) - inv) < grid.err_at(x) + err + 1e-7
        v, bound, _ = u_series(model, 0.15, tol=1e-12)
        assert abs(v - grid(0.15)) < bound + grid.err_at(0.15) + 1e-9

    def test_killed_tempered_routes(self):
        from subpot import AcTail, invert_density

        model = LevyModel(drift=1.0, q=0.3, ac=AcTail.tempered(0.6, 0.5, 1.0))
        grid = u_volterra(model, 2.0)
        for x in (0.4, 1.5):
            inv, err = invert_density(model, x, N=4, tol=1e-8)
            assert abs(grid(x) - inv) < grid.err_at(x) + err + 1e-6


class TestBvSplit:
    def test_pure_drift(self, pure_drift):
        split = bv_split(pure_drift, 3.0)
        assert np.allclose(split.u1, 0.5)
        assert np.allclose(split.u2, 0.0)

    def test_delta1_exponential_identity(self, delta1):
        split = bv_split(delta1, 0.5, tol=1e-10)
        assert np.max(np.abs(split.reconstruction() - np.exp(-split.nodes))) < 1e-9
        # cosh/sinh partial sums
        assert np.all(np.diff(split.u1) >= -1e-12)
        assert np.all(np.diff(split.u2) >= -1e-12)

    def test_beyond_radius_extension(self, delta1):
        split = bv_split(delta1, 3.0, tol=1e-8)
        want = np.array([delta1_u(x) for x in split.nodes])
        assert np.max(np.abs(split.reconstruction() - want)) < 1e-6
        assert np.all(np.diff(split.u1) >= -1e-12)
        assert np.all(np.diff(split.u2) >= -1e-12)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=8, deadline=None)
    def test_monotone_on_random_models(self, seed):
        rng = np.random.default_rng(seed)
        model = random_atomic_model(rng)
        x_max = series_radius(model, 3.0)
        split = bv_split(model, min(x_max, 2.0), tol=1e-8, n_nodes=60)
        assert np.all(np.diff(split.u1) >= -1e-10)
        assert np.all(np.diff(split.u2) >= -1e-10)


class TestCrosscheck:
    def test_delta1_lambda3(self, delta1):
        res = laplace_crosscheck(delta1, 3.0, tol=1e-6)
        assert res.rhs == pytest.approx(1.0 / (4.0 - math.exp(-3.0)), rel=1e-12)
        assert res.abs_diff < 1e-6

    def test_pure_drift_identity(self, pure_drift):
        res = laplace_crosscheck(pure_drift, 2.0, tol=1e-6)
        assert res.rhs == pytest.approx(1.0 / (2.0 * 2.0))
        assert res.abs_diff < 1e-6

    def test_killed_pure_drift(self):
        model = LevyModel(drift=1.0, q=1.0)
        res = laplace_crosscheck(model, 1.0, tol=1e-6)
        assert res.rhs == pytest.approx(0.5)
        assert res.abs_diff < 1e-6

    def test_stable_all_lambdas(self, stable_half):
        for lam in (1.0, 3.0, 10.0):
            res = laplace_crosscheck(stable_half, lam, tol=1e-5)
            assert res.abs_diff < 1e-5

    def test_killed_atomic(self):
        model = LevyModel(drift=1.0, q=0.5, atomic=AtomicPart.from_pairs([(1, 1.0)]))
        res = laplace_crosscheck(model, 2.0, tol=1e-6)
        assert res.abs_diff < 1e-6
