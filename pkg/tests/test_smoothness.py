import math
from fractions import Fraction

import numpy as np
import pytest

from subpot import (
    AtomicPart,
    LevyModel,
    PreconditionError,
    Side,
    classify_point,
    conv_jump,
    derivative_jump,
    one_sided_fd,
)
from subpot.errors import FitWindowError
from subpot.smoothness import predicted_jump_magnitude


class TestClassification:
    def test_delta1_at_two(self, delta1):
        rep = classify_point(delta1, 2.0, k_max=3)
        assert rep.min_k == 2
        assert rep.verdicts == [(1, True), (2, False), (3, False)]

    def test_monotone_verdicts(self, delta1):
        rep = classify_point(delta1, 3.0, k_max=5)
        flags = [d for _, d in rep.verdicts]
        # once non-differentiable, stays non-differentiable
        assert flags == sorted(flags, reverse=True)

    def test_reciprocal_family_rational_vs_irrational(self):
        fam = AtomicPart.reciprocal_integers([1.0 / j**2 for j in range(1, 17)], 16)
        model = LevyModel(drift=1.0, atomic=fam)
        rep = classify_point(model, Fraction(3, 5), k_max=4)
        assert rep.min_k is not None and rep.min_k <= 3
        rep_irr = classify_point(model, math.sqrt(2.0) - 1.0, k_max=3)
        assert rep_irr.min_k is None
        assert all(d for _, d in rep_irr.verdicts)

    def test_smooth_model_everywhere_differentiable(self, stable_half):
        rep = classify_point(stable_half, 1.7, k_max=4)
        assert rep.min_k is None
        assert all(d for _, d in rep.verdicts)

    def test_mixed_model_same_verdicts_as_atomic(self, delta1, mixed_model):
        for x in (1.0, 2.0, 2.5, 3.0):
            a = classify_point(delta1, x, k_max=3)
            b = classify_point(mixed_model, x, k_max=3)
            assert a.min_k == b.min_k
            assert a.verdicts == b.verdicts

    def test_measured_jumps_delta1(self, delta1, delta1_fine_grid):
        for x, order in ((1.0, 1), (2.0, 2), (3.0, 3)):
            rep = classify_point(delta1, x, k_max=3, grid=delta1_fine_grid)
            assert rep.min_k == order
            for j in rep.jumps:
                if j.order == order:
                    assert j.significant
                    assert j.measured == pytest.approx(j.predicted, rel=0.05)
                elif j.order < order:
                    assert not j.significant

    def test_no_false_kinks(self, delta1, delta1_fine_grid):
        rng = np.random.default_rng(5)
        checked = 0
        for x in rng.uniform(0.3, 4.0, size=40):
            if min(abs(x - b) for b in (1.0, 2.0, 3.0, 4.0)) < 0.05:
                continue
            rep = classify_point(delta1, float(x), k_max=2, grid=delta1_fine_grid)
            assert rep.min_k is None
            for j in rep.jumps:
                if j.measured is not None:
                    assert not j.significant, f"false kink at {x} order {j.order}"
            checked += 1
        assert checked > 20


class TestDerivativeJump:
    def test_delta1_atom(self, delta1):
        pred, meas, se = derivative_jump(delta1, 1.0)
        assert pred == 1.0
        assert meas == pytest.approx(1.0, abs=max(1e-4, 3 * se))

    def test_non_atom(self, delta1):
        pred, meas, se = derivative_jump(delta1, 0.37)
        assert pred == 0.0
        assert abs(meas) <= 3 * se + 1e-12

    def test_scaled_atom(self):
        model = LevyModel(drift=2.0, atomic=AtomicPart.from_pairs([(0.5, 2.0)]))
        pred, meas, se = derivative_jump(model, 0.5)
        assert pred == pytest.approx(0.5)
        assert meas == pytest.approx(0.5, abs=max(1e-4, 3 * se))

    def test_fd_route_agrees(self, delta1, delta1_fine_grid):
        # independent route: one-sided fits on the grid
        right, se_r = one_sided_fd(delta1_fine_grid, 1.0, 1, Side.RIGHT)
        left, se_l = one_sided_fd(delta1_fine_grid, 1.0, 1, Side.LEFT)
        assert right - left == pytest.approx(1.0, abs=3 * (se_r + se_l) + 1e-4)

    def test_mixed_model_jump(self, mixed_model):
        pred, meas, se = derivative_jump(mixed_model, 1.0, tol=1e-7)
        assert pred == 1.0
        assert meas == pytest.approx(1.0, abs=max(1e-4, 3 * se))


class TestOneSidedFd:
    def test_delta1_first_derivative(self, delta1_fine_grid):
        for side in (Side.LEFT, Side.RIGHT):
            est, se = one_sided_fd(delta1_fine_grid, 0.5, 1, side)
            assert est == pytest.approx(-math.exp(-0.5), abs=max(3 * se, 1e-4))

    def test_constant_grid_zero(self, pure_drift):
        from subpot import u_volterra

        grid = u_volterra(pure_drift, 2.0)
        est, se = one_sided_fd(grid, 1.0, 1, Side.RIGHT)
        assert abs(est) < max(3 * se, 1e-8)

    def test_window_error_when_too_tight(self, delta1_fine_grid):
        with pytest.raises(FitWindowError):
            one_sided_fd(delta1_fine_grid, 0.5, 1, Side.RIGHT, window=1e-9)

    def test_higher_order_jump(self, delta1_fine_grid):
        r, se_r = one_sided_fd(delta1_fine_grid, 2.0, 2, Side.RIGHT)
        l, se_l = one_sided_fd(delta1_fine_grid, 2.0, 2, Side.LEFT)
        assert (r - l) == pytest.approx(1.0, rel=0.05)


class TestConvJump:
    def test_single_atom_two_fold(self, delta1):
        pred, meas = conv_jump(delta1, 2, 2.0)
        assert pred == 1.0
        assert meas == pytest.approx(1.0, abs=1e-12)

    def test_two_atoms_ordered_pairs(self):
        model = LevyModel(drift=1.0, atomic=AtomicPart.from_pairs([(1, 1.0), (2, 1.0)]))
        pred, meas = conv_jump(model, 2, 3.0)
        assert pred == 2.0  # 1+2 and 2+1
        assert meas == pytest.approx(2.0, abs=1e-12)

    def test_atom_itself_rejected(self):
        model = LevyModel(drift=1.0, atomic=AtomicPart.from_pairs([(1, 1.0), (2, 1.0)]))
        with pytest.raises(PreconditionError):
            conv_jump(model, 2, 2.0)  # 2 is an atom: in G_1

    def test_positivity_on_ladder(self, delta1):
        for n in (2, 3, 4):
            pred, meas = conv_jump(delta1, n, float(n))
            assert pred > 0
            assert meas == pytest.approx(pred, rel=1e-10)

    def test_recursive_magnitude_vs_brute_force(self):
        model = LevyModel(drift=1.0, atomic=AtomicPart.from_pairs([(0.5, 0.7), (0.8, 1.3)]))
        # b = 1.3 = 0.5+0.8 is in G_2\G_1: ordered pairs (0.5,0.8), (0.8,0.5)
        pred, meas = conv_jump(model, 2, 1.3)
        assert pred == pytest.approx(2 * 0.7 * 1.3)
        assert meas == pytest.approx(pred, rel=1e-10)

    def test_ac_model_rejected(self, mixed_model):
        with pytest.raises(PreconditionError):
            conv_jump(mixed_model, 2, 2.0)


class TestPredictedMagnitude:
    def test_matches_mass_at_order_one(self, delta1):
        assert predicted_jump_magnitude(delta1.atomic, 1, 1.0) == 1.0
        assert predicted_jump_magnitude(delta1.atomic, 1, 1.5) == 0.0

    def test_third_order_single_atom(self, delta1):
        assert predicted_jump_magnitude(delta1.atomic, 3, 3.0) == 1.0
        assert predicted_jump_magnitude(delta1.atomic, 3, 2.0) == 0.0
