import numpy as np
import pytest

from conftest import chain_length_oracle
from vafo import features, loss, morphology, simulate
from vafo.errors import UnreachableRhoError
from vafo.raster_io import one_hot


class TestPredictedErrors:
    def test_balanced_ratio(self):
        assert simulate.predicted_errors(1.0) == (0.0, 0.5, 0.5)

    def test_crossover_point(self):
        t, d, b = simulate.predicted_errors(0.5)
        assert t == pytest.approx(1 / 3)
        assert d == pytest.approx(1 / 3)
        assert b == pytest.approx(1 / 3)

    def test_ratio_three(self):
        assert simulate.predicted_errors(3.0) == (0.5, 0.75, 0.75)

    def test_crossover_claim_on_grid(self):
        # density dominates above 0.5, tortuosity below
        for rho in (0.6, 0.8, 1.0, 1.5, 2.0, 3.0):
            t, d, _ = simulate.predicted_errors(rho)
            assert d > t
        for rho in (0.1, 0.2, 0.3, 0.4):
            t, d, _ = simulate.predicted_errors(rho)
            assert t > d

    def test_density_and_boxcount_forms_identical(self, rng):
        for rho in rng.uniform(0.05, 5.0, size=20):
            _, d, b = simulate.predicted_errors(float(rho))
            assert d == b

    def test_bad_rho(self):
        with pytest.raises(ValueError):
            simulate.predicted_errors(0.0)


class TestGenerateScenario:
    def test_balanced_zero_curvature_is_straight(self):
        pair = simulate.generate_scenario(
            simulate.ScenarioSpec(rho=1.0, canvas=256, chord=80, curvature=0.0)
        )
        assert pair.measured_rho == pytest.approx(1.0, abs=0.02)
        # both centrelines are straight and collinear on the same row
        assert len(np.unique(pair.a1_path[:, 0])) == 1
        assert len(np.unique(pair.a2_path[:, 0])) == 1
        assert pair.a1_path[0, 0] == pair.a2_path[0, 0]

    def test_rho_two_within_two_percent_by_chain_oracle(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=2.0))
        arc1 = chain_length_oracle(pair.a1_path)
        arc2 = chain_length_oracle(pair.a2_path)
        assert arc2 / arc1 == pytest.approx(2.0, rel=0.02)
        assert pair.measured_rho == pytest.approx(arc2 / arc1, rel=1e-12)

    def test_unreachable_rho(self):
        with pytest.raises(UnreachableRhoError):
            simulate.generate_scenario(simulate.ScenarioSpec(rho=100.0, chord=16))

    def test_corruption_flips_exactly_a2(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.5, canvas=256, chord=80))
        diff = pair.truth != pair.corrupted
        assert diff.any()
        assert np.all(pair.truth[diff] == 1)      # flipped pixels were artery
        assert np.all(pair.corrupted[diff] == 2)  # and became vein
        # the flipped set sits on A2's side of the canvas
        assert np.argwhere(diff)[:, 1].min() >= pair.a1_path[:, 1].min()

    def test_maps_share_vein_and_background(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.0, canvas=256, chord=80))
        keep = pair.truth != 1
        assert np.array_equal(pair.truth[keep], pair.corrupted[keep])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            simulate.ScenarioSpec(rho=-1.0)
        with pytest.raises(ValueError):
            simulate.ScenarioSpec(rho=1.0, chord=8)


class TestEmpiricalErrors:
    def test_identical_pair_measures_zero(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.0, canvas=256, chord=80))
        same = simulate.ScenarioPair(
            truth=pair.truth,
            corrupted=pair.truth.copy(),
            a1_path=pair.a1_path,
            a2_path=pair.a2_path,
            measured_rho=1.0,
        )
        assert simulate.empirical_errors(same) == (0.0, 0.0, 0.0)

    def test_balanced_scenario_density_error_half(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.0))
        _, dens_err, _ = simulate.empirical_errors(pair)
        # oracle: direct pixel counting on the two maps
        n_truth = int((pair.truth == 1).sum())
        n_corr = int((pair.corrupted == 1).sum())
        assert dens_err == pytest.approx((n_truth - n_corr) / n_truth, abs=1e-12)
        assert dens_err == pytest.approx(0.5, abs=0.05)

    def test_balanced_scenario_boxcount_error_half(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.0))
        _, _, box_err = simulate.empirical_errors(pair)
        # oracle: hard tile counting at the smallest size
        def occupied(mask, size):
            h, w = mask.shape
            count = 0
            for r in range(0, h, size):
                for c in range(0, w, size):
                    if mask[r : r + size, c : c + size].any():
                        count += 1
            return count

        n_t = occupied(pair.truth == 1, 2)
        n_c = occupied(pair.corrupted == 1, 2)
        assert abs(n_t - n_c) / n_t == pytest.approx(0.5, abs=0.05)
        assert box_err == pytest.approx(0.5, abs=0.05)

    @pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
    def test_matches_predictions_within_tolerance(self, rho):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=rho))
        empirical = simulate.empirical_errors(pair)
        predicted = simulate.predicted_errors(rho)
        for emp, pred in zip(empirical, predicted):
            assert emp == pytest.approx(pred, abs=0.05)


class TestLossDiscrimination:
    def test_box_loss_positive_on_corruption_zero_on_truth(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.0, canvas=256, chord=80))
        cfg = loss.LossConfig(lam=0.5)
        on_truth, _ = loss.loss_b(one_hot(pair.truth).astype(np.float64), pair.truth, cfg)
        on_corr, _ = loss.loss_b(one_hot(pair.corrupted).astype(np.float64), pair.truth, cfg)
        assert on_truth == 0.0
        assert on_corr > 0.0

    def test_erasing_a_branch_strictly_increases_box_loss(self):
        pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=1.0, canvas=256, chord=80))
        erased = pair.truth.copy()
        erased[pair.truth != pair.corrupted] = 0  # drop A2 entirely
        cfg = loss.LossConfig(lam=0.5)
        baseline, _ = loss.loss_b(one_hot(pair.truth).astype(np.float64), pair.truth, cfg)
        degraded, _ = loss.loss_b(one_hot(erased).astype(np.float64), pair.truth, cfg)
        assert degraded > baseline == 0.0

    def test_artery_skeleton_is_one_branch(self):
        # the generated artery must decompose cleanly or tortuosity
        # measurements would silently mix sub-segments
        for rho in (0.5, 2.0):
            pair = simulate.generate_scenario(simulate.ScenarioSpec(rho=rho, canvas=256, chord=80))
            graph = morphology.decompose_branches(
                morphology.skeletonize(morphology.class_mask(pair.truth, 1))
            )
            long_branches = [b for b in graph.branches if b.chord_length >= 3]
            assert len(long_branches) >= 1
            total_arc = sum(b.arc_length for b in long_branches)
            assert total_arc == pytest.approx(
                chain_length_oracle(pair.a1_path) + chain_length_oracle(pair.a2_path), rel=0.1
            )
