import numpy as np
import pytest

from dither_lqg import escape
from dither_lqg.errors import ConfigError, DomainError, NonConvergence
from dither_lqg.escape import (
    EscapeQuery,
    analyze_bound,
    bound_for_probability,
    check_ergodicity,
    closed_loop_realization,
    escape_probability,
    expected_escape_time,
    solve_zeta,
)
from dither_lqg.filters import steady_state
from dither_lqg.linalg import normal_cdf
from dither_lqg.plant import CostWeights, PlantModel, lqr_gain

from conftest import TABLE_2BIT, TABLE_3BIT, scalar_weights, strategy


def _query(plant, rc, kind="I", b=3, r=None, tau=1000.0):
    return EscapeQuery(plant, scalar_weights(rc), strategy(kind, b, 1.0, r=r), target_mean_escape=tau)


class TestEscapeLaw:
    def test_expected_escape_time(self):
        assert expected_escape_time(0.001) == pytest.approx(1000.0)
        assert expected_escape_time(1.0) == 1.0
        for beta in (0.0, -0.1, 1.5):
            with pytest.raises(DomainError):
                expected_escape_time(beta)

    def test_escape_probability(self):
        assert escape_probability(0.0, 1.0) == 1.0
        assert escape_probability(1.959964, 1.0) == pytest.approx(0.05, abs=1e-7)
        assert escape_probability(2.0, 4.0) == pytest.approx(2 * normal_cdf(-1.0))
        probs = [escape_probability(z, 1.0) for z in np.linspace(0.0, 8.0, 33)]
        assert all(later < earlier for earlier, later in zip(probs, probs[1:]))

    def test_bound_inverts_probability(self):
        for beta in (1e-6, 1e-3, 0.05, 0.5):
            zeta = bound_for_probability(beta, 2.5)
            assert escape_probability(zeta, 2.5) == pytest.approx(beta, rel=1e-9)
        assert bound_for_probability(1.0, 2.5) == pytest.approx(0.0, abs=1e-12)

    def test_independent_pair_at_zero_bound(self):
        assert escape_probability(0.0, np.eye(2), samples=200_000, seed=3) == pytest.approx(0.5, abs=0.01)

    def test_query_needs_exactly_one_target(self, scalar_plant):
        cfg = strategy("I", 3, 1.0)
        with pytest.raises(ConfigError):
            EscapeQuery(scalar_plant, scalar_weights(1.0), cfg)
        with pytest.raises(ConfigError):
            EscapeQuery(scalar_plant, scalar_weights(1.0), cfg, target_mean_escape=10, escape_probability=0.1)
        with pytest.raises(DomainError):
            EscapeQuery(scalar_plant, scalar_weights(1.0), cfg, target_mean_escape=0.5)
        assert EscapeQuery(scalar_plant, scalar_weights(1.0), cfg, target_mean_escape=400).beta == 0.0025


class TestErgodicity:
    def test_table_model_passes(self, scalar_plant):
        K = lqr_gain(scalar_plant, scalar_weights(1.0)).K
        finding = check_ergodicity(scalar_plant, K, steady_state(scalar_plant, strategy("I", 3, 5.68)))
        assert finding.passed

    def test_open_loop_unstable_without_feedback_fails(self):
        plant = PlantModel(A=1.5, B=1, C=1, Q=1, R=1)
        finding = check_ergodicity(plant, np.zeros((1, 1)), steady_state(plant, strategy("I", 3, 5.0)))
        assert not finding.passed

    def test_noiseless_measurement_fails(self):
        plant = PlantModel(A=0.9999, B=1, C=1, Q=1, R=0)
        K = lqr_gain(plant, CostWeights(1, 1)).K
        finding = check_ergodicity(plant, K, steady_state(plant, strategy("I", 3, 5.0)))
        assert not finding.passed
        assert "JRJ^T>0 violated" in finding.message

    def test_realization_shape(self, scalar_plant):
        K = lqr_gain(scalar_plant, scalar_weights(1.0)).K
        realization = closed_loop_realization(scalar_plant, K, steady_state(scalar_plant, strategy("II", 3, 5.68)))
        assert realization.F.shape == (2, 2)
        assert realization.G.shape == (2, 2)
        np.testing.assert_array_equal(realization.H, [[1.0, 0.0]])


class TestSolveZeta:
    @pytest.mark.parametrize("row", [row for row in TABLE_3BIT if row[0] >= 10], ids=lambda row: f"Rc={row[0]:g}")
    def test_three_bit_bounds(self, scalar_plant, row):
        solution = solve_zeta(_query(scalar_plant, row[0]))
        assert solution.converged
        assert solution.zeta == pytest.approx(row[2], rel=0.01)

    @pytest.mark.parametrize("row", [row for row in TABLE_2BIT if row[0] >= 100], ids=lambda row: f"Rc={row[0]:g}")
    def test_two_bit_bounds(self, scalar_plant, row):
        solution = solve_zeta(_query(scalar_plant, row[0], b=2))
        assert solution.zeta == pytest.approx(row[2], rel=0.01)

    @pytest.mark.parametrize("kind, r", [("I", None), ("II", None), ("III", 1)])
    def test_fixed_point_meets_the_target(self, scalar_plant, kind, r):
        solution = solve_zeta(_query(scalar_plant, 1.0, kind=kind, r=r))
        assert solution.converged
        assert solution.beta == pytest.approx(1e-3, rel=1e-5)
        assert solution.tau_analytic == pytest.approx(1000.0, rel=1e-5)
        assert 2 * normal_cdf(-solution.zeta / np.sqrt(solution.Z)) == pytest.approx(1e-3, rel=1e-5)
        assert solution.iterations >= 1

    def test_bound_shrinks_as_escape_gets_likelier(self, scalar_plant):
        bounds = [
            solve_zeta(EscapeQuery(scalar_plant, scalar_weights(1.0), strategy("I", 3, 1.0), escape_probability=beta)).zeta
            for beta in (1e-4, 1e-3, 1e-2, 0.1, 0.5)
        ]
        assert all(later < earlier for earlier, later in zip(bounds, bounds[1:]))

    def test_certain_escape_needs_no_bound(self, scalar_plant):
        solution = solve_zeta(_query(scalar_plant, 1.0, tau=1.0))
        assert solution.zeta == pytest.approx(0.0, abs=1e-9)

    def test_iteration_cap(self, scalar_plant, monkeypatch):
        monkeypatch.setattr(escape, "ZETA_MAX_ITERATIONS", 1)
        loose = solve_zeta(_query(scalar_plant, 1.0))
        assert not loose.converged
        with pytest.raises(NonConvergence):
            solve_zeta(_query(scalar_plant, 1.0), strict=True)

    def test_fixed_bound_analysis(self, scalar_plant):
        solution = analyze_bound(scalar_plant, scalar_weights(1.0), strategy("I", 3, 5.68))
        assert solution.iterations == 0
        assert solution.zeta == 5.68
        assert 0.8e-3 < solution.beta < 1.3e-3
        assert solution.cost == pytest.approx(2.30845, rel=1e-3)
