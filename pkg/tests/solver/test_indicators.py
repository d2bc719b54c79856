"""Unit tests for the plap_kacanov.indicators module."""

import numpy as np
import pytest

from plap_kacanov.errors import DomainError
from plap_kacanov.fem import P0VectorField, P1Function, SourceTerm
from plap_kacanov.indicators import (
    compute_indicators,
    doerfler_mark,
    indicator_discretization,
    indicator_eps_minus,
    indicator_eps_plus,
    indicator_kacanov,
)
from plap_kacanov.kacanov import initial_state, kacanov_step, poisson_initial_state
from plap_kacanov.relaxation import (
    Exponents,
    RelaxInterval,
    kappa_star,
    kappa_star_released,
)

EPS = RelaxInterval(0.5, 2.0)


def _field(mesh, vector):
    return P0VectorField(mesh, np.tile(vector, (mesh.n_triangles, 1)))


class TestIntervalIndicators:
    def test_eps_plus_vanishes_below_upper_bound(self, lshape_mesh, exps10, rng):
        values = rng.uniform(-1.0, 1.0, (lshape_mesh.n_triangles, 2))
        sigma = P0VectorField(lshape_mesh, values)
        assert indicator_eps_plus(sigma, EPS, exps10) == 0.0

    def test_eps_minus_vanishes_above_lower_bound(self, lshape_mesh, exps10):
        sigma = _field(lshape_mesh, [0.6, 0.0])
        assert indicator_eps_minus(sigma, EPS, exps10) == 0.0

    def test_eps_plus_value(self, unit_square_mesh, exps10):
        t = 2.0 * EPS.eps_plus
        sigma = _field(unit_square_mesh, [t, 0.0])
        expected = kappa_star(t, EPS, exps10) - kappa_star_released(
            t, EPS, exps10, "upper"
        )
        assert expected > 0
        value = indicator_eps_plus(sigma, EPS, exps10)
        assert value == pytest.approx(expected, rel=1e-12)

    def test_eps_minus_value_at_zero_flux(self, unit_square_mesh, exps10):
        sigma = P0VectorField.zeros(unit_square_mesh)
        q = exps10.q
        expected = (1.0 / q - 0.5) * EPS.eps_minus**q
        value = indicator_eps_minus(sigma, EPS, exps10)
        assert value == pytest.approx(expected, rel=1e-12)

    def test_p2_has_no_interval_error(self, lshape_mesh, exps2, rng):
        sigma = P0VectorField(
            lshape_mesh, rng.normal(size=(lshape_mesh.n_triangles, 2)) * 5.0
        )
        assert indicator_eps_plus(sigma, EPS, exps2) <= 1e-14
        assert indicator_eps_minus(sigma, EPS, exps2) <= 1e-14


class TestKacanovIndicator:
    def test_exact_pair_at_p2(self, lshape_fine, source_one, exps2):
        f = source_one(lshape_fine)
        state = poisson_initial_state(lshape_fine, f, exps2, EPS)
        gap = indicator_kacanov(state.u, state.sigma, f, EPS, exps2)
        assert abs(gap) <= 1e-10 * abs(state.dual_energy)

    def test_positive_after_one_step(self, lshape_fine, source_one, exps10):
        f = source_one(lshape_fine)
        state = kacanov_step(initial_state(lshape_fine, f, exps10, EPS), f, exps10)
        assert indicator_kacanov(state.u, state.sigma, f, EPS, exps10) > 0.0


class TestDiscretizationIndicator:
    def test_zero_data(self, unit_square_mesh, exps10):
        f = SourceTerm.constant(unit_square_mesh, 0.0)
        total, per_element = indicator_discretization(
            P1Function.zeros(unit_square_mesh), f, EPS, exps10
        )
        assert total == 0.0
        assert not per_element.any()

    def test_hat_jumps(self, square_with_center, exps2):
        # Neighbouring gradients differ by (2, 2) across edges of length^2 = 1/2
        hat = P1Function(square_with_center, [0, 0, 0, 0, 1.0])
        f = SourceTerm.constant(square_with_center, 0.0)
        total, per_element = indicator_discretization(hat, f, EPS, exps2, rho=1e-3)
        np.testing.assert_allclose(per_element, 8.0, rtol=1e-14)
        assert total == pytest.approx(0.032, rel=1e-14)

    def test_volume_term(self, square_with_center, exps2):
        # No jumps; each triangle contributes area * (h_T |f|)^2 / 2
        f = SourceTerm.constant(square_with_center, 3.0)
        _, per_element = indicator_discretization(
            P1Function.zeros(square_with_center), f, EPS, exps2
        )
        np.testing.assert_allclose(per_element, 0.25 * 0.5 * 3.0**2, rtol=1e-14)

    def test_linear_in_rho(self, lshape_fine, source_one, exps10):
        f = source_one(lshape_fine)
        state = kacanov_step(initial_state(lshape_fine, f, exps10, EPS), f, exps10)
        one, per_one = indicator_discretization(state.u, f, EPS, exps10, rho=1e-3)
        two, per_two = indicator_discretization(state.u, f, EPS, exps10, rho=2e-3)
        assert two == pytest.approx(2.0 * one, rel=1e-14)
        np.testing.assert_array_equal(per_one, per_two)

    def test_rho_must_be_positive(self, lshape_mesh, exps10):
        with pytest.raises(DomainError):
            indicator_discretization(
                P1Function.zeros(lshape_mesh),
                SourceTerm.constant(lshape_mesh, 1.0),
                EPS,
                exps10,
                rho=0.0,
            )

    def test_report(self, lshape_fine, source_one):
        exps = Exponents(5.0)
        f = source_one(lshape_fine)
        state = kacanov_step(initial_state(lshape_fine, f, exps, EPS), f, exps)
        report = compute_indicators(state.u, state.sigma, f, EPS, exps, rho=1e-3)
        values = report.as_dict()
        assert set(values) == {"eps_plus", "eps_minus", "kacanov", "refine"}
        assert report.total == pytest.approx(sum(values.values()))
        assert report.eta_h_sq == pytest.approx(1e-3 * report.per_element.sum())
        for key in ("eps_plus", "eps_minus", "refine"):
            assert values[key] >= 0.0
        assert values["kacanov"] >= -1e-12 * abs(state.dual_energy)


class TestDoerflerMarking:
    def test_example(self):
        np.testing.assert_array_equal(doerfler_mark([4.0, 3.0, 2.0, 1.0], 0.5), [0, 1])

    def test_small_theta_marks_one(self):
        np.testing.assert_array_equal(doerfler_mark([1.0, 5.0, 2.0], 1e-9), [1])

    def test_uniform_values_large_theta(self):
        np.testing.assert_array_equal(doerfler_mark(np.ones(6), 0.999), np.arange(6))

    def test_ties_go_by_index(self):
        np.testing.assert_array_equal(doerfler_mark([1.0, 2.0, 2.0, 2.0], 0.5), [1, 2])

    def test_all_zero(self):
        assert doerfler_mark(np.zeros(5), 0.3).size == 0

    @pytest.mark.parametrize("theta", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_theta(self, theta):
        with pytest.raises(DomainError):
            doerfler_mark([1.0, 2.0], theta)

    def test_negative_indicator(self):
        with pytest.raises(DomainError):
            doerfler_mark([1.0, -2.0], 0.5)

    def test_postcondition(self, rng):
        for _ in range(200):
            values = rng.exponential(size=rng.integers(1, 60))
            theta = rng.uniform(0.01, 0.99)
            marked = doerfler_mark(values, theta)
            mass = values[marked].sum()
            assert mass >= theta * values.sum() * (1 - 1e-12)
            smallest = marked[np.argmin(values[marked])]
            assert mass - values[smallest] < theta * values.sum()
