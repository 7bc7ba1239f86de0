import numpy as np
import pytest

from lmmss import (
    DimensionTooSmall,
    EvaluationFailure,
    InverseProblem,
    NegativeDelta,
    NonpositiveCoefficient,
    make_noisy_data,
    make_problem,
    problem_autoconvolution,
    problem_coefficient_identification,
    problem_from_files,
    problem_linear_illposed,
)
from helpers import central_diff_jacobian

ALL_NAMES = ("linear", "autoconvolution", "coefficient")


class TestNoisyData:
    def test_forced_direction(self):
        data = make_noisy_data(np.array([1.0, 0.0]), 0.1, direction=[0.0, 1.0])
        np.testing.assert_allclose(data.y_delta, [1.0, 0.1])

    def test_zero_delta_is_exact(self):
        y = np.array([2.0, -1.0, 0.5])
        for seed in (0, 1, 99):
            np.testing.assert_array_equal(make_noisy_data(y, 0.0, seed).y_delta, y)

    def test_norm_equality(self):
        rng = np.random.default_rng(12)
        y = rng.standard_normal(20)
        data = make_noisy_data(y, 1e-3, seed=4)
        assert np.linalg.norm(y - data.y_delta) == pytest.approx(1e-3, abs=1e-15)

    def test_negative_delta(self):
        with pytest.raises(NegativeDelta):
            make_noisy_data(np.ones(3), -0.1)

    def test_reproducible_per_seed(self):
        y = np.arange(5, dtype=float)
        a = make_noisy_data(y, 0.2, seed=7)
        b = make_noisy_data(y, 0.2, seed=7)
        np.testing.assert_array_equal(a.y_delta, b.y_delta)
        c = make_noisy_data(y, 0.2, seed=8)
        assert np.any(c.y_delta != a.y_delta)


class TestBundledInvariants:
    @pytest.mark.parametrize("name", ALL_NAMES)
    def test_zero_residual_certificate(self, name):
        prob = make_problem(name, 16)
        gap = np.linalg.norm(prob.evaluate_F(prob.x_dagger) - prob.y_exact)
        assert gap <= 1e-10 * (1.0 + np.linalg.norm(prob.y_exact))
        assert prob.m >= prob.n

    @pytest.mark.parametrize("name", ALL_NAMES)
    def test_jacobian_vs_finite_differences(self, name):
        prob = make_problem(name, 12)
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = prob.x_dagger + 0.1 * rng.standard_normal(prob.n)
            if name == "coefficient":
                x = np.clip(x, 0.2, None)
            J = prob.evaluate_J(x)
            Jfd = central_diff_jacobian(prob.evaluate_F, x)
            assert np.abs(J - Jfd).max() <= 1e-5 * max(np.abs(J).max(), 1.0)


class TestLinearProblem:
    def test_jacobian_constant(self):
        prob = problem_linear_illposed(10)
        J1 = prob.evaluate_J(np.zeros(10))
        J2 = prob.evaluate_J(np.ones(10))
        np.testing.assert_array_equal(J1, J2)
        np.testing.assert_allclose(prob.evaluate_F(np.ones(10)), J1 @ np.ones(10))

    def test_taylor_remainder_vanishes(self):
        prob = problem_linear_illposed(10)
        rng = np.random.default_rng(1)
        x, xt = rng.standard_normal(10), rng.standard_normal(10)
        rem = prob.evaluate_J(x) @ (xt - x) - prob.evaluate_F(xt) + prob.evaluate_F(x)
        assert np.linalg.norm(rem) <= 1e-14

    @pytest.mark.parametrize("n", [32, 48])
    def test_condition_number_growth(self, n):
        A = problem_linear_illposed(n).evaluate_J(np.zeros(n))
        s = np.linalg.svd(A, compute_uv=False)
        assert s[0] / s[-1] > 1e6

    def test_too_small(self):
        with pytest.raises(DimensionTooSmall):
            problem_linear_illposed(3)


class TestAutoconvolution:
    def test_zero_maps_to_zero(self):
        prob = problem_autoconvolution(10)
        np.testing.assert_array_equal(prob.evaluate_F(np.zeros(10)), np.zeros(10))

    def test_jacobian_vs_finite_differences(self):
        prob = problem_autoconvolution(14)
        rng = np.random.default_rng(8)
        for _ in range(5):
            x = 1.0 + 0.5 * rng.standard_normal(14)
            J = prob.evaluate_J(x)
            Jfd = central_diff_jacobian(prob.evaluate_F, x)
            assert np.abs(J - Jfd).max() <= 1e-6 * max(np.abs(J).max(), 1.0)

    def test_jacobian_affine_in_state(self):
        # quadratic map: J(x + 2d) - J(x) = 2 (J(x + d) - J(x))
        prob = problem_autoconvolution(10)
        rng = np.random.default_rng(2)
        x, d = rng.standard_normal(10), rng.standard_normal(10)
        J0 = prob.evaluate_J(x)
        J1 = prob.evaluate_J(x + d)
        J2 = prob.evaluate_J(x + 2 * d)
        np.testing.assert_allclose(J2 - J0, 2 * (J1 - J0), atol=1e-12)

    def test_too_small(self):
        with pytest.raises(DimensionTooSmall):
            problem_autoconvolution(7)


class TestCoefficientProblem:
    def test_constant_coefficient_parabola(self):
        n = 24
        prob = problem_coefficient_identification(n, source=1.0)
        t = np.arange(1, n + 1) / (n + 1)
        a0 = 1.7
        u = prob.evaluate_F(np.full(n, a0))
        # the three-point stencil is exact for quadratics
        np.testing.assert_allclose(u, t * (1 - t) / (2 * a0), atol=1e-13)

    def test_default_source_closed_form(self):
        n = 40
        prob = problem_coefficient_identification(n)
        t = np.arange(1, n + 1) / (n + 1)
        u = prob.evaluate_F(np.full(n, 2.0))
        h = 1.0 / (n + 1)
        assert np.abs(u - (np.cos(2 * np.pi * t) - 1.0) / 2.0).max() <= 40.0 * h**2

    def test_jacobian_at_exact_solution(self):
        prob = problem_coefficient_identification(12)
        J = prob.evaluate_J(prob.x_dagger)
        Jfd = central_diff_jacobian(prob.evaluate_F, prob.x_dagger)
        assert np.abs(J - Jfd).max() <= 1e-6 * np.abs(J).max()

    def test_boundary_columns_least_sensitive(self):
        prob = problem_coefficient_identification(24)
        J = prob.evaluate_J(prob.x_dagger)
        norms = np.linalg.norm(J, axis=0)
        assert norms[0] < np.median(norms)
        assert norms[-1] < np.median(norms)
        # sensitivity climbs over the first few interior nodes
        assert norms[0] < norms[1] < norms[2]
        assert norms[-1] < norms[-2] < norms[-3]

    def test_positivity_floor(self):
        prob = problem_coefficient_identification(8)
        bad = np.ones(8)
        bad[3] = 0.0
        with pytest.raises(NonpositiveCoefficient):
            prob.evaluate_F(bad)
        with pytest.raises(NonpositiveCoefficient):
            prob.evaluate_J(bad)

    def test_log_parameterization(self):
        prob = problem_coefficient_identification(10, log_parameterization=True)
        z = prob.x_dagger + 0.05
        J = prob.evaluate_J(z)
        Jfd = central_diff_jacobian(prob.evaluate_F, z)
        assert np.abs(J - Jfd).max() <= 1e-6 * np.abs(J).max()

    def test_too_small(self):
        with pytest.raises(DimensionTooSmall):
            problem_coefficient_identification(7)


class TestInverseProblemWrapper:
    def test_finite_difference_fallback(self):
        A = np.array([[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]])
        prob = InverseProblem(
            name="fd", eval_F=lambda x: A @ x, eval_J=None, m=3, n=2,
            y_exact=A @ np.ones(2),
        )
        J = prob.evaluate_J(np.array([0.3, -0.7]))
        np.testing.assert_allclose(J, A, atol=1e-8)

    def test_shape_and_finiteness_guards(self):
        prob = InverseProblem(
            name="bad", eval_F=lambda x: np.array([np.inf]), eval_J=None,
            m=1, n=1, y_exact=np.zeros(1),
        )
        with pytest.raises(EvaluationFailure):
            prob.evaluate_F(np.zeros(1))

    def test_inconsistent_exact_solution_rejected(self):
        with pytest.raises(ValueError):
            InverseProblem(
                name="bad", eval_F=lambda x: x, eval_J=None, m=2, n=2,
                y_exact=np.ones(2), x_dagger=np.zeros(2),
            )

    def test_unknown_problem_name(self):
        with pytest.raises(ValueError, match="autoconvolution"):
            make_problem("nosuch", 10)


class TestProblemFromFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((6, 4))
        x = rng.standard_normal(4)
        np.savetxt(tmp_path / "A.txt", A)
        np.savetxt(tmp_path / "y.txt", A @ x)
        np.savetxt(tmp_path / "x.txt", x)
        prob = problem_from_files(
            tmp_path / "A.txt", tmp_path / "y.txt", tmp_path / "x.txt"
        )
        assert prob.m == 6 and prob.n == 4
        np.testing.assert_allclose(prob.evaluate_F(x), prob.y_exact, atol=1e-12)
        assert prob.x_dagger is not None
