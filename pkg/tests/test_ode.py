import math

import numpy as np
import pytest

from conftest import (
    ROTATION,
    finite_difference_jacobian,
    logistic_system,
    rotation_system,
    scalar_decay_system,
    stable_matrix,
)
from odeident import (
    CallbackSystem,
    DimensionError,
    DomainError,
    IntegrationError,
    MatrixLinear,
    PolyMap,
    PolynomialBasis,
    evaluate,
    integrate,
    integrate_with_sensitivity,
    mat_exp,
    rk4_fixed,
)
from odeident.ode import read_trajectory_csv, write_trajectory_csv


class TestEvaluate:
    def test_matrix_linear_rotation(self):
        sys = rotation_system()
        f, dfdx, dfda = evaluate(sys, [1.0, 0.0], MatrixLinear.pack(ROTATION))
        assert np.allclose(f, [0.0, -1.0])
        assert np.array_equal(dfdx, ROTATION)
        # (dfda)[r, i*k+j] = delta_{ri} * x_j
        expected = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
        assert np.array_equal(dfda, expected)

    def test_polynomial_basis_by_hand(self):
        sys = logistic_system()
        f, dfdx, dfda = evaluate(sys, [2.0], [1.0, -1.0])
        assert np.allclose(f, [-2.0])          # 2 - 4
        assert np.allclose(dfda, [[2.0, 4.0]])
        assert np.allclose(dfdx, [[1.0 - 2.0 * 2.0]])

    def test_zero_alpha_gives_zero_field(self):
        for sys, x in ((logistic_system(), [0.7]),
                       (rotation_system(), [1.0, -2.0])):
            f, _, _ = evaluate(sys, x, np.zeros(sys.param_dim))
            assert np.allclose(f, 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate(rotation_system(), [1.0], np.zeros(4))
        with pytest.raises(DimensionError):
            evaluate(logistic_system(), [1.0], [1.0])

    def test_zero_basis_map_rejected(self):
        with pytest.raises(DomainError):
            PolynomialBasis([PolyMap.scalar([(0.0, 1)])])

    def test_symbolic_partials_match_finite_differences(self):
        # 2-D basis with mixed monomials exercises the jacobian code
        p1 = PolyMap(2, [[(1.0, (1, 2))], [(0.5, (2, 0)), (-1.0, (0, 1))]])
        p2 = PolyMap(2, [[(2.0, (0, 1))], [(1.0, (1, 1))]])
        sys = PolynomialBasis([p1, p2])
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = rng.uniform(-1.5, 1.5, size=2)
            alpha = rng.uniform(-2.0, 2.0, size=2)
            dfdx = sys.dfdx(x, alpha)
            dfda = sys.dfda(x, alpha)
            fd_x = finite_difference_jacobian(lambda z: sys.f(z, alpha), x)
            fd_a = finite_difference_jacobian(lambda a: sys.f(x, a), alpha)
            assert np.abs(dfdx - fd_x).max() < 1e-7
            assert np.abs(dfda - fd_a).max() < 1e-7

    def test_callback_defaults_to_fd_and_flags(self):
        sys = CallbackSystem(1, 1, lambda x, a: np.array([a[0] * x[0] ** 2]))
        assert not sys.derivatives_exact
        x, alpha = np.array([1.5]), np.array([0.7])
        assert abs(sys.dfdx(x, alpha)[0, 0] - 2.0 * 0.7 * 1.5) < 1e-8
        assert abs(sys.dfda(x, alpha)[0, 0] - 1.5 ** 2) < 1e-8


class TestIntegrate:
    def test_scalar_decay_closed_form(self):
        traj = integrate(scalar_decay_system(), [-0.5], [1.0], t_end=5.0,
                         samples=5, tol=1e-12)
        assert np.array_equal(traj.times, np.arange(1.0, 6.0))
        assert np.abs(traj.states[:, 0] - np.exp(-0.5 * traj.times)).max() < 1e-10

    def test_zero_field_constant(self):
        sys = MatrixLinear(2)
        traj = integrate(sys, np.zeros(4), [0.3, -0.7], t_end=2.0, samples=4)
        assert np.allclose(traj.states, [0.3, -0.7], atol=0.0)

    def test_rotation_closed_form(self):
        traj = integrate(rotation_system(), MatrixLinear.pack(ROTATION),
                         [1.0, 0.0], t_end=5.0, samples=10, tol=1e-12)
        exact = np.column_stack([np.cos(traj.times), -np.sin(traj.times)])
        assert np.abs(traj.states - exact).max() < 1e-10

    def test_deterministic_bitwise(self):
        args = (logistic_system(), [1.0, -1.0], [0.1], 3.0, 7)
        a = integrate(*args, tol=1e-10)
        b = integrate(*args, tol=1e-10)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.times, b.times)

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(17)
        for k in (2, 3):
            for _ in range(5):
                a = stable_matrix(rng, k, norm_cap=5.0)
                x0 = rng.uniform(-1.0, 1.0, size=k)
                traj = integrate(MatrixLinear(k), MatrixLinear.pack(a), x0,
                                 t_end=5.0, samples=5, tol=1e-10)
                for t, state in zip(traj.times, traj.states):
                    assert np.linalg.norm(state - mat_exp(a, t) @ x0) <= 1e-8

    def test_rk4_order(self):
        sys = scalar_decay_system()
        rhs = sys.rhs(np.array([-0.5]))
        exact = math.exp(-0.5 * 2.0)
        errors = []
        for n_steps in (16, 32):
            _, states = rk4_fixed(rhs, np.array([1.0]), 2.0, n_steps)
            errors.append(abs(states[-1, 0] - exact))
        factor = errors[0] / errors[1]
        assert 12.0 <= factor <= 20.0

    def test_blow_up_raises_with_time(self):
        # x' = x^2 from 1 blows up at t = 1
        sys = PolynomialBasis([PolyMap.scalar([(1.0, 2)])])
        with pytest.raises(IntegrationError) as err:
            integrate(sys, [1.0], [1.0], t_end=2.0, samples=2, tol=1e-10)
        assert 0.9 <= err.value.t_fail <= 1.1

    def test_precondition_errors(self):
        sys = scalar_decay_system()
        with pytest.raises(DomainError):
            integrate(sys, [-0.5], [1.0], t_end=0.0, samples=1)
        with pytest.raises(DomainError):
            integrate(sys, [-0.5], [1.0], t_end=1.0, samples=0)
        with pytest.raises(DomainError):
            integrate(sys, [-0.5], [1.0], t_end=1.0, samples=1, tol=1e-2)


class TestSensitivity:
    def test_initial_sensitivity_is_zero_limit(self):
        bundle = integrate_with_sensitivity(scalar_decay_system(), [-0.5], [1.0],
                                            t_end=1e-6, samples=1, tol=1e-12)
        assert np.abs(bundle.sensitivities).max() <= 1e-5

    def test_scalar_closed_form(self):
        # d/da e^{a t} x0 = t e^{a t} x0
        bundle = integrate_with_sensitivity(scalar_decay_system(), [-0.5], [1.0],
                                            t_end=2.0, samples=2, tol=1e-12)
        z = bundle.sensitivities[:, 0, 0]
        expected = bundle.times * np.exp(-0.5 * bundle.times)
        assert np.abs(z - expected).max() < 1e-8

    @pytest.mark.parametrize("sys,alpha,x0", [
        ("scalar", [-0.5], [1.0]),
        ("logistic", [1.0, -1.0], [0.5]),
        ("rotation", MatrixLinear.pack(ROTATION), [1.0, 0.7]),
    ])
    def test_matches_finite_differences(self, sys, alpha, x0):
        builders = {"scalar": scalar_decay_system, "logistic": logistic_system,
                    "rotation": rotation_system}
        system = builders[sys]()
        alpha = np.asarray(alpha, dtype=float)
        tol = 1e-10
        bundle = integrate_with_sensitivity(system, alpha, x0, t_end=2.0,
                                            samples=4, tol=tol)
        stacked = bundle.stacked_jacobian()

        def phi_like(a):
            return integrate(system, a, x0, t_end=2.0, samples=4,
                             tol=tol).states.ravel()

        fd = finite_difference_jacobian(phi_like, alpha, step=1e-5)
        rel = np.linalg.norm(stacked - fd) / max(np.linalg.norm(fd), 1e-30)
        assert rel <= max(1e-4, 100.0 * tol)

    def test_state_part_matches_plain_integration(self):
        # different step sequences, so agreement only to ~global error
        bundle = integrate_with_sensitivity(logistic_system(), [1.0, -1.0], [0.1],
                                            t_end=3.0, samples=6, tol=1e-10)
        traj = integrate(logistic_system(), [1.0, -1.0], [0.1], t_end=3.0,
                         samples=6, tol=1e-10)
        assert np.abs(bundle.states - traj.states).max() < 1e-7


class TestCsv:
    def test_round_trip_is_bitwise(self, tmp_path):
        traj = integrate(logistic_system(), [1.0, -1.0], [0.1], t_end=2.0,
                         samples=5, tol=1e-10)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(path, traj.times, traj.states)
        times, values = read_trajectory_csv(path)
        assert np.array_equal(times, traj.times)
        assert np.array_equal(values, traj.states)
        header = path.read_text().splitlines()[0]
        assert header == "t,x1"

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,x1\n1.0,2.0\n2.0,oops\n")
        from odeident import InputFormatError

        with pytest.raises(InputFormatError) as err:
            read_trajectory_csv(path)
        assert err.value.line == 3

    def test_wrong_column_count_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,x1,x2\n1.0,2.0\n")
        from odeident import InputFormatError

        with pytest.raises(InputFormatError) as err:
            read_trajectory_csv(path)
        assert err.value.line == 2
