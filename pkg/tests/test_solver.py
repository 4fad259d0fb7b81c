import numpy as np
import pytest
import scipy.sparse as sp

from plateau_dg.catalog import interpolate_guess, rescale_to_perimeter
from plateau_dg.boundary import unit_speed_violation
from plateau_dg.forms import jacobian, residual
from plateau_dg.solver import (
    CONVERGED,
    LINE_SEARCH_FAILURE,
    MAX_ITERATIONS,
    SingularMatrixError,
    SolverConfig,
    line_search_cubic,
    newton_solve,
    solve_linear,
    spurious_multiplier_mode,
)
from plateau_dg.state import State
from conftest import make_problem


class TestLineSearch:
    def test_full_step(self):
        assert line_search_cubic(lambda a: (1 - a) ** 2, -2.0) == 1.0

    def test_armijo(self):
        def merit(a):
            return (1 - a) ** 2 + 100 * a**4

        lam = line_search_cubic(merit, -2.0)
        assert 0 < lam < 1
        assert merit(lam) <= merit(0) + 1e-4 * lam * -2.0

    def test_non_descent(self):
        with pytest.raises(ValueError):
            line_search_cubic(lambda a: a, 0.0)

    def test_exhaustion(self):
        from plateau_dg.solver import LineSearchError

        with pytest.raises(LineSearchError):
            line_search_cubic(lambda a: 1.0 + a, -1.0, min_step=1e-3)

    def test_safeguard(self):
        trials = []

        def merit(a):
            trials.append(a)
            return 1.0 + 1e6 * a**3 if a > 1e-3 else 1.0 - a

        line_search_cubic(merit, -1.0)
        steps = [t for t in trials if t > 0]
        for prev, cur in zip(steps, steps[1:]):
            assert 0.1 * prev - 1e-15 <= cur <= 0.5 * prev + 1e-15


class TestSolveLinear:
    def test_identity(self):
        np.testing.assert_allclose(solve_linear(sp.identity(4), np.eye(4)[0]), np.eye(4)[0])

    def test_saddle(self):
        np.testing.assert_allclose(solve_linear(sp.csc_matrix([[2.0, 1.0], [1.0, 0.0]]), [1.0, 1.0]), [1, -1], atol=1e-14)

    def test_spd(self, rng):
        M = rng.standard_normal((50, 50))
        A = M.T @ M + np.eye(50)
        b = rng.standard_normal(50)
        x = solve_linear(sp.csc_matrix(A), b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
        v = rng.standard_normal(50)
        assert np.linalg.norm(solve_linear(sp.csc_matrix(A), A @ v) - v) <= 1e-8 * np.linalg.norm(v)

    def test_singular(self):
        A = sp.csc_matrix(np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 2.0]]))
        with pytest.raises(SingularMatrixError) as info:
            solve_linear(A, np.ones(3))
        assert info.value.pivot == 1


class TestConfig:
    @pytest.mark.parametrize("kw", [{"abs_tol": 0}, {"max_iters": 0}, {"ls_sufficient_decrease": 1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestMultiplierMode:
    def test_mode_annihilates_coupling_at_affine_traces(self, small):
        mesh, layout = small
        s = interpolate_guess(mesh, layout, "disc")
        J = jacobian(s, make_problem(), mesh, layout).tocsr()
        B = J[layout.multiplier_slice(), :][:, layout.membrane_slice()]
        m = spurious_multiplier_mode(layout)
        assert np.max(np.abs(B.T @ m)) < 1e-12
        assert abs(np.linalg.norm(m) - 1) < 1e-15

    def test_mode_measures_curvature(self, small, rng):
        mesh, layout = small
        s = interpolate_guess(mesh, layout, "paraboloid")
        r = residual(s, make_problem(), mesh, layout)[layout.multiplier_slice()]
        assert spurious_multiplier_mode(layout) @ r > 0


@pytest.fixture(scope="module")
def disc_run(mesh64):
    mesh, layout = mesh64
    init = rescale_to_perimeter(interpolate_guess(mesh, layout, "disc"), mesh, layout)
    state, report = newton_solve(init, make_problem(), mesh, layout)
    return mesh, layout, init, state, report


class TestNewton:
    def test_disc_converges(self, disc_run):
        mesh, layout, _, state, report = disc_run
        assert report.converged and report.termination_reason == CONVERGED
        assert report.residual_norms[-1] < 1e-6
        assert unit_speed_violation(state, mesh, layout)[0] < 1e-3

    def test_report_invariants(self, disc_run):
        *_, report = disc_run
        assert len(report.residual_norms) == report.iterations + 1
        assert len(report.step_lengths) == report.iterations
        assert all(0 < s <= 1 for s in report.step_lengths)
        merit = 0.5 * np.array(report.residual_norms) ** 2
        assert np.all(np.diff(merit) < 0)

    def test_restart_from_solution(self, disc_run):
        mesh, layout, _, state, _ = disc_run
        _, report = newton_solve(state, make_problem(), mesh, layout)
        assert report.converged and report.iterations <= 1
        assert all(s == 1.0 for s in report.step_lengths)

    def test_deterministic(self, disc_run):
        mesh, layout, init, state, report = disc_run
        state2, report2 = newton_solve(init, make_problem(), mesh, layout)
        assert report2.residual_norms == report.residual_norms
        np.testing.assert_array_equal(state2.vector, state.vector)

    def test_unrescaled_guess_fails(self, small):
        mesh, layout = small
        # the smoother guesses recover from this scaling; the shoehorn does not
        init = interpolate_guess(mesh, layout, "shoehorn").scaled(10.0)
        _, report = newton_solve(init, make_problem(), mesh, layout, SolverConfig(max_iters=30))
        assert not report.converged
        assert report.termination_reason in (LINE_SEARCH_FAILURE, MAX_ITERATIONS)

    def test_non_finite_initial(self, small):
        mesh, layout = small
        x = np.full(layout.membrane_total, np.inf)
        state, report = newton_solve(State(x, np.zeros(layout.multiplier_total)), make_problem(), mesh, layout)
        assert not report.converged and report.termination_reason == "diverged"
