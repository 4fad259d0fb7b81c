import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from plateau_dg.catalog import interpolate_function, interpolate_guess, rescale_to_perimeter
from plateau_dg.mesh import generate_disc_mesh
from plateau_dg.solver import newton_solve
from plateau_dg.spaces import build_dofmaps
from plateau_dg.state import State
from plateau_dg.verify import (
    best_fit_plane,
    constraint_report,
    fd_gradient_check,
    polyline_self_intersects,
    traction_profile,
)
from conftest import make_problem


@pytest.fixture(scope="module")
def tiny():
    mesh = generate_disc_mesh(10, 1.0)
    assert mesh.n_cells == 20
    return mesh, build_dofmaps(mesh)


def random_state(mesh, layout, seed=0):
    rng = np.random.default_rng(seed)
    b = rescale_to_perimeter(interpolate_guess(mesh, layout, "disc"), mesh, layout)
    return State(b.x + 0.01 * rng.standard_normal(b.x.shape), rng.standard_normal(layout.multiplier_total))


class TestShapeReport:
    def test_planar_circle(self, small):
        mesh, layout = small
        rep = constraint_report(interpolate_guess(mesh, layout, "disc"), make_problem(), mesh, layout)
        assert rep.planarity < 1e-14
        np.testing.assert_allclose(rep.plane_normal, [0, 0, 1], atol=1e-14)
        assert rep.circularity >= 0 and not rep.self_intersection_hint

    def test_ellipse_plane(self, small):
        mesh, layout = small
        rep = constraint_report(interpolate_guess(mesh, layout, "ellipse"), make_problem(), mesh, layout)
        assert rep.planarity < 1e-12
        assert abs(abs(rep.plane_normal @ np.array([1, 0, -1]) / np.sqrt(2)) - 1) < 1e-12
        assert rep.circularity > 0.1

    def test_rigid_motion(self, small):
        mesh, layout = small
        s = interpolate_guess(mesh, layout, "shoehorn")
        R = Rotation.from_rotvec([0.4, -1.1, 0.3]).as_matrix()
        t = np.array([0.5, -2.0, 1.0])
        moved = (s.x.reshape(-1, 3) @ R.T + t).ravel()
        a = constraint_report(s, make_problem(), mesh, layout)
        b = constraint_report(moved, make_problem(), mesh, layout)
        for name in ("perimeter", "circularity", "planarity"):
            assert abs(getattr(a, name) - getattr(b, name)) < 1e-12, name
        np.testing.assert_allclose(R @ a.plane_normal, b.plane_normal, atol=1e-12)
        assert abs(np.linalg.norm(b.plane_normal) - 1) < 1e-12

    def test_paraboloid_run_plane(self, mesh64):
        mesh, layout = mesh64
        init = rescale_to_perimeter(interpolate_guess(mesh, layout, "paraboloid"), mesh, layout)
        state, report = newton_solve(init, make_problem(), mesh, layout)
        assert report.converged
        rep = constraint_report(state, make_problem(), mesh, layout)
        assert abs(rep.plane_offset) < 1e-2
        assert np.linalg.norm(np.abs(rep.plane_normal) - [0, 0, 1]) < 1e-2
        assert rep.constraints_ok


class TestGeometryHelpers:
    def test_figure_eight_crosses(self):
        t = np.linspace(0, 2 * np.pi, 60, endpoint=False)
        assert polyline_self_intersects(np.column_stack([np.sin(2 * t), np.sin(t)]))
        assert not polyline_self_intersects(np.column_stack([np.cos(t), np.sin(t)]))

    def test_plane_orientation(self):
        t = np.linspace(0, 2 * np.pi, 20, endpoint=False)
        ccw = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
        _, n, d = best_fit_plane(ccw)
        np.testing.assert_allclose(n, [0, 0, 1], atol=1e-14)
        _, n, _ = best_fit_plane(ccw[::-1])
        np.testing.assert_allclose(n, [0, 0, -1], atol=1e-14)


class TestFdCheck:
    def test_random_state(self, tiny):
        mesh, layout = tiny
        for tensor in ("identity", "aniso_trace"):
            assert fd_gradient_check(random_state(mesh, layout), make_problem(tensor), mesh, layout, h=1e-6) < 1e-5

    def test_zero_state(self, tiny):
        mesh, layout = tiny
        z = State(np.zeros(layout.membrane_total), np.zeros(layout.multiplier_total))
        assert fd_gradient_check(z, make_problem(), mesh, layout) < 1e-10

    def test_covers_both_blocks(self, tiny, monkeypatch):
        import plateau_dg.verify as v

        seen = []
        real = v.augmented_energy

        def spy(state, *a, **k):
            seen.append(state.vector.copy())
            return real(state, *a, **k)

        monkeypatch.setattr(v, "augmented_energy", spy)
        mesh, layout = tiny
        s = random_state(mesh, layout)
        fd_gradient_check(s, make_problem(), mesh, layout, n_coords=100)
        moved = {int(np.flatnonzero(z != s.vector)[0]) for z in seen}
        assert len(moved) >= 100
        assert any(i >= layout.membrane_total for i in moved) and any(i < layout.membrane_total for i in moved)

    @pytest.mark.xfail(
        strict=True,
        reason="energy is at most quadratic in each coordinate, so central differences have no "
        "truncation error and the error only grows with round-off as h shrinks",
    )
    def test_error_decreases_over_step_sweep(self, tiny):
        mesh, layout = tiny
        s = random_state(mesh, layout, seed=3)
        errs = [fd_gradient_check(s, make_problem(), mesh, layout, h=h) for h in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
        assert all(b < a for a, b in zip(errs, errs[1:])), errs


class TestTraction:
    def test_zero(self, small):
        mesh, layout = small
        prof = traction_profile(np.zeros(layout.membrane_total), make_problem(), mesh, layout)
        np.testing.assert_array_equal(prof.values, 0)
        assert np.all(np.diff(prof.theta) > 0)

    def test_rotation_field_closes(self, small):
        mesh, layout = small
        x = interpolate_function(mesh, lambda u, v: np.stack([-v, u, 0 * u], axis=-1))
        prof = traction_profile(x, make_problem(), mesh, layout)
        np.testing.assert_array_equal(prof.values[0], 0)
        assert np.max(np.abs(prof.values[-1])) < 1e-10
        assert prof.theta[-1] - prof.theta[0] == pytest.approx(2 * np.pi, abs=1e-12)
        # flux (-nu_y, nu_x, 0) is tangent to the boundary
        for e, edge in enumerate(mesh.boundary_edges):
            step = prof.values[e + 1] - prof.values[e]
            assert abs(step[:2] @ edge.outward_normal) < 1e-12 and step[2] == 0

    def test_linear_in_state(self, small):
        mesh, layout = small
        s = interpolate_guess(mesh, layout, "shoehorn")
        P = make_problem("aniso_shear")
        a = traction_profile(s, P, mesh, layout).values
        b = traction_profile(s.scaled(2.0), P, mesh, layout).values
        np.testing.assert_allclose(b, 2 * a, rtol=1e-13, atol=1e-14)
        assert len(traction_profile(s, P, mesh, layout).samples) == len(mesh.boundary_edges) + 1
