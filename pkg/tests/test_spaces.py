from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plateau_dg.catalog import cell_node_coordinates, interpolate_function
from plateau_dg.mesh import generate_disc_mesh
from plateau_dg.spaces import (
    P2_NODES,
    build_dofmaps,
    p2_segment_basis,
    p2_triangle_basis,
    segment_quadrature,
    triangle_quadrature,
)


def triangle_monomial(a, b):
    # int_T x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


class TestTriangleBasis:
    def test_nodal(self):
        values, _ = p2_triangle_basis(P2_NODES)
        np.testing.assert_allclose(values, np.eye(6), atol=1e-15)

    def test_partition_of_unity(self):
        values, grads = p2_triangle_basis(np.array([0.3, 0.3]))
        assert abs(values.sum() - 1) < 1e-15
        np.testing.assert_allclose(grads.sum(axis=0), 0, atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_partition_property(self, x, y):
        if x + y > 1:
            x, y = 1 - x, 1 - y
        values, grads = p2_triangle_basis(np.array([x, y]))
        assert abs(values.sum() - 1) < 1e-13
        assert np.max(np.abs(grads.sum(axis=0))) < 1e-13

    def test_gradients_match_differences(self, rng):
        p = rng.random((5, 2)) * 0.5
        _, g = p2_triangle_basis(p)
        h = 1e-6
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            fd = (p2_triangle_basis(p + e)[0] - p2_triangle_basis(p - e)[0]) / (2 * h)
            np.testing.assert_allclose(g[..., d], fd, atol=1e-8)


class TestSegmentBasis:
    def test_nodal(self):
        values, _, _ = p2_segment_basis(np.array([0.0, 1.0, 0.5]))
        np.testing.assert_allclose(values, np.eye(3), atol=1e-15)

    def test_bubble_second_derivative(self):
        _, _, d2 = p2_segment_basis(np.linspace(0, 1, 7))
        np.testing.assert_array_equal(d2[:, 2], -8.0)

    def test_partition(self):
        v, d1, d2 = p2_segment_basis(0.37)
        assert abs(v.sum() - 1) < 1e-15
        assert abs(d1.sum()) < 1e-14 and abs(d2.sum()) < 1e-14


class TestQuadrature:
    @pytest.mark.parametrize("degree", range(1, 9))
    def test_triangle_exactness(self, degree):
        rule = triangle_quadrature(degree)
        assert abs(rule.weights.sum() - 0.5) < 1e-14
        assert np.all(rule.weights > 0)
        x, y = rule.points.T
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                q = np.sum(rule.weights * x**a * y**b)
                assert abs(q - triangle_monomial(a, b)) < 1e-13, (a, b)

    def test_centroid(self):
        rule = triangle_quadrature(1)
        np.testing.assert_allclose(rule.points, [[1 / 3, 1 / 3]])
        np.testing.assert_allclose(rule.weights, [0.5])

    def test_x2y2(self):
        rule = triangle_quadrature(4)
        x, y = rule.points.T
        assert abs(np.sum(rule.weights * x**2 * y**2) - 1 / 180) < 1e-14

    @pytest.mark.parametrize("degree", range(1, 11))
    def test_segment_exactness(self, degree):
        rule = segment_quadrature(degree)
        assert abs(rule.weights.sum() - 1) < 1e-14
        for k in range(degree + 1):
            assert abs(np.sum(rule.weights * rule.points**k) - 1 / (k + 1)) < 1e-13

    def test_segment_midpoint_and_t5(self):
        mid = segment_quadrature(1)
        np.testing.assert_allclose(mid.points, [0.5])
        rule = segment_quadrature(5)
        assert len(rule) == 3
        assert abs(np.sum(rule.weights * rule.points**5) - 1 / 6) < 1e-14

    @pytest.mark.parametrize("bad", [0, 9, 2.5])
    def test_triangle_bad_degree(self, bad):
        with pytest.raises(ValueError):
            triangle_quadrature(bad)

    @pytest.mark.parametrize("bad", [0, 11])
    def test_segment_bad_degree(self, bad):
        with pytest.raises(ValueError):
            segment_quadrature(bad)


class TestDofmaps:
    def test_fan(self, fan):
        _, layout = fan
        assert layout.membrane_total == 72
        assert layout.multiplier_total == 8

    def test_504_multiplier_unknowns(self):
        layout = build_dofmaps(generate_disc_mesh(252, 0.5))
        assert layout.multiplier_total == 504

    def test_bijection(self, small):
        mesh, layout = small
        assert np.array_equal(np.sort(layout.cell_to_global.ravel()), np.arange(layout.membrane_total))
        assert len(np.unique(layout.boundary_to_global)) == layout.multiplier_total
        assert layout.total == layout.membrane_total + layout.multiplier_total

    def test_sharing(self):
        layout = build_dofmaps(generate_disc_mesh(8, 1.0))
        counts = np.bincount(layout.boundary_to_global.ravel())
        assert np.all(counts[0::2] == 2)
        assert np.all(counts[1::2] == 1)

    def test_trace_dofs_match_edge_geometry(self, small):
        mesh, layout = small
        nodes = cell_node_coordinates(mesh)
        td = layout.trace_dofs()
        for e, edge in enumerate(mesh.boundary_edges):
            pts = nodes.reshape(-1, 2)[td[e, :, 0] // 3]
            a, b = mesh.vertices[list(edge.endpoints)]
            np.testing.assert_allclose(pts, [a, b, 0.5 * (a + b)], atol=1e-14)

    def test_quadratic_reproduction(self, small, rng):
        mesh, _ = small

        def f(u, v):
            return np.stack([1 + u - 2 * v, u * v, 3 * u**2 - v**2 + 0.5 * v], axis=-1)

        x = interpolate_function(mesh, f).reshape(mesh.n_cells, 6, 3)
        cells = rng.integers(0, mesh.n_cells, 20)
        ref = rng.random((20, 2)) * 0.5
        p = mesh.vertices[mesh.triangles[cells]]
        phys = p[:, 0] + np.einsum("cij,cj->ci", np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], -1), ref)
        vals, _ = p2_triangle_basis(ref)
        got = np.einsum("cn,cnk->ck", vals, x[cells])
        np.testing.assert_allclose(got, f(phys[:, 0], phys[:, 1]), atol=1e-12)
