import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshcvae import shapes
from meshcvae.errors import DegenerateFace, IndexOutOfRange, IsolatedVertex, NoEdges, ParseError
from meshcvae.mesh import (
    Mesh, average_edge_length, build_adjacency, face_area, face_centroid, face_normal, vertex_normal,
)
from meshcvae.meshio import load_mesh

from conftest import UNIT_CUBE_OFF, fan, one_triangle


def test_centroid_of_unit_right_triangle():
    np.testing.assert_allclose(face_centroid(one_triangle(), 0), [1 / 3, 1 / 3, 0])


def test_centroid_of_equilateral_triangle_at_origin():
    ang = 2 * np.pi * np.arange(3) / 3
    m = Mesh(np.column_stack([np.cos(ang), np.sin(ang), np.zeros(3)]), [[0, 1, 2]])
    np.testing.assert_allclose(face_centroid(m, 0), 0.0, atol=1e-15)


def test_face_normal_and_winding_flip():
    np.testing.assert_array_equal(face_normal(one_triangle(), 0), [0, 0, 1])
    flipped = Mesh(one_triangle().vertices, [[0, 2, 1]])
    np.testing.assert_array_equal(face_normal(flipped, 0), [0, 0, -1])


def test_collinear_triangle_is_degenerate():
    m = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(DegenerateFace):
        face_normal(m, 0)
    assert face_area(m, 0) == 0.0
    assert m.degenerate_faces[0]


def test_area_and_scaling_law():
    m = one_triangle()
    assert face_area(m, 0) == 0.5
    assert face_area(m.with_vertices(2 * m.vertices), 0) == pytest.approx(2.0)


def test_vertex_normal_flat_grid_interior():
    g = shapes.grid(4, 4)
    interior = np.flatnonzero(
        (np.abs(g.vertices[:, 0]) < 0.49) & (np.abs(g.vertices[:, 1]) < 0.49)
        & (g.vertices[:, 0] > g.vertices[:, 0].min()) & (g.vertices[:, 1] > g.vertices[:, 1].min())
    )
    assert len(interior)
    for v in interior:
        np.testing.assert_allclose(vertex_normal(g, v), [0, 0, 1], atol=1e-15)


def test_vertex_normal_corner_of_three_orthogonal_faces():
    # right triangles in the xy, yz and zx planes meeting at the origin, equal areas
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    f = [[0, 2, 1], [0, 3, 2], [0, 1, 3]]  # outward normals -z, -x, -y
    m = Mesh(v, f)
    np.testing.assert_allclose(vertex_normal(m, 0), -np.ones(3) / np.sqrt(3), atol=1e-15)


def test_isolated_vertex():
    m = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
    with pytest.raises(IsolatedVertex):
        vertex_normal(m, 3)
    assert np.flatnonzero(m.isolated_vertices).tolist() == [3]


def test_average_edge_length_right_triangle_and_scale():
    m = one_triangle()
    assert average_edge_length(m) == pytest.approx((2 + np.sqrt(2)) / 3, abs=1e-15)
    assert average_edge_length(m.with_vertices(3 * m.vertices)) == pytest.approx(
        3 * (2 + np.sqrt(2)) / 3, abs=1e-14)


def test_unit_cube_edge_length_by_hand_enumeration():
    m = load_mesh(UNIT_CUBE_OFF, "off")
    # hand enumeration of unique undirected edges
    edges = {tuple(sorted(e)) for f in m.faces.tolist() for e in itertools.combinations(f, 2)}
    assert len(edges) == 18
    lengths = sorted(np.linalg.norm(m.vertices[a] - m.vertices[b]) for a, b in edges)
    assert lengths.count(1.0) == 12
    assert m.edges.shape == (18, 2)
    assert average_edge_length(m) == pytest.approx((12 + 6 * np.sqrt(2)) / 18, abs=1e-15)


def test_no_edges():
    with pytest.raises(NoEdges):
        average_edge_length(Mesh(np.zeros((2, 3)), np.zeros((0, 3), dtype=int)))


def test_construction_errors():
    with pytest.raises(IndexOutOfRange):
        Mesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(ParseError):
        Mesh(np.eye(3), [[0, 1, 1]])


def test_arrays_are_read_only():
    m = one_triangle()
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


def test_adjacency_shared_edge_fan_and_disconnected():
    two = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [1, 3, 2]])
    a = build_adjacency(two)
    assert a.face_to_faces(0).tolist() == [1] and a.face_to_faces(1).tolist() == [0]

    f6 = fan(6)
    assert len(build_adjacency(f6).vertex_to_faces(0)) == 6

    apart = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]], [[0, 1, 2], [3, 4, 5]])
    a = build_adjacency(apart)
    assert len(a.face_to_faces(0)) == 0 and len(a.face_to_faces(1)) == 0


def test_adjacency_exhaustive_scan():
    m = shapes.torus(16, 8)
    a = m.adjacency
    faces = m.faces.tolist()
    for v in range(m.n_vertices):
        expect = [i for i, f in enumerate(faces) if v in f]
        assert a.vertex_to_faces(v).tolist() == expect
    sets = [set(a.face_to_faces(i).tolist()) for i in range(m.n_faces)]
    for i, s in enumerate(sets):
        assert i not in s
        for j in s:
            assert i in sets[j]
            assert set(faces[i]) & set(faces[j])


def test_normals_orthogonal_to_edges_and_unit():
    m = shapes.icosphere(2)
    e1 = m.vertices[m.faces[:, 1]] - m.vertices[m.faces[:, 0]]
    e2 = m.vertices[m.faces[:, 2]] - m.vertices[m.faces[:, 0]]
    n = m.face_normals
    assert np.abs(np.einsum("ij,ij->i", n, e1)).max() < 1e-9
    assert np.abs(np.einsum("ij,ij->i", n, e2)).max() < 1e-9
    assert np.abs(np.linalg.norm(n, axis=1) - 1).max() < 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rigid_motion_equivariance(seed):
    rng = np.random.default_rng(seed)
    m = shapes.icosphere(1)
    R = shapes.random_rotation(rng)
    t = rng.normal(size=3)
    moved = m.with_vertices(m.vertices @ R.T + t)
    np.testing.assert_allclose(moved.face_normals, m.face_normals @ R.T, atol=1e-9)
    np.testing.assert_allclose(moved.face_areas, m.face_areas, atol=1e-12)
    assert moved.average_edge_length == pytest.approx(m.average_edge_length, abs=1e-12)
