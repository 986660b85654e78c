import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from bspm_osp.errors import MeshError, ParameterError
from bspm_osp.mesh import (curvatures, cylinder, format_off, grid_rectangle, heat_kernel, icosphere,
                           load_mesh, make_mesh, parse_off, single_triangle, tetrahedron, torso_mesh,
                           vertex_areas)

TRIANGLE_OFF = """OFF
# one triangle
3 1 3
0 0 0
1 0 0
0 1 0
3 0 1 2
"""


def test_load_single_triangle(tmp_path):
    p = tmp_path / "tri.off"
    p.write_text(TRIANGLE_OFF)
    m = load_mesh(p)
    assert m.n_vertices == 3 and m.n_faces == 1


def test_face_index_out_of_range():
    with pytest.raises(MeshError, match="face index out of range"):
        parse_off(TRIANGLE_OFF.replace("3 0 1 2", "3 0 1 99"))


def test_degenerate_face_rejected():
    with pytest.raises(MeshError, match="degenerate"):
        make_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_duplicate_vertices_rejected():
    with pytest.raises(MeshError, match="duplicate"):
        make_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 0, 1e-12]], [[0, 1, 2]])


@pytest.mark.parametrize("text, msg", [
    ("PLY\n", "header"),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n", "expected"),
    ("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n", "triangular"),
    ("OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n", "line 4"),
])
def test_parse_errors(text, msg):
    with pytest.raises(MeshError, match=msg):
        parse_off(text)


def test_off_round_trip():
    m = torso_mesh()
    m2 = parse_off(format_off(m))
    np.testing.assert_array_equal(m.vertices, m2.vertices)
    np.testing.assert_array_equal(m.faces, m2.faces)


def test_torso_counts():
    m = torso_mesh()
    assert (m.n_vertices, m.n_faces, len(m.edges())) == (352, 700, 1050)


def test_vertex_areas_triangle_and_tetrahedron():
    np.testing.assert_allclose(vertex_areas(single_triangle()), np.sqrt(3) / 12)
    np.testing.assert_allclose(vertex_areas(tetrahedron()), np.sqrt(3) / 4)


@pytest.mark.parametrize("mesh", [torso_mesh(), icosphere(2), grid_rectangle(), cylinder()])
def test_area_partition(mesh):
    a = vertex_areas(mesh)
    assert np.all(a > 0)
    assert abs(a.sum() - mesh.face_areas().sum()) <= 1e-9 * mesh.face_areas().sum()


def test_sphere_curvature():
    g = curvatures(icosphere(2))
    assert 0.85 <= np.median(g.gauss_k) <= 1.15
    assert 1.7 <= np.median(np.abs(g.mean_eta)) <= 2.3


def test_flat_interior_is_flat():
    m = grid_rectangle(7, 6)
    g = curvatures(m)
    inner = ~m.boundary_vertices()
    assert np.abs(g.gauss_k[inner]).max() < 1e-9
    assert np.abs(g.mean_eta[inner]).max() < 1e-9


def test_cylinder_side():
    r = 2.0
    m = cylinder(radius=r, n_around=32, n_rings=9)
    g = curvatures(m)
    inner = ~m.boundary_vertices()
    assert np.abs(g.gauss_k[inner]).max() < 1e-9
    np.testing.assert_allclose(g.mean_eta[inner], 1 / r, rtol=0.15)


@pytest.mark.parametrize("mesh", [icosphere(2), torso_mesh(), tetrahedron()])
def test_gauss_bonnet(mesh):
    g = curvatures(mesh)
    assert abs(np.sum(g.gauss_k * g.area) - 2 * np.pi * mesh.euler_characteristic()) < 1e-6


def test_principal_curvatures_consistent():
    g = curvatures(torso_mesh())
    assert np.all(g.k1 >= g.k2)
    np.testing.assert_allclose(g.k1 + g.k2, g.mean_eta, atol=1e-9)
    unclamped = (g.mean_eta / 2) ** 2 - g.gauss_k >= 0
    np.testing.assert_allclose((g.k1 * g.k2)[unclamped], g.gauss_k[unclamped], atol=1e-9)


def test_curvature_rigid_invariance():
    m = torso_mesh()
    rot = Rotation.from_euler("xyz", [0.3, -1.1, 2.0]).as_matrix()
    m2 = m.transformed(rot, [10.0, -4.0, 7.5])
    g1, g2 = curvatures(m), curvatures(m2)
    np.testing.assert_allclose(g1.gauss_k, g2.gauss_k, atol=1e-9)
    np.testing.assert_allclose(g1.mean_eta, g2.mean_eta, atol=1e-9)


def test_isolated_vertex_error():
    m = make_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
    with pytest.raises(MeshError, match="vertex 3"):
        curvatures(m)


def test_heat_kernel_formula_and_properties():
    m = make_mesh([[0, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    K = heat_kernel(m, 4.0)
    assert K[0, 1] == pytest.approx(np.exp(-1.0))
    K = heat_kernel(torso_mesh(), 2e4)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    assert np.abs(K - K.T).max() <= 1e-12
    assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_heat_kernel_rejects_bad_bandwidth():
    with pytest.raises(ParameterError):
        heat_kernel(single_triangle(), 0.0)
