import numpy as np
import pytest

from dh2.geometry import (build_sphere_mesh, mesh_metrics, point_triangle_distance, read_mesh,
                          triangle_distance, write_mesh)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_sphere_counts(k):
    mesh = build_sphere_mesh(k)
    assert mesh.n_panels == 8 * 4**k
    # closed genus-0 surface: V - E + F = 2
    assert mesh.n_vertices == mesh.n_panels // 2 + 2
    mesh.validate()


def test_octahedron():
    mesh = build_sphere_mesh(0)
    assert mesh.n_panels == 8 and mesh.n_vertices == 6
    np.testing.assert_allclose(mesh.areas, np.sqrt(3) / 2)


def test_vertices_on_sphere():
    mesh = build_sphere_mesh(3)
    np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-14)


def test_area_converges_to_sphere():
    areas = [build_sphere_mesh(k).areas.sum() for k in range(5)]
    gaps = 4 * np.pi - np.array(areas)
    assert np.all(gaps > 0)
    assert np.all(np.diff(gaps) < 0)
    # second order in h: gap shrinks by about 4 per refinement
    assert 3.0 < gaps[-2] / gaps[-1] < 5.0


def test_outward_orientation():
    mesh = build_sphere_mesh(2)
    c = mesh.corners
    nrm = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    assert np.all((nrm * mesh.barycenters).sum(axis=1) > 0)


def test_metrics():
    mesh = build_sphere_mesh(2)
    mm = mesh_metrics(mesh)
    d = mesh.diameters
    assert mm.h_max == pytest.approx(d.max())
    assert 0 < mm.h_min <= mm.h_max


def test_mesh_roundtrip(tmp_path):
    mesh = build_sphere_mesh(1)
    write_mesh(mesh, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.panels, mesh.panels)
    np.testing.assert_allclose(back.vertices, mesh.vertices, rtol=0, atol=1e-15)


def _sample_triangle(tri, n, rng):
    a, b = rng.random((2, n))
    flip = a + b > 1
    a[flip], b[flip] = 1 - a[flip], 1 - b[flip]
    return tri[0] + a[:, None] * (tri[1] - tri[0]) + b[:, None] * (tri[2] - tri[0])


def test_point_triangle_distance_against_sampling():
    rng = np.random.default_rng(1)
    tri = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    p = rng.normal(size=(20, 3))
    d = point_triangle_distance(p, np.broadcast_to(tri, (20, 3, 3)))
    samples = _sample_triangle(tri, 20000, rng)
    brute = np.linalg.norm(p[:, None] - samples[None], axis=-1).min(axis=1)
    assert np.all(d <= brute + 1e-12)
    np.testing.assert_allclose(d, brute, atol=2e-2)


def test_triangle_distance_against_sampling():
    rng = np.random.default_rng(2)
    t1 = rng.normal(size=(10, 3, 3))
    t2 = rng.normal(size=(10, 3, 3)) + 2.0
    d = triangle_distance(t1, t2)
    for k in range(10):
        a = _sample_triangle(t1[k], 3000, rng)
        b = _sample_triangle(t2[k], 3000, rng)
        brute = np.linalg.norm(a[:, None] - b[None], axis=-1).min()
        assert d[k] <= brute + 1e-12
        assert brute - d[k] < 0.1


def test_touching_triangles_have_zero_distance():
    mesh = build_sphere_mesh(1)
    pairs = mesh.touching_pairs()
    c = mesh.corners
    d = triangle_distance(c[pairs[:, 0]], c[pairs[:, 1]])
    np.testing.assert_allclose(d, 0.0, atol=1e-14)
