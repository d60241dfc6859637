import numpy as np
import pytest

from mcflab.mesh import MeshError, HypersurfaceMesh, dumbbell, geodesic_sphere, icosphere, read_mesh, write_off
from mcflab.geometry import compute_curvature


def test_icosphere_topology(euclid):
    for level in range(4):
        m = icosphere(level)
        assert m.euler_characteristic() == 2
        assert len(m.faces) == 20 * 4**level
        m.validate(euclid)


def test_enclosed_volume_positive(euclid):
    m = icosphere(4, radius=2.0)
    assert m.enclosed_volume() == pytest.approx(4 / 3 * np.pi * 8, rel=5e-3)
    assert m.flipped().enclosed_volume() < 0


def test_geodesic_spheres_satisfy_constraint(sphere3, hyper3):
    for sp in (sphere3, hyper3):
        m = geodesic_sphere(sp, 0.7, 2)
        m.validate(sp)
        d = sp.distance(np.broadcast_to([0, 0, 0, sp.scale], m.vertices.shape), m.vertices)
        assert np.allclose(d, 0.7)


def test_validation_errors(euclid, sphere3):
    m = icosphere(1)
    with pytest.raises(MeshError):
        m.validate(sphere3)
    open_mesh = HypersurfaceMesh(m.vertices, m.faces[:-1])
    with pytest.raises(MeshError):
        open_mesh.validate(euclid)
    bad = m.faces.copy()
    bad[0] = bad[0, ::-1]
    with pytest.raises(MeshError):
        HypersurfaceMesh(m.vertices, bad).validate(euclid)


def test_off_roundtrip_with_sidecar(tmp_path, euclid):
    m = icosphere(2)
    f = compute_curvature(m, euclid)
    path = tmp_path / "s.off"
    write_off(m, path, f)
    back = read_mesh(path)
    assert np.array_equal(back.faces, m.faces)
    assert np.array_equal(back.vertices, m.vertices)
    side = (tmp_path / "s.csv").read_text().splitlines()
    assert side[0].startswith("#")
    assert side[1] == "vertex,H,A2"
    assert len(side) == m.n_vertices + 2


def test_obj_reader(tmp_path):
    path = tmp_path / "t.obj"
    path.write_text("# tetra\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n")
    m = read_mesh(path)
    assert m.vertices.shape == (4, 3)
    assert m.faces.min() == 0
    assert m.enclosed_volume() == pytest.approx(1 / 6)


def test_four_coordinate_off_roundtrip(tmp_path, sphere3):
    m = geodesic_sphere(sphere3, 0.5, 1)
    write_off(m, tmp_path / "c.off")
    back = read_mesh(tmp_path / "c.off")
    back.validate(sphere3)


def test_missing_file():
    with pytest.raises((FileNotFoundError, MeshError)):
        read_mesh("does-not-exist.off")


def test_dumbbell_is_valid_with_thin_neck(euclid):
    m = dumbbell(3)
    m.validate(euclid)
    v = m.vertices
    neck = np.abs(v[:, 0]) < 0.05
    assert np.linalg.norm(v[neck, 1:], axis=1).max() < 0.5
    assert np.linalg.norm(v[:, 1:], axis=1).max() > 0.8
