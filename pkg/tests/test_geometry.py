import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from mcflab import geometry
from mcflab.geometry import DegenerateStencilError, compute_curvature, gauss_codazzi_residual
from mcflab.mesh import HypersurfaceMesh, geodesic_sphere, icosphere
from mcflab.space_forms import AmbientSpaceForm


def test_unit_sphere_mean_curvature(euclid):
    f = compute_curvature(icosphere(4), euclid)
    assert f.H.min() >= 1.98 and f.H.max() <= 2.02
    assert np.allclose(f.A2, 2.0, rtol=2e-2)
    assert np.allclose(np.trace(f.h, axis1=1, axis2=2), f.H)
    assert f.area.sum() == pytest.approx(4 * math.pi, rel=2e-3)  # inscribed polyhedron


def test_outward_normals(euclid):
    m = icosphere(3)
    f = compute_curvature(m, euclid)
    assert np.all(np.einsum("ij,ij->i", f.normal, m.vertices) > 0.99)


def test_cotan_stiffness_annihilates_constants(euclid):
    L = geometry.stiffness_matrix(icosphere(2), euclid)
    assert np.abs(L @ np.ones(L.shape[0])).max() < 1e-12
    assert abs(L - L.T).max() < 1e-14


@pytest.mark.parametrize("K,rho", [(1.0, 1.0), (4.0, 0.5), (-1.0, 1.0), (-0.25, 1.5)])
def test_geodesic_sphere_mean_curvature(K, rho):
    sp = AmbientSpaceForm.sphere(K) if K > 0 else AmbientSpaceForm.hyperbolic(K)
    k = math.sqrt(abs(K))
    expected = 2 * k / (math.tan(k * rho) if K > 0 else math.tanh(k * rho))
    f = compute_curvature(geodesic_sphere(sp, rho, 4), sp)
    assert np.allclose(f.H, expected, rtol=5e-3)
    assert np.allclose(f.min_eigenvalue, expected / 2, rtol=2e-2)


def test_refinement_reduces_errors(euclid):
    H_err, gauss = [], []
    for level in (3, 4, 5):
        m = icosphere(level)
        f = compute_curvature(m, euclid)
        H_err.append(np.max(np.abs(f.H - 2.0)))
        gauss.append(gauss_codazzi_residual(m, f, euclid)[0])
    assert H_err[0] / H_err[1] >= 3 and H_err[1] / H_err[2] >= 3
    assert gauss[0] / gauss[1] >= 3 and gauss[1] / gauss[2] >= 3


def test_codazzi_residual_decreases_in_space_forms(sphere3, hyper3):
    for sp in (sphere3, hyper3):
        res = []
        for level in (3, 4):
            m = geodesic_sphere(sp, 0.9, level)
            res.append(gauss_codazzi_residual(m, compute_curvature(m, sp), sp)[1])
        assert res[1] < res[0]


def test_degenerate_stencil_raises(euclid):
    v = np.array([[1.0, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    with pytest.raises(DegenerateStencilError):
        compute_curvature(HypersurfaceMesh(v, f), euclid)


def test_integrate_checks_shape(euclid):
    m = icosphere(2)
    f = compute_curvature(m, euclid)
    assert geometry.integrate(m, f, np.ones(m.n_vertices)) == pytest.approx(f.area.sum())
    with pytest.raises(ValueError):
        geometry.integrate(m, f, np.ones(3))
    with pytest.raises(ValueError):
        geometry.integrate(m, f, np.full(m.n_vertices, np.nan))


@settings(max_examples=15, deadline=None)
@given(
    angles=st.tuples(st.floats(0, 2 * math.pi), st.floats(0, math.pi), st.floats(0, 2 * math.pi)),
    scale=st.floats(0.3, 5.0),
    shift=st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)),
)
def test_curvature_is_rigid_motion_invariant_and_scales(angles, scale, shift):
    euclid = AmbientSpaceForm.euclidean()
    m = icosphere(2)
    base = compute_curvature(m, euclid)
    R = Rotation.from_euler("zyx", angles).as_matrix()
    moved = HypersurfaceMesh(scale * m.vertices @ R.T + np.array(shift), m.faces)
    f = compute_curvature(moved, euclid)
    assert np.allclose(f.H * scale, base.H, rtol=1e-7, atol=1e-9)
    assert np.allclose(f.A2 * scale**2, base.A2, rtol=1e-6, atol=1e-9)
    assert np.allclose(f.area / scale**2, base.area, rtol=1e-9)
