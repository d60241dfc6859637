import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflab.space_forms import AmbientSpaceForm, Kind, model_ball_volume, unit_ball_volume, unit_sphere_area


def test_kinds_and_dimensions():
    e, s, h = AmbientSpaceForm.euclidean(), AmbientSpaceForm.sphere(2.0), AmbientSpaceForm.hyperbolic(-0.5)
    assert (e.embed_dim, s.embed_dim, h.embed_dim) == (3, 4, 4)
    assert e.ambient_dim == s.ambient_dim == h.ambient_dim == 3
    assert s.scale == pytest.approx(1 / math.sqrt(2))
    assert math.isinf(e.scale)


def test_sign_checks():
    with pytest.raises(ValueError):
        AmbientSpaceForm.sphere(-1.0)
    with pytest.raises(ValueError):
        AmbientSpaceForm.hyperbolic(1.0)
    with pytest.raises(ValueError):
        AmbientSpaceForm.from_config("torus")
    assert AmbientSpaceForm.from_config("euclidean", 5.0).K == 0.0


def test_riemann_components():
    e = AmbientSpaceForm.euclidean()
    s = AmbientSpaceForm.sphere(1.0)
    h = AmbientSpaceForm.hyperbolic(-1.0)
    assert e.riem_tensor(0, 1, 0, 1) == 0.0
    assert s.riem_tensor(0, 1, 0, 1) == 1.0
    assert s.riem_tensor(0, 1, 1, 0) == -1.0
    assert h.riem_tensor(1, 2, 1, 2) == -1.0
    assert s.riem_tensor(0, 1, 2, 2) == 0.0
    with pytest.raises(IndexError):
        s.riem_tensor(0, 1, 0, 3)


def test_ricci_in_normal_direction():
    assert AmbientSpaceForm.sphere(1.0).ric_normal(2) == 2.0
    assert AmbientSpaceForm.hyperbolic(-1.0).ric_normal(2) == -2.0
    with pytest.raises(ValueError):
        AmbientSpaceForm.sphere(1.0).ric_normal(3)


def test_sectional_bound_conventions():
    assert AmbientSpaceForm.sphere(1.0).sectional_bound() == (1.0, False)
    assert AmbientSpaceForm.euclidean().sectional_bound() == (0.0, True)
    assert AmbientSpaceForm.hyperbolic(-1.0).sectional_bound() == (-1.0, True)


def test_model_volumes():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_sphere_area(2) == pytest.approx(4 * math.pi)
    assert model_ball_volume(0.0, 2.0, 2) == pytest.approx(4 * math.pi)
    # spherical cap: 2 pi (1 - cos R); hyperbolic disc: 2 pi (cosh R - 1)
    assert model_ball_volume(1.0, 1.0, 2) == pytest.approx(2 * math.pi * (1 - math.cos(1.0)), rel=1e-10)
    assert model_ball_volume(-1.0, 1.0, 2) == pytest.approx(2 * math.pi * (math.cosh(1.0) - 1), rel=1e-10)
    with pytest.raises(ValueError):
        model_ball_volume(0.0, 0.0, 2)


@pytest.mark.parametrize("K", [1.0, 4.0, -1.0, -0.25])
def test_projection_and_distance(K):
    sp = AmbientSpaceForm.sphere(K) if K > 0 else AmbientSpaceForm.hyperbolic(K)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 4))
    x[:, -1] = np.abs(x[:, -1]) + 0.5
    p = sp.project(x)
    assert np.max(sp.constraint_residual(p)) < 1e-12
    assert np.allclose(sp.project(p), p, atol=1e-12)
    y = sp.project(p + 0.1 * rng.normal(size=p.shape))
    d = sp.distance(p, y)
    lg = sp.log_map(p, y)
    assert np.allclose(sp.norm(lg), d, rtol=1e-8, atol=1e-12)
    assert np.allclose(sp.inner(lg, p), 0.0, atol=1e-10)


def test_hyperboloid_projection_is_radial_for_timelike_points():
    h = AmbientSpaceForm.hyperbolic(-1.0)
    x = np.array([[0.3, 0.1, 0.0, 2.0]])
    p = h.project(x)
    assert np.allclose(p / np.linalg.norm(p), x / np.linalg.norm(x))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_sphere_distance_is_symmetric_and_bounded(coords):
    s = AmbientSpaceForm.sphere(1.0)
    a = np.array(coords[:3] + [1.0])
    b = np.array(coords[3:] + [-0.5])
    x, y = s.project(a[None]), s.project(b[None])
    d1, d2 = s.distance(x, y), s.distance(y, x)
    assert d1 == pytest.approx(d2, abs=1e-12)
    assert 0 <= d1[0] <= math.pi + 1e-12


def test_normal_from_edges_orthogonal():
    for sp in (AmbientSpaceForm.sphere(1.0), AmbientSpaceForm.hyperbolic(-1.0)):
        x = sp.project(np.array([[0.2, 0.1, -0.3, 1.0]]))
        rng = np.random.default_rng(0)
        e1 = sp.tangent_project(x, rng.normal(size=(1, 4)))
        e2 = sp.tangent_project(x, rng.normal(size=(1, 4)))
        nrm = sp.normal_from_edges(x, e1, e2)
        for v in (x, e1, e2):
            assert abs(sp.inner(nrm, v)[0]) < 1e-10


def test_injectivity_radius():
    assert AmbientSpaceForm.sphere(4.0).injectivity_radius() == pytest.approx(math.pi / 2)
    assert math.isinf(AmbientSpaceForm.hyperbolic(-1.0).injectivity_radius())
    assert AmbientSpaceForm.sphere(1.0).kind is Kind.SPHERE
