import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflab import oracles
from mcflab.flow import detect_singularity
from mcflab.oracles import a_pow, h_pow, oracle_integral, subcritical


def test_euclidean_sphere_examples():
    sol = oracles.euclidean_sphere(1.0, 2)
    assert sol.T == 0.25
    assert sol.radius(0.1875) == pytest.approx(0.5, rel=1e-15)
    assert sol.A2(0.0) == pytest.approx(2.0)
    assert sol.H(0.0) == pytest.approx(2.0)


def test_geodesic_sphere_singular_times():
    s = oracles.spaceform_geodesic_sphere(1.0, math.pi / 3, 2)
    assert s.T == pytest.approx(0.5 * math.log(2), rel=1e-14)
    h = oracles.spaceform_geodesic_sphere(-1.0, math.acosh(2.0), 2)
    assert h.T == pytest.approx(0.5 * math.log(2), rel=1e-14)


def test_near_equator_time_grows():
    Ts = [oracles.spaceform_geodesic_sphere(1.0, math.pi / 2 - e, 2).T for e in (1e-1, 1e-3, 1e-6)]
    assert Ts[0] < Ts[1] < Ts[2]


def test_invalid_parameters():
    with pytest.raises(ValueError):
        oracles.euclidean_sphere(0.0)
    with pytest.raises(ValueError):
        oracles.spaceform_geodesic_sphere(1.0, 2.0)
    with pytest.raises(ValueError):
        oracles.spaceform_geodesic_sphere(-1.0, -1.0)
    sol = oracles.euclidean_sphere(1.0)
    with pytest.raises(ValueError):
        oracle_integral(sol, a_pow(4), 0.25)


def test_critical_integral_to_0_2():
    sol = oracles.euclidean_sphere(1.0, 2)
    assert oracle_integral(sol, a_pow(4), 0.2) == pytest.approx(4 * math.pi * math.log(5), rel=1e-12)


def test_a_pow_5_closed_form():
    # |A|^5 area = 16 sqrt(2) pi (1 - 4t)^(-3/2); its antiderivative is
    # 8 sqrt(2) pi [(1 - 4t)^(-1/2) - 1]
    sol = oracles.euclidean_sphere(1.0, 2)
    for t in (0.05, 0.2, 0.24):
        exact = 8 * math.sqrt(2) * math.pi * ((1 - 4 * t) ** -0.5 - 1)
        assert oracle_integral(sol, a_pow(5), t, "closed") == pytest.approx(exact, rel=1e-12)
        assert oracle_integral(sol, a_pow(5), t, "quadrature") == pytest.approx(exact, rel=1e-9)


def test_subcritical_matches_reduced_quadrature():
    sol = oracles.euclidean_sphere(1.0, 2)
    from scipy.integrate import quad

    f = lambda s: 16 * math.pi / ((1 - 4 * s) * math.log(1 + math.sqrt(2) / math.sqrt(1 - 4 * s)))
    ref, _ = quad(f, 0, 0.2, epsrel=1e-12)
    assert oracle_integral(sol, subcritical(1, 1), 0.2) == pytest.approx(ref, rel=1e-9)
    assert oracle_integral(sol, subcritical(1, 1), 0.24) > oracle_integral(sol, subcritical(1, 1), 0.2)


@pytest.mark.parametrize("p", [3.0, 4.0, 5.0, 6.5])
def test_closed_and_quadrature_agree(p):
    sol = oracles.euclidean_sphere(1.3, 2)
    for q in (a_pow(p), h_pow(p)):
        t = 0.8 * sol.T
        assert oracle_integral(sol, q, t, "closed") == pytest.approx(oracle_integral(sol, q, t, "quadrature"), rel=1e-8)


@pytest.mark.parametrize(
    "sol",
    [
        oracles.euclidean_sphere(1.0, 2),
        oracles.spaceform_geodesic_sphere(1.0, math.pi / 3, 2),
        oracles.spaceform_geodesic_sphere(-1.0, math.acosh(2.0), 2),
    ],
    ids=["euclidean", "sphere", "hyperbolic"],
)
def test_critical_integral_diverges_at_singular_time(sol):
    vals = [oracle_integral(sol, a_pow(sol.n + 2), sol.T - 10.0**-k) for k in range(1, 6)]
    steps = np.diff(vals)
    # logarithmic divergence: every decade closer to T adds a comparable amount
    assert np.all(steps > 0)
    assert steps.min() > 0.5 * steps.max()


@pytest.mark.parametrize(
    "sol",
    [
        oracles.euclidean_sphere(1.0, 2),
        oracles.spaceform_geodesic_sphere(1.0, math.pi / 3, 2),
        oracles.spaceform_geodesic_sphere(-2.0, 0.7, 2),
    ],
    ids=["euclidean", "sphere", "hyperbolic"],
)
def test_area_rate_identity(sol):
    t = np.linspace(0, 0.9 * sol.T, 7)
    assert np.allclose(sol.area_rate(t), -sol.area(t) * sol.H(t) ** 2, rtol=1e-12)
    h = 1e-6
    fd = (sol.area(t[1:-1] + h) - sol.area(t[1:-1] - h)) / (2 * h)
    assert np.allclose(fd, sol.area_rate(t[1:-1]), rtol=1e-6)


def test_replay_compare_is_exact():
    sol = oracles.euclidean_sphere(1.0, 2)
    t = np.linspace(0, 0.249, 4000)
    run = oracles.replay(sol, t)
    rep = oracles.compare(run, sol, upto=0.2, T_est=0.25)
    assert rep.radius_max_rel_err == 0.0
    assert rep.supA_max_rel_err < 1e-14
    assert rep.T_est_rel_err == 0.0
    assert max(rep.integral_rel_errs.values()) < 1e-5


def test_compare_rejects_other_ambient():
    sol = oracles.spaceform_geodesic_sphere(1.0, 1.0)
    run = oracles.replay(oracles.euclidean_sphere(1.0), np.linspace(0, 0.2, 20))
    with pytest.raises(ValueError):
        oracles.compare(run, sol)


def test_coarse_run_has_larger_errors(euclid):
    from mcflab.flow import FlowParams, evolve
    from mcflab.mesh import icosphere

    sol = oracles.euclidean_sphere(1.0, 2)
    errs = []
    for level in (2, 3):
        run = evolve(icosphere(level), euclid, FlowParams(t_max=0.2))
        errs.append(oracles.compare(run, sol, T_est=0.25).radius_max_rel_err)
    assert errs[0] > errs[1]


@settings(max_examples=40, deadline=None)
@given(r0=st.floats(0.2, 5.0), frac=st.floats(0.0, 0.99))
def test_radius_decreasing_and_curvature_increasing(r0, frac):
    sol = oracles.euclidean_sphere(r0, 2)
    t = np.array([frac * sol.T, (frac + 0.005) * sol.T])
    r = sol.radius(t)
    assert r[1] < r[0]
    assert sol.A2(t)[1] > sol.A2(t)[0]
