import math

import numpy as np
import pytest

from mcflab.flow import (
    BDF2,
    EXPLICIT,
    SEMI_IMPLICIT,
    SKIPPED,
    FlowParams,
    FlowRun,
    FlowState,
    adaptive_dt,
    detect_singularity,
    evolution_residuals,
    evolve,
    step,
)
from mcflab.geometry import compute_curvature
from mcflab.mesh import HypersurfaceMesh, icosphere
from mcflab.oracles import euclidean_sphere, replay
from mcflab.remesh import RemeshConfig, mesh_quality, remesh


def _mean_radius(m):
    return float(np.mean(np.linalg.norm(m.vertices, axis=1)))


@pytest.mark.parametrize("scheme", [EXPLICIT, SEMI_IMPLICIT, BDF2])
def test_single_step_shrinks_by_n_dt(euclid, scheme):
    m = icosphere(4)
    s = FlowState.initial(m, euclid)
    new = step(s, euclid, 1e-4, scheme)
    drop = _mean_radius(m) - _mean_radius(new.mesh)
    assert drop == pytest.approx(2e-4, rel=0.05)
    assert new.t == 1e-4 and new.step_index == 1


def test_adaptive_dt():
    assert adaptive_dt(2.0, 1.0) == 0.5
    assert adaptive_dt(2.0, 0.5, min_edge=0.2) == pytest.approx(0.5 * 0.01)
    assert adaptive_dt(0.0, 1.0, min_edge=1.0) == 0.25
    with pytest.raises(ValueError):
        adaptive_dt(2.0, 0.0)
    with pytest.raises(ValueError):
        adaptive_dt(2.0, 1.5)
    with pytest.raises(ValueError):
        adaptive_dt(float("nan"), 1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        FlowParams(scheme="rk4")
    with pytest.raises(ValueError):
        FlowParams(cfl=2.0)
    with pytest.raises(ValueError):
        FlowParams(smoothing=1.5)
    with pytest.raises(ValueError):
        step(FlowState.initial(icosphere(1), __import__("mcflab").AmbientSpaceForm.euclidean()), None, 0.0)


def test_run_tracks_exact_radius(small_sphere_run):
    run = small_sphere_run
    sol = euclidean_sphere(1.0)
    assert run.reason == "t_max"
    assert run.t[-1] == pytest.approx(0.2)
    err = np.abs(run["radius"] / sol.radius(run.t) - 1)
    assert err.max() < 0.01
    assert np.all(np.diff(run["area"]) < 0)


def test_area_decreases_like_int_H2(small_sphere_run):
    run = small_sphere_run
    rate = np.diff(run["area"]) / np.diff(run.t)
    mid = 0.5 * (run["int_H2"][1:] + run["int_H2"][:-1])
    assert np.allclose(rate, -mid, rtol=0.03)


def test_ceiling_halts_run(coarse_blowup_run):
    run = coarse_blowup_run
    assert run.reason == "curvature_ceiling"
    assert run["max_A2"][-1] > 1e4
    T, blew = detect_singularity(run)
    assert blew and T == pytest.approx(0.25, rel=0.02)


def test_no_blowup_on_short_run(small_sphere_run):
    T, blew = detect_singularity(small_sphere_run)
    assert not blew and math.isinf(T)


def test_detect_needs_snapshots(euclid):
    run = replay(euclidean_sphere(1.0), np.linspace(0, 0.1, 5))
    with pytest.raises(ValueError):
        detect_singularity(run)


def test_snapshot_times_strictly_increase(euclid):
    run = FlowRun(euclid)
    run.append({"t": 0.0})
    with pytest.raises(ValueError):
        run.append({"t": 0.0})


def test_evolution_residuals_shrink_with_dt(euclid):
    res = []
    for dt in (2e-3, 1e-3):
        run = evolve(icosphere(3), euclid, FlowParams(fixed_dt=dt, t_max=4 * dt, mesh_every=1, smoothing=0.0))
        res.append(evolution_residuals(run, 1))
    ratio_metric = res[0][0] / res[1][0]
    ratio_volume = res[0][1] / res[1][1]
    assert 1.4 <= ratio_metric <= 2.6
    assert 1.4 <= ratio_volume <= 2.6


def test_residuals_skip_after_connectivity_change(euclid):
    run = evolve(icosphere(2), euclid, FlowParams(fixed_dt=1e-3, t_max=2e-3, mesh_every=1))
    other = icosphere(3)
    run.states[1] = FlowState(other, run.states[1].t, compute_curvature(other, euclid))
    metric, volume, _ = evolution_residuals(run, 0)
    assert metric == SKIPPED and volume == SKIPPED


def test_remesh_repairs_a_sliver(euclid):
    m = icosphere(3)
    v = m.vertices.copy()
    # drag one vertex almost onto its neighbour
    i, j = m.edges[0]
    v[i] = v[j] + 1e-3 * (v[i] - v[j])
    bad = HypersurfaceMesh(v, m.faces)
    assert not mesh_quality(bad, euclid).ok
    fixed, report = remesh(bad, euclid, RemeshConfig())
    assert report.changed
    fixed.validate(euclid)
    assert mesh_quality(fixed, euclid).min_angle_deg > mesh_quality(bad, euclid).min_angle_deg
