"""Mean curvature flow dF/dt = -H nu on triangle meshes in a space form."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import geometry
from .geometry import CurvatureField, compute_curvature
from .mesh import HypersurfaceMesh, MeshError
from .remesh import RemeshConfig, mesh_quality, remesh
from .space_forms import AmbientSpaceForm, Kind

log = logging.getLogger(__name__)

EXPLICIT = "explicit"
SEMI_IMPLICIT = "semi-implicit"
BDF2 = "bdf2"
SCHEMES = (EXPLICIT, SEMI_IMPLICIT, BDF2)


class SolverError(RuntimeError):
    pass


@dataclass
class FlowState:
    mesh: HypersurfaceMesh
    t: float
    field: CurvatureField
    step_index: int = 0
    last_dt: float = 0.0
    previous: np.ndarray | None = None  # vertex positions one step back
    rest: np.ndarray | None = None  # reference edge lengths for tangential relaxation

    @classmethod
    def initial(cls, mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> "FlowState":
        mesh.validate(space)
        return cls(mesh, 0.0, compute_curvature(mesh, space))


@dataclass
class Tracking:
    """Exponents and log-weights of the spatial integrals recorded per snapshot."""

    A_powers: tuple = (4.0, 5.0)
    H_powers: tuple = (4.0, 5.0)
    subcritical: tuple = ((1.0, 1.0), (3.0, 1.0), (100.0, 1.0), (1.0, 2.0))

    @classmethod
    def default(cls, n: int = 2) -> "Tracking":
        return cls(
            A_powers=tuple(sorted({float(n + 2), float(n + 3), float(2 * n)})),
            H_powers=(float(n + 2), float(n + 3)),
        )


def a_key(p: float) -> str:
    return f"intA_{p:g}"


def h_key(p: float) -> str:
    return f"intH_{p:g}"


def g_key(a: float, b: float) -> str:
    return f"G_a{a:g}_b{b:g}"


@dataclass
class FlowParams:
    scheme: str = BDF2
    cfl: float = 1.0
    A2_ceiling: float = 1e6
    dt_floor: float = 1e-12
    t_max: float | None = None
    max_steps: int = 200_000
    mesh_every: int = 0  # keep a full mesh every m steps (0: first and last only)
    area_floor: float = 1e-4  # relative to the mean face area
    remesh_every: int = 0  # quality check cadence (0: only on degeneracy)
    remesh: RemeshConfig = field(default_factory=RemeshConfig)
    tracking: Tracking | None = None
    fixed_dt: float | None = None
    smoothing: float = 0.3  # tangential relaxation weight per step (0: off)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not 0 <= self.smoothing <= 1:
            raise ValueError("smoothing must lie in [0, 1]")
        if self.mesh_every < 0:
            raise ValueError("mesh_every must be >= 0")


def adaptive_dt(field, cfl: float, min_edge: float = math.inf) -> float:
    """cfl * min(1 / max|A|^2, min_edge^2 / 4).

    ``field`` is a :class:`CurvatureField` or the scalar max|A|^2.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    max_A2 = float(np.max(field.A2)) if isinstance(field, CurvatureField) else float(field)
    if not math.isfinite(max_A2) and max_A2 != math.inf or math.isnan(max_A2):
        raise ValueError("non-finite curvature")
    curv = math.inf if max_A2 <= 0 else 1.0 / max_A2
    return cfl * min(curv, min_edge * min_edge / 4.0)


def step(state: FlowState, space: AmbientSpaceForm, dt: float, scheme: str = BDF2, smoothing: float = 0.0) -> FlowState:
    """Advance one time step and recompute the curvature field."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    mesh, fld = state.mesh, state.field
    F = mesh.vertices
    if scheme == EXPLICIT:
        new = F - dt * fld.H[:, None] * fld.normal
    elif scheme == SEMI_IMPLICIT:
        L = geometry.stiffness_matrix(mesh, space)
        A = (sparse.diags(fld.area) + dt * L).tocsr()
        new = _solve_spd(A, fld.area[:, None] * F, F)
    elif scheme == BDF2:
        # variable-step BDF2; the operators are frozen at a backward Euler
        # predictor, which keeps the scheme second order without the
        # instability of extrapolating positions.  The first step is plain
        # backward Euler.
        L = geometry.stiffness_matrix(mesh, space)
        A = (sparse.diags(fld.area) + dt * L).tocsr()
        new = _solve_spd(A, fld.area[:, None] * F, F)
        if state.previous is not None and state.last_dt > 0:
            w = dt / state.last_dt
            ahead = mesh.with_vertices(space.project(new))
            L = geometry.stiffness_matrix(ahead, space)
            area = geometry.mixed_areas(ahead, space)
            c0 = (1 + 2 * w) / (1 + w)
            rhs = (1 + w) * F - (w * w / (1 + w)) * state.previous
            A = (sparse.diags(c0 * area) + dt * L).tocsr()
            new = _solve_spd(A, area[:, None] * rhs, new)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    new = space.project(new)
    rest = state.rest
    if smoothing > 0:
        # tangential relaxation: a reparametrisation that keeps edges uniform
        nrm = space.tangent_project(new, fld.normal)
        nrm = nrm / space.norm(nrm)[:, None]
        if rest is None:
            rest = geometry.geodesic_edge_lengths(mesh, space)
        shift = geometry.tangential_relaxation(mesh.with_vertices(new), space, nrm, rest)
        new = space.project(new + smoothing * shift)
    new_mesh = mesh.with_vertices(new)
    return FlowState(new_mesh, state.t + dt, compute_curvature(new_mesh, space), state.step_index + 1, dt, F, rest)


def _solve_spd(A, B, X0, rtol: float = 1e-13, maxiter: int = 2000):
    """Solve A X = B for SPD ``A`` by Jacobi-preconditioned CG on all columns at once.

    Falls back to a sparse LU factorisation if CG does not converge.
    """
    dinv = 1.0 / A.diagonal()[:, None]
    X = X0.copy()
    R = B - A @ X
    Z = dinv * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    stop = (rtol * rtol) * np.einsum("ij,ij->j", B, B)
    for _ in range(maxiter):
        if np.all(np.einsum("ij,ij->j", R, R) <= stop):
            break
        AP = A @ P
        pap = np.einsum("ij,ij->j", P, AP)
        alpha = np.divide(rz, pap, out=np.zeros_like(rz), where=pap > 0)
        X += alpha * P
        R -= alpha * AP
        Z = dinv * R
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.divide(rz_new, rz, out=np.zeros_like(rz), where=rz > 0)
        P = Z + beta * P
        rz = rz_new
    else:
        try:
            X = splu(A.tocsc()).solve(B)
        except RuntimeError as exc:
            raise SolverError(str(exc)) from exc
    if not np.all(np.isfinite(X)):
        raise SolverError("linear solve produced non-finite positions")
    return X


# ------------------------------------------------------------------ summaries
def _radius(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> float:
    v = mesh.vertices
    if space.kind is Kind.EUCLIDEAN:
        return float(np.mean(np.linalg.norm(v - v.mean(axis=0), axis=1)))
    base = np.zeros(space.embed_dim)
    base[-1] = space.scale
    return float(np.mean(space.distance(base[None], v)))


def summarize(state: FlowState, space: AmbientSpaceForm, tracking: Tracking) -> dict:
    mesh, f = state.mesh, state.field
    A2 = f.A2
    A = np.sqrt(A2)
    absH = np.abs(f.H)
    w = f.area
    lengths = mesh.edge_lengths(space)
    row = {
        "t": state.t,
        "dt": state.last_dt,
        "area": float(w.sum()),
        "volume": mesh.enclosed_volume() if space.kind is Kind.EUCLIDEAN else math.nan,
        "radius": _radius(mesh, space),
        "max_A2": float(A2.max()),
        "sup_A": float(A.max()),
        "sup_Abar": float(f.Abar.max()),
        "min_eig": float(f.min_eigenvalue.min()),
        "mean_H": float(f.H.mean()),
        "cv_H": float(f.H.std() / abs(f.H.mean())) if f.H.mean() != 0 else math.inf,
        "int_H2": float(np.dot(f.H**2, w)),
        "min_edge": float(lengths.min()),
        "consistency": f.consistency,
    }
    for p in tracking.A_powers:
        row[a_key(p)] = float(np.dot(A**p, w))
    for p in tracking.H_powers:
        row[h_key(p)] = float(np.dot(absH**p, w))
    n = space.n
    for a, b in tracking.subcritical:
        row[g_key(a, b)] = float(np.dot(A ** (n + 2) / np.log(a + A**b), w)) if a > 1 or A.min() > 0 else _safe_g(A, w, a, b, n)
    return row


def _safe_g(A, w, a, b, n):
    # a = 1 and |A| = 0 somewhere: the integrand tends to 0 there
    den = np.log(a + A**b)
    val = np.divide(A ** (n + 2), den, out=np.zeros_like(A), where=den > 0)
    return float(np.dot(val, w))


# ------------------------------------------------------------------- the run
@dataclass
class FlowRun:
    """Time series of snapshot summaries plus selected full meshes."""

    space: AmbientSpaceForm
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    reason: str = ""
    tracking: Tracking = field(default_factory=Tracking)
    meta: dict = field(default_factory=dict)
    _cols: dict | None = field(default=None, repr=False)

    def append(self, row: dict) -> None:
        if self.records and not row["t"] > self.records[-1]["t"]:
            raise ValueError("snapshot times must be strictly increasing")
        self.records.append(row)
        self._cols = None

    def __len__(self):
        return len(self.records)

    @property
    def columns(self) -> dict:
        if self._cols is None:
            keys = list(self.records[0]) if self.records else []
            self._cols = {k: np.array([r[k] for r in self.records], dtype=float) for k in keys}
        return self._cols

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def accumulate(self, values) -> np.ndarray:
        """Cumulative trapezoidal time integral of a per-snapshot series."""
        values = self.columns[values] if isinstance(values, str) else np.asarray(values, dtype=float)
        t = self.t
        out = np.zeros(len(t))
        if len(t) > 1:
            out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(t))
        return out

    def integral(self, values, upto_t: float | None = None) -> float:
        """Trapezoidal integral up to ``upto_t`` (default: the last snapshot)."""
        acc = self.accumulate(values)
        if upto_t is None or upto_t >= self.t[-1]:
            return float(acc[-1])
        return float(np.interp(upto_t, self.t, acc))

    @classmethod
    def from_series(cls, space, columns: dict, reason: str = "", tracking=None, meta=None) -> "FlowRun":
        keys = list(columns)
        m = len(columns["t"])
        records = [{k: float(columns[k][i]) for k in keys} for i in range(m)]
        return cls(space, records, [], reason, tracking or Tracking.default(space.n), meta or {})


def evolve(mesh: HypersurfaceMesh, space: AmbientSpaceForm, params: FlowParams | None = None, t0: float = 0.0) -> FlowRun:
    """Run the flow until a ceiling, dt underflow, t_max or a numerical failure."""
    params = params or FlowParams()
    tracking = params.tracking or Tracking.default(space.n)
    state = FlowState.initial(mesh, space)
    state.t = t0
    run = FlowRun(space, tracking=tracking)
    run.append(summarize(state, space, tracking))
    run.states.append(state)
    mean_face = float(np.mean(mesh.face_areas(space)))
    reason = ""
    while True:
        if state.step_index >= params.max_steps:
            reason = "max_steps"
            break
        if params.t_max is not None and state.t >= params.t_max * (1 - 1e-15):
            reason = "t_max"
            break
        if run.records[-1]["max_A2"] > params.A2_ceiling:
            reason = "curvature_ceiling"
            break
        if params.fixed_dt is not None:
            dt = params.fixed_dt
        else:
            dt = adaptive_dt(state.field, params.cfl, run.records[-1]["min_edge"])
        if params.t_max is not None:
            dt = min(dt, params.t_max - state.t)
        if dt < params.dt_floor:
            reason = "dt_underflow"
            break
        try:
            new = step(state, space, dt, params.scheme, smoothing=params.smoothing)
        except (SolverError, MeshError, np.linalg.LinAlgError) as exc:
            log.warning("step %d failed: %s", state.step_index, exc)
            reason = "solver_failure"
            break
        areas = new.mesh.face_areas(space)
        need_remesh = bool(np.any(areas < params.area_floor * mean_face * _area_scale(run)))
        if not need_remesh and params.remesh_every and new.step_index % params.remesh_every == 0:
            need_remesh = not mesh_quality(new.mesh, space, params.remesh).ok
        if need_remesh:
            fixed, report = remesh(new.mesh, space, params.remesh)
            if not report.ok and np.any(fixed.face_areas(space) <= 0):
                reason = "degenerate_mesh"
                break
            if report.changed:
                fixed.validate(space)
                new = FlowState(fixed, new.t, compute_curvature(fixed, space), new.step_index, new.last_dt)
                run.meta.setdefault("remesh_steps", []).append(new.step_index)
        state = new
        run.append(summarize(state, space, tracking))
        if params.mesh_every and state.step_index % params.mesh_every == 0:
            run.states.append(state)
    if run.states[-1] is not state:
        run.states.append(state)
    run.reason = reason
    return run


def _area_scale(run: FlowRun) -> float:
    # face areas shrink with the surface; compare against the current mean
    return run.records[-1]["area"] / run.records[0]["area"]


# ----------------------------------------------------------- post-processing
SKIPPED = "skipped: connectivity changed"


def evolution_residuals(run: FlowRun, k: int):
    """Relative residuals of dg/dt = -2 H h and d(dmu)/dt = -H^2 dmu between kept states k, k+1.

    Returns ``(metric_res, volume_res, dt)`` or ``(SKIPPED, SKIPPED, dt)`` if a
    remesh happened in between.  The second fundamental form is contracted
    with an edge e through the discrete Weingarten map, h(e, e) ~ <e, nu_j - nu_i>.

    Both identities describe a normal parametrisation.  The tangential part of
    each vertex displacement only reparametrises the surface, so it is
    removed first: the later state is replaced by the earlier one moved along
    its normals by the normal component of the displacement.
    """
    s0, s1 = run.states[k], run.states[k + 1]
    dt = s1.t - s0.t
    if s0.mesh.faces.shape != s1.mesh.faces.shape or not np.array_equal(s0.mesh.faces, s1.mesh.faces):
        return SKIPPED, SKIPPED, dt
    space = run.space
    E = s0.mesh.edges
    v0 = s0.mesh.vertices
    nu = s0.field.normal
    v1 = space.project(v0 + space.inner(s1.mesh.vertices - v0, nu)[:, None] * nu)
    e0 = v0[E[:, 1]] - v0[E[:, 0]]
    e1 = v1[E[:, 1]] - v1[E[:, 0]]
    l0 = space.inner(e0, e0)
    fd = (space.inner(e1, e1) - l0) / dt
    hee = space.inner(e0, nu[E[:, 1]] - nu[E[:, 0]])
    Hbar = 0.5 * (s0.field.H[E[:, 0]] + s0.field.H[E[:, 1]])
    rel = (fd + 2.0 * Hbar * hee) / l0
    # edge weights: a third of each adjacent face area
    fa = s0.mesh.face_areas(space)
    w = np.bincount(s0.mesh.topology.face_edges.ravel(), weights=np.repeat(fa / 3.0, 3), minlength=len(E))
    metric_res = float(np.sqrt(np.sum(w * rel**2)))
    # volume form in weak form, tested against the constant function: the
    # pointwise mixed-area version carries a dt-independent spatial floor
    mu0 = s0.field.area
    area1 = float(np.sum(s0.mesh.with_vertices(v1).face_areas(space)))
    area0 = float(np.sum(s0.mesh.face_areas(space)))
    rate = float(np.dot(s0.field.H**2, mu0))
    volume_res = abs((area1 - area0) / dt + rate) / rate
    return metric_res, volume_res, dt


@dataclass
class SingularityPolicy:
    growth_threshold: float = 10.0  # required max|A|^2 growth over the run
    tail_fraction: float = 0.4
    min_snapshots: int = 10


def detect_singularity(run: FlowRun, policy: SingularityPolicy | None = None):
    """Type-I fit max|A|^2 ~ c / (T - t) on the tail of the run.

    Returns ``(T_est, blew_up)``; ``T_est`` is ``inf`` when no blow-up is seen.
    """
    policy = policy or SingularityPolicy()
    m = len(run)
    if m < policy.min_snapshots:
        raise ValueError(f"need at least {policy.min_snapshots} snapshots, got {m}")
    t = run.t
    a2 = run["max_A2"]
    growth = a2[-1] / a2[0] if a2[0] > 0 else math.inf
    if not growth >= policy.growth_threshold:
        return math.inf, False
    start = int(math.floor((1 - policy.tail_fraction) * m))
    tt, y = t[start:], 1.0 / a2[start:]
    slope, intercept = np.polyfit(tt, y, 1)
    conservative = float(t[-1] + run["dt"][-1])
    if not (slope < 0 and np.isfinite(intercept)):
        return conservative, True
    T = -intercept / slope
    if not np.isfinite(T) or T < t[-1]:
        return conservative, True
    return float(T), True
