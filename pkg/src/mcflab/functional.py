"""Explicit constants and instance checks of the Sobolev and Moser toolbox.

The inequalities are evaluated on piecewise-linear vertex functions: values
live at vertices, gradients are per-face constants, integrals use the mixed
vertex areas for zeroth-order terms and face areas for gradient terms.
Space-time integrals use the kept snapshots of a run with the trapezoidal
rule in time.

Window rescaling: the Moser-type checks assume the time interval [0, 1].
A run window [t0, t1] is mapped there by the parabolic scaling
x -> lam x, t -> lam^2 (t - t0) with lam = (t1 - t0)^(-1/2); a quantity of
length dimension d picks up lam^d (|A| has d = -1, dmu has d = n).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .geometry import CurvatureField, compute_curvature
from .mesh import HypersurfaceMesh
from .space_forms import AmbientSpaceForm, Kind, model_ball_volume, unit_ball_volume


class ConditionViolated(ValueError):
    """A support condition of the Sobolev inequality fails."""

    def __init__(self, which: str, detail: str):
        super().__init__(f"{which}: {detail}")
        self.which = which


class EmptyRegion(ValueError):
    pass


# ------------------------------------------------------------------ constants
@dataclass(frozen=True)
class SobolevConfig:
    n: int = 2
    alpha_free: float | None = None  # defaults to n / (n + 1)
    b2: float = 0.0  # K_N <= b^2; b2 > 0 means real b, b2 <= 0 imaginary
    b_imaginary: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.alpha_free is None:
            object.__setattr__(self, "alpha_free", optimal_alpha(self.n))
        if not 0 < self.alpha_free < 1:
            raise ValueError("alpha_free must lie in (0, 1)")

    @classmethod
    def for_space(cls, space: AmbientSpaceForm, alpha_free: float | None = None) -> "SobolevConfig":
        b2, imaginary = space.sectional_bound()
        return cls(space.n, alpha_free, b2, imaginary)

    @property
    def omega_n(self) -> float:
        return unit_ball_volume(self.n)

    @property
    def b(self) -> float:
        """|b|; whether b is real is stored separately."""
        return math.sqrt(abs(self.b2))


def optimal_alpha(n: int) -> float:
    return n / (n + 1)


def sobolev_constant(n: int, alpha_free: float | None = None) -> float:
    """pi 2^(n-1) / alpha (1 - alpha)^(-1/n) n/(n-1) omega_n^(-1/n)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    a = optimal_alpha(n) if alpha_free is None else alpha_free
    if not 0 < a < 1:
        raise ValueError("alpha_free must lie in (0, 1)")
    return math.pi * 2 ** (n - 1) / a * (1 - a) ** (-1.0 / n) * n / (n - 1) * unit_ball_volume(n) ** (-1.0 / n)


def sobolev_cn(n: int, Q: float = 4.0, alpha_free: float | None = None) -> float:
    """Constant of the L^{2Q} and space-time Sobolev inequalities.

    Both follow from applying the submanifold Sobolev inequality to a power
    v^gamma of the test function, which costs the chain-rule factor gamma on
    the gradient term; the inequalities are quadratic in v, hence
    c_n = (gamma c(n, alpha))^2 with gamma = 2(n-1)/(n-2) for n > 2 and
    gamma = Q for surfaces.  The Hoelder and Young factors of the
    composition are at most one and are dropped.
    """
    if n == 2:
        if not 1 <= Q < math.inf:
            raise ValueError("surfaces need a finite Q >= 1")
        gamma_ = Q
    else:
        gamma_ = 2 * (n - 1) / (n - 2)
    return (gamma_ * sobolev_constant(n, alpha_free)) ** 2


def default_Q(n: int, Q: float | None = None) -> float:
    if n > 2:
        return n / (n - 2)
    return 4.0 if Q is None else Q


def rho0(b2: float, alpha_free: float, support_volume: float, n: int, b_imaginary: bool | None = None) -> float:
    """Radius attached to a support of given volume by the support conditions."""
    if not support_volume > 0:
        raise ValueError("support volume must be positive")
    if not 0 < alpha_free < 1:
        raise ValueError("alpha_free must lie in (0, 1)")
    imaginary = (b2 <= 0) if b_imaginary is None else b_imaginary
    base = (1 - alpha_free) ** (-1.0 / n) * (support_volume / unit_ball_volume(n)) ** (1.0 / n)
    if imaginary or b2 == 0:
        return base
    b = math.sqrt(b2)
    arg = b * base
    if arg > 1:
        raise ConditionViolated("volume condition", f"arcsine argument {arg:.6g} exceeds 1")
    return math.asin(arg) / b


def radius_bound(cfg: SobolevConfig) -> float:
    """Upper bound on 2 rho0: pi / b for real b, infinite otherwise."""
    if cfg.b_imaginary or cfg.b2 <= 0:
        return math.inf
    return math.pi / cfg.b


@dataclass
class Conditions:
    volume_ok: bool
    radius_ok: bool
    support_volume: float
    volume_lhs: float  # b^2 (1 - alpha)^(-2/n) (V / omega_n)^(2/n)
    rho0: float
    radius_bound: float
    active: bool  # False when both conditions hold automatically

    @property
    def ok(self) -> bool:
        return self.volume_ok and self.radius_ok

    def as_dict(self) -> dict:
        return {
            "active": self.active,
            "radius_bound": self.radius_bound,
            "radius_ok": self.radius_ok,
            "rho0": self.rho0,
            "support_volume": self.support_volume,
            "volume_lhs": self.volume_lhs,
            "volume_ok": self.volume_ok,
        }


def conditions_for_volume(V: float, cfg: SobolevConfig) -> Conditions:
    n, a = cfg.n, cfg.alpha_free
    real_b = not cfg.b_imaginary and cfg.b2 > 0
    lhs = 0.0 + cfg.b2 * (1 - a) ** (-2.0 / n) * (V / cfg.omega_n) ** (2.0 / n) if V > 0 else 0.0
    if not real_b:
        # imaginary b: the conditions hold for any support
        r = rho0(cfg.b2, a, V, n, True) if V > 0 else 0.0
        return Conditions(True, True, V, lhs, r, math.inf, False)
    vol_ok = lhs <= 1.0
    try:
        r = rho0(cfg.b2, a, V, n, False) if V > 0 else 0.0
    except ConditionViolated:
        r = math.nan
    bound = radius_bound(cfg)
    rad_ok = bool(vol_ok and 2 * r <= bound)
    return Conditions(bool(vol_ok), rad_ok, V, lhs, r, bound, True)


def check_conditions(mesh: HypersurfaceMesh, values, cfg: SobolevConfig, area=None, space: AmbientSpaceForm | None = None) -> Conditions:
    """Evaluate the support conditions for a non-negative vertex function."""
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("test function must be non-negative")
    if area is None:
        if space is None:
            raise ValueError("need vertex areas or the ambient space")
        area = geometry.mixed_areas(mesh, space)
    V = float(np.sum(area[values > 0]))
    return conditions_for_volume(V, cfg)


# ------------------------------------------------------------- discrete calculus
def face_gradient_norms(mesh: HypersurfaceMesh, space: AmbientSpaceForm, values) -> np.ndarray:
    """|grad u| per face for the piecewise-linear interpolant of vertex values."""
    values = np.asarray(values, dtype=float)
    v, f = mesh.vertices, mesh.faces
    a = v[f[:, 1]] - v[f[:, 0]]
    b = v[f[:, 2]] - v[f[:, 0]]
    g11, g12, g22 = space.inner(a, a), space.inner(a, b), space.inner(b, b)
    det = g11 * g22 - g12 * g12
    d1 = values[f[:, 1]] - values[f[:, 0]]
    d2 = values[f[:, 2]] - values[f[:, 0]]
    # |grad u|^2 = d^T G^{-1} d with G the Gram matrix of (a, b)
    sq = (g22 * d1 * d1 - 2 * g12 * d1 * d2 + g11 * d2 * d2) / np.maximum(det, 1e-300)
    return np.sqrt(np.maximum(sq, 0.0))


def _lp(values, weights, p: float) -> float:
    return float(np.dot(np.abs(values) ** p, weights) ** (1.0 / p))


# ------------------------------------------------------------ inequality ratios
@dataclass
class RatioResult:
    ratio: float
    lhs: float
    rhs: float
    constant: float
    conditions: Conditions | None = None

    @property
    def holds(self) -> bool:
        return self.ratio <= 1.0

    def as_dict(self) -> dict:
        out = {"constant": self.constant, "holds": self.holds, "lhs": self.lhs, "ratio": self.ratio, "rhs": self.rhs}
        if self.conditions is not None:
            out["conditions"] = self.conditions.as_dict()
        return out


def _ratio(lhs: float, rhs: float) -> float:
    if lhs == 0:
        return 0.0
    return lhs / rhs if rhs > 0 else math.inf


def hoffman_spruck_ratio(mesh, fld: CurvatureField, values, space: AmbientSpaceForm, alpha_free: float | None = None) -> RatioResult:
    """(int h^(n/(n-1)))^((n-1)/n) divided by c(n) int (|grad h| + h |H|)."""
    values = np.asarray(values, dtype=float)
    cfg = SobolevConfig.for_space(space, alpha_free)
    cond = check_conditions(mesh, values, cfg, fld.area)
    if not cond.volume_ok:
        raise ConditionViolated("volume condition", f"left side {cond.volume_lhs:.6g} > 1")
    if not cond.radius_ok:
        raise ConditionViolated("radius condition", f"2 rho0 = {2 * cond.rho0:.6g} exceeds {cond.radius_bound:.6g}")
    n = space.n
    c = sobolev_constant(n, cfg.alpha_free)
    lhs = _lp(values, fld.area, n / (n - 1))
    grad = face_gradient_norms(mesh, space, values)
    fa = mesh.face_areas(space)
    rhs = c * (float(np.dot(grad, fa)) + float(np.dot(values * np.abs(fld.H), fld.area)))
    return RatioResult(_ratio(lhs, rhs), lhs, rhs, c, cond)


def l2q_ratio(mesh, fld: CurvatureField, values, space: AmbientSpaceForm, Q: float | None = None, alpha_free: float | None = None) -> RatioResult:
    """||v||^2_{2Q} against c_n (||grad v||^2_2 + ||H||_{n+3}^{2(n+3)/3} ||v||^2_2)."""
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("test function must be non-negative")
    n = space.n
    Q = default_Q(n, Q)
    cn = sobolev_cn(n, Q, alpha_free)
    cfg = SobolevConfig.for_space(space, alpha_free)
    cond = check_conditions(mesh, values, cfg, fld.area)
    lhs = _lp(values, fld.area, 2 * Q) ** 2
    grad = face_gradient_norms(mesh, space, values)
    fa = mesh.face_areas(space)
    Hn = _lp(fld.H, fld.area, n + 3)
    rhs = cn * (float(np.dot(grad**2, fa)) + Hn ** (2 * (n + 3) / 3) * _lp(values, fld.area, 2) ** 2)
    return RatioResult(_ratio(lhs, rhs), lhs, rhs, cn, cond)


def _kept_states(run, window=None):
    states = run.states
    if len(states) < 2:
        raise ValueError("need at least two kept snapshots (set mesh_every)")
    if window is not None:
        t0, t1 = window
        states = [s for s in states if t0 - 1e-15 <= s.t <= t1 + 1e-15]
        if len(states) < 2:
            raise ValueError(f"fewer than two kept snapshots in window {window}")
    return states


def _time_trapezoid(t, vals) -> float:
    t = np.asarray(t, dtype=float)
    vals = np.asarray(vals, dtype=float)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t)))


def spacetime_sobolev_ratio(run, v, Q: float | None = None, alpha_free: float | None = None, window=None) -> RatioResult:
    """Space-time Sobolev inequality with exponent beta = 2(n+2)/n.

    ``v`` is a callable ``v(state) -> vertex values`` or a list of arrays
    aligned with the kept snapshots.
    """
    states = _kept_states(run, window)
    space = run.space
    n = space.n
    if not callable(v) and len(v) != len(states):
        raise ValueError("v must provide values for every kept snapshot")
    beta = 2 * (n + 2) / n
    cn = sobolev_cn(n, default_Q(n, Q), alpha_free)
    t, vb, grad2, l2, Hn = [], [], [], [], []
    for i, s in enumerate(states):
        vals = np.asarray(v(s) if callable(v) else v[i], dtype=float)
        if np.any(vals < 0):
            raise ValueError("test function must be non-negative")
        w = s.field.area
        t.append(s.t)
        vb.append(float(np.dot(vals**beta, w)))
        g = face_gradient_norms(s.mesh, space, vals)
        grad2.append(float(np.dot(g**2, s.mesh.face_areas(space))))
        l2.append(float(np.dot(vals**2, w)))
        Hn.append(float(np.dot(np.abs(s.field.H) ** (n + 3), w)))
    lhs = _time_trapezoid(t, vb)
    max_l2 = max(l2)  # squared L2 norm
    H_norm = _time_trapezoid(t, Hn) ** (1.0 / (n + 3))
    rhs = cn * max_l2 ** (2.0 / n) * (_time_trapezoid(t, grad2) + max_l2 * H_norm ** (2 * (n + 3) / 3))
    return RatioResult(_ratio(lhs, rhs), lhs, rhs, cn, None)


def interpolation_check(values, weights, q: float, n: int, eps: float) -> tuple[float, float]:
    """Both sides of ||g||_{q/(q-1)} <= eps ||g||_{(n+2)/n} + eps^(-nu) ||g||_1."""
    nu = moser_nu(n, q)
    r = q / (q - 1)
    lam = (n + 2) / n
    if not 1 < r < lam:
        raise ValueError("need 1 < q/(q-1) < (n+2)/n")
    lhs = _lp(values, weights, r)
    rhs = eps * _lp(values, weights, lam) + eps ** (-nu) * _lp(values, weights, 1.0)
    return lhs, rhs


# ---------------------------------------------------------------- Moser ledger
def moser_nu(n: int, q: float) -> float:
    if not q > (n + 2) / 2:
        raise ValueError("need q > (n+2)/2")
    return (n + 2) / (2 * q - (n + 2))


def moser_lambda(beta: float) -> float:
    """Lambda(beta) = 100 beta, pinned only for beta >= 2."""
    if beta < 2:
        raise ValueError("Lambda(beta) is only specified for beta >= 2")
    return 100.0 * beta


def constant_a(c_n: float, C0: float, C1: float, C: float, nu: float) -> float:
    return (2 * c_n * C0 * C1) ** (1 + nu) + 2 * c_n * C1 * (C + 1)


def ambient_constant(space: AmbientSpaceForm) -> float:
    """C in the subsolution inequality for |A|^2 in a space form.

    The curvature terms of the |A|^2 evolution reduce to
    4K H^2 - 2nK |A|^2, bounded by 2n|K| |A|^2 using H^2 <= n |A|^2.
    """
    return 2.0 * space.n * abs(space.K)


@dataclass
class MoserConstants:
    n: int
    q: float
    beta: float
    p: int
    lam: float
    nu: float
    C: float
    c_n: float
    C0: float
    C1: float
    Lambda: float
    C_a: float
    C_z: float
    C_b: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in sorted(self.__dataclass_fields__)}


def moser_ledger(n: int, q: float, beta: float, C: float, c_n: float, p: int, f_norm: float, H_norm: float) -> MoserConstants:
    """Every constant of the reverse Hoelder and Harnack estimates.

    ``f_norm`` is ||f||_{L^q} and ``H_norm`` is ||H||_{L^(n+3)}, both over
    the space-time domain.
    """
    nu = moser_nu(n, q)
    Lam = moser_lambda(beta)
    if p < 1:
        raise ValueError("p must be at least 1")
    lam = (n + 2) / n
    C1 = (1 + H_norm ** (2 * (n + 3) / 3)) ** (n / (n + 2))
    Ca = constant_a(c_n, f_norm, C1, C, nu)
    Cz = 4**2 * 100 ** (1 + nu) * c_n * Ca
    Cb = (4**p * lam ** (1 + nu) * Cz * beta ** (1 + nu)) ** (n**2 / beta)
    return MoserConstants(n, q, beta, p, lam, nu, C, c_n, f_norm, C1, Lam, Ca, Cz, Cb)


# ------------------------------------------------------------- run windows
@dataclass
class _Slice:
    """One kept snapshot expressed in window-rescaled units."""

    t: float
    state: object
    area: np.ndarray
    v: np.ndarray
    H: np.ndarray
    s: np.ndarray  # rescaled squared distance to x0
    grad_s: np.ndarray  # rescaled gradient of s (ambient vectors)


def _window(run, window):
    t = np.array([s.t for s in run.states])
    if window is None:
        window = (float(t[0]), float(t[-1]))
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("empty window")
    return float(t0), float(t1), 1.0 / math.sqrt(t1 - t0)


def _slices(run, v, x0, window):
    t0, t1, lam = _window(run, window)
    space = run.space
    n = space.n
    out = []
    for s in _kept_states(run, (t0, t1)):
        x = s.mesh.vertices
        if space.curved:
            lg = space.log_map(x, np.broadcast_to(x0, x.shape))
            dist2 = space.inner(lg, lg)
            grad = -2.0 * lg
        else:
            diff = x - x0
            dist2 = np.sum(diff * diff, axis=1)
            grad = 2.0 * diff
        vals = np.asarray(v(s) if callable(v) else v, dtype=float)
        out.append(
            _Slice(
                t=lam**2 * (s.t - t0),
                state=s,
                area=lam**n * s.field.area,
                v=vals,
                H=s.field.H / lam,
                s=lam**2 * dist2,
                grad_s=lam * grad,
            )
        )
    return out, lam


def default_x0(run) -> np.ndarray:
    """Vertex of largest |A| on the last kept snapshot."""
    s = run.states[-1]
    return s.mesh.vertices[int(np.argmax(s.field.A2))].copy()


def _space_time_norm(slices, vals_of, p: float) -> float:
    t = [sl.t for sl in slices]
    return _time_trapezoid(t, [float(np.dot(np.abs(vals_of(sl)) ** p, sl.area)) for sl in slices]) ** (1.0 / p)


def window_norms(run, x0=None, window=None, q: float | None = None) -> dict:
    """||2|A|^2||_{L^q} and ||H||_{L^(n+3)} over the rescaled window."""
    n = run.space.n
    q = (n + 3) / 2 if q is None else q
    x0 = default_x0(run) if x0 is None else np.asarray(x0, dtype=float)
    slices, lam = _slices(run, lambda s: s.field.A2, x0, window)
    f_norm = _space_time_norm(slices, lambda sl: 2 * sl.v / lam**2, q)
    H_norm = _space_time_norm(slices, lambda sl: sl.H, n + 3)
    return {"f_norm": f_norm, "H_norm": H_norm, "scale": lam}


# ------------------------------------------------------------------ cutoffs
def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _smoothstep_d(x):
    inside = (x > 0) & (x < 1)
    return np.where(inside, 6 * x * (1 - x), 0.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Space-time test function eta = phi(t) psi(|x - x0|^2) in window units.

    ``kind="moser"``: radii r_k = 2^-p + 2^-(p+k+1) and times
    t_k = (1 - 4^-(p+k)) / 12 of the k-th iteration step; phi ramps up on
    [t_(k-1), t_k] and psi drops from 1 to 0 for |x - x0| between r_k and
    r_(k-1).  ``kind="ramp"``: psi is identically one and phi ramps up on
    ``[t_on, t_full]``.
    """

    kind: str = "moser"
    p: int = 2
    k: int = 1
    t_on: float = 0.05
    t_full: float = 0.25

    def radii(self):
        r = lambda j: 2.0 ** (-self.p) + 2.0 ** (-(self.p + j + 1))
        return r(self.k), r(self.k - 1)

    def times(self):
        if self.kind == "ramp":
            return self.t_on, self.t_full
        tk = lambda j: (1 - 4.0 ** (-(self.p + j))) / 12.0
        return tk(self.k - 1), tk(self.k)

    def phi(self, t):
        a, b = self.times()
        return _smoothstep((t - a) / (b - a))

    def dphi(self, t):
        a, b = self.times()
        return _smoothstep_d((t - a) / (b - a)) / (b - a)

    def psi(self, s):
        if self.kind == "ramp":
            return np.ones_like(s)
        r_in, r_out = self.radii()
        return 1.0 - _smoothstep((s - r_in**2) / (r_out**2 - r_in**2))

    def dpsi(self, s):
        if self.kind == "ramp":
            return np.zeros_like(s)
        r_in, r_out = self.radii()
        w = r_out**2 - r_in**2
        return -_smoothstep_d((s - r_in**2) / w) / w

    def validate(self):
        if self.kind not in ("moser", "ramp"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if self.kind == "ramp" and not 0 < self.t_on < self.t_full:
            raise ValueError("the cutoff must vanish at t = 0: need 0 < t_on < t_full")
        if self.k < 1 or self.p < 1:
            raise ValueError("need k >= 1 and p >= 1")
        if float(self.phi(0.0)) != 0.0:
            raise ValueError("the cutoff must vanish at t = 0")


# ------------------------------------------------------------ reverse Hoelder
@dataclass
class ReverseHolderReport:
    lhs: float
    rhs: float
    constants: MoserConstants
    beta: float
    conditions_ok: bool
    max_support_volume: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "conditions_ok": self.conditions_ok,
            "constants": self.constants.as_dict(),
            "holds": self.holds,
            "lhs": self.lhs,
            "max_support_volume": self.max_support_volume,
            "rhs": self.rhs,
        }


def reverse_holder_check(
    run,
    v=None,
    f=None,
    C: float | None = None,
    cutoff: CutoffSpec | None = None,
    x0=None,
    window=None,
    q: float | None = None,
    beta: float | None = None,
    Q: float | None = None,
    v_dimension: float = -2.0,
) -> ReverseHolderReport:
    """Evaluate both sides of the reverse Hoelder inequality on a run window.

    Defaults: v = |A|^2, f = 2|A|^2, C from the ambient curvature,
    q = beta = (n+3)/2, Moser cutoff with p = 2, k = 1.  ``v_dimension``
    is the length dimension of v (-2 for |A|^2, 0 for dimensionless data).
    """
    space = run.space
    n = space.n
    cutoff = cutoff or CutoffSpec()
    cutoff.validate()
    q = (n + 3) / 2 if q is None else q
    beta = (n + 3) / 2 if beta is None else beta
    x0 = default_x0(run) if x0 is None else np.asarray(x0, dtype=float)
    v = v or (lambda s: s.field.A2)
    f = f or (lambda s: 2.0 * s.field.A2)
    slices, lam = _slices(run, v, x0, window)
    C = ambient_constant(space) / lam**2 if C is None else C
    vscale = lam**v_dimension
    fvals = [np.asarray(f(sl.state), dtype=float) * lam**-2 for sl in slices]
    t = [sl.t for sl in slices]
    f_norm = _time_trapezoid(t, [float(np.dot(np.abs(fv) ** q, sl.area)) for fv, sl in zip(fvals, slices)]) ** (1 / q)
    H_norm = _space_time_norm(slices, lambda sl: sl.H, n + 3)
    consts = moser_ledger(n, q, beta, C, sobolev_cn(n, default_Q(n, Q)), cutoff.p, f_norm, H_norm)
    cfg = SobolevConfig.for_space(space)
    lam_exp = (n + 2) / n
    left, right, cond_ok, vmax = [], [], True, 0.0
    for sl in slices:
        st = sl.state
        vb = (sl.v * vscale) ** beta
        phi, dphi = float(cutoff.phi(sl.t)), float(cutoff.dphi(sl.t))
        psi, dpsi = cutoff.psi(sl.s), cutoff.dpsi(sl.s)
        eta = phi * psi
        nu = st.field.normal
        gs = sl.grad_s
        gs_tan = gs - space.inner(gs, nu)[:, None] * nu
        grad_eta = phi * np.abs(dpsi) * space.norm(gs_tan)
        # d/dt along the flow: dx/dt = -H nu, in window units
        ds_dt = -sl.H * space.inner(gs, nu)
        deta_dt = dphi * psi + phi * dpsi * ds_dt
        L = geometry.stiffness_matrix(st.mesh, space)
        lap_eta = -(L @ eta) / sl.area * lam ** (n - 2)  # the stiffness matrix has length dimension n - 2
        heat = deta_dt - lap_eta
        left.append(float(np.dot((eta**2 * vb) ** lam_exp, sl.area)))
        right.append(float(np.dot(vb * (eta**2 + grad_eta**2 + 2 * eta * np.abs(heat)), sl.area)))
        support = (eta * sl.v) > 0
        V = float(np.sum(sl.area[support])) / lam**n
        vmax = max(vmax, V)
        cond_ok &= conditions_for_volume(V, cfg).ok
    lhs = _time_trapezoid(t, left) ** (1 / lam_exp)
    rhs = consts.C_a * consts.Lambda ** (1 + consts.nu) * _time_trapezoid(t, right)
    return ReverseHolderReport(lhs, rhs, consts, beta, bool(cond_ok), vmax)


# ------------------------------------------------------------------ Harnack
@dataclass
class HarnackReport:
    sup_inner: float  # ||v||_{L^inf(D')}
    norm_outer: float  # ||v||_{L^beta(D)}
    C_b: float
    beta: float
    p: int
    constants: MoserConstants
    inner_snapshots: int
    bishop_gromov: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.sup_inner <= self.C_b * self.norm_outer

    def as_dict(self) -> dict:
        return {
            "C_b": self.C_b,
            "beta": self.beta,
            "bishop_gromov": dict(self.bishop_gromov),
            "constants": self.constants.as_dict(),
            "holds": self.holds,
            "inner_snapshots": self.inner_snapshots,
            "norm_outer": self.norm_outer,
            "p": self.p,
            "sup_inner": self.sup_inner,
        }


def bishop_gromov_report(run, p: int, alpha_free: float | None = None, scale: float = 1.0) -> dict:
    """Whether the ball-volume bound makes the support conditions automatic.

    The initial surface has sectional curvature >= K_low with
    K_low = min(0, K - max|A|^2 / 2) (Gauss equation, |k1 k2| <= |A|^2 / 2),
    so balls of radius R on every later surface have area at most the
    model volume Vol_{K_low}(B(R)).  Radii are in window units.
    """
    space = run.space
    n = space.n
    A2max = float(np.max(run.states[0].field.A2))
    K_low = min(0.0, space.K - A2max / 2.0)
    R = (2.0 ** (-p) + 2.0 ** (-(p + 1))) / scale  # outermost cutoff radius, physical units
    vol = model_ball_volume(K_low, R, n)
    cfg = SobolevConfig.for_space(space, alpha_free)
    cond = conditions_for_volume(vol, cfg)
    return {
        "K_lower": K_low,
        "ball_radius": R,
        "ball_volume_bound": vol,
        "conditions_active": cond.active,
        "conditions_hold": cond.ok,
        "volume_lhs": cond.volume_lhs,
    }


def harnack_check(
    run,
    v=None,
    x0=None,
    p: int = 2,
    beta: float | None = None,
    q: float | None = None,
    window=None,
    Q: float | None = None,
    v_dimension: float = -2.0,
) -> HarnackReport:
    """Compare sup over D' with C_b times the L^beta norm over D.

    D is the unit ambient ball about x0 over the rescaled window and D' the
    ball of radius 2^-p over its last eleven twelfths.
    """
    space = run.space
    n = space.n
    beta = (n + 3) / 2 if beta is None else beta
    moser_lambda(beta)  # refuses beta < 2
    q = (n + 3) / 2 if q is None else q
    x0 = default_x0(run) if x0 is None else np.asarray(x0, dtype=float)
    v = v or (lambda s: s.field.A2)
    slices, lam = _slices(run, v, x0, window)
    vscale = lam**v_dimension
    t = [sl.t for sl in slices]
    r_inner = 2.0 ** (-p)
    inner = [sl for sl in slices if sl.t >= 1 / 12 - 1e-12 and np.any(sl.s <= r_inner**2)]
    if not inner:
        raise EmptyRegion("the inner region is empty: no kept snapshot meets the small ball after t = 1/12")
    sup_inner = max(float(np.max(sl.v[sl.s <= r_inner**2])) for sl in inner) * vscale
    outer = [float(np.dot(((sl.v * vscale) ** beta) * (sl.s <= 1.0), sl.area)) for sl in slices]
    norm_outer = _time_trapezoid(t, outer) ** (1 / beta)
    f_norm = _time_trapezoid(t, [float(np.dot((2 * sl.state.field.A2 / lam**2) ** q, sl.area)) for sl in slices]) ** (1 / q)
    H_norm = _space_time_norm(slices, lambda sl: sl.H, n + 3)
    consts = moser_ledger(n, q, beta, ambient_constant(space) / lam**2, sobolev_cn(n, default_Q(n, Q)), p, f_norm, H_norm)
    bg = bishop_gromov_report(run, p, scale=lam)
    return HarnackReport(sup_inner, norm_outer, consts.C_b, beta, p, consts, len(inner), bg)


# ------------------------------------------------------------------ corpus
@dataclass(frozen=True)
class Bump:
    """amplitude * (1 - (d / radius)^2)^2 inside the ambient ball, zero outside."""

    center: int
    radius: float
    amplitude: float
    alpha_free: float | None = None

    def values(self, mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> np.ndarray:
        if not (self.radius > 0 and self.amplitude >= 0):
            raise ValueError("bump needs radius > 0 and amplitude >= 0")
        if not 0 <= self.center < mesh.n_vertices:
            raise ValueError(f"center vertex {self.center} out of range")
        x = mesh.vertices
        d = space.distance(np.broadcast_to(x[self.center], x.shape), x)
        u = np.clip(1.0 - (d / self.radius) ** 2, 0.0, None)
        return self.amplitude * u * u


def generate_corpus(n_vertices: int, count: int, seed: int, radius_range=(0.15, 0.6), amplitude_range=(0.5, 2.0)) -> list:
    rng = np.random.default_rng(seed)
    centers = rng.integers(0, n_vertices, size=count)
    radii = rng.uniform(*radius_range, size=count)
    amps = rng.uniform(*amplitude_range, size=count)
    return [Bump(int(c), float(r), float(a)) for c, r, a in zip(centers, radii, amps)]


CORPUS_COLUMNS = ("center", "radius", "amplitude", "alpha_free")


def write_corpus(path, bumps) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# bump test functions: center = vertex index, radius in ambient length units,\n")
        fh.write("# amplitude dimensionless, alpha_free = free Sobolev parameter (blank: optimal)\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CORPUS_COLUMNS)
        for b in bumps:
            w.writerow([b.center, repr(b.radius), repr(b.amplitude), "" if b.alpha_free is None else repr(b.alpha_free)])


def read_corpus(path) -> list:
    text = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not text:
        return []
    rows = list(csv.DictReader(text))
    missing = {"center", "radius", "amplitude"} - set(rows[0].keys() if rows else CORPUS_COLUMNS)
    if missing:
        raise ValueError(f"corpus is missing columns {sorted(missing)}")
    out = []
    for r in rows:
        a = r.get("alpha_free") or ""
        out.append(Bump(int(r["center"]), float(r["radius"]), float(r["amplitude"]), float(a) if a.strip() else None))
    return out


def verify_corpus(mesh: HypersurfaceMesh, space: AmbientSpaceForm, bumps, Q: float | None = None) -> dict:
    """Hoffman-Spruck and L^{2Q} ratios for every bump; errors are per entry."""
    fld = compute_curvature(mesh, space)
    entries = []
    for i, b in enumerate(bumps):
        entry = {"index": i, "center": b.center, "radius": b.radius, "amplitude": b.amplitude, "alpha_free": b.alpha_free}
        try:
            vals = b.values(mesh, space)
            try:
                hs = hoffman_spruck_ratio(mesh, fld, vals, space, b.alpha_free)
                entry["hoffman_spruck"] = hs.as_dict()
            except ConditionViolated as exc:
                entry["hoffman_spruck"] = {"skipped": str(exc)}
            entry["l2q"] = l2q_ratio(mesh, fld, vals, space, Q, b.alpha_free).as_dict()
        except ValueError as exc:
            entry["error"] = str(exc)
        entries.append(entry)
    ok = all(
        "error" not in e and e["l2q"]["holds"] and e["hoffman_spruck"].get("holds", True) for e in entries
    )
    return {
        "entries": entries,
        "errors": sum("error" in e for e in entries),
        "pass": bool(ok),
        "warning": "empty corpus" if not entries else None,
    }
