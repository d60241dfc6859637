"""Exact umbilic solutions of mean curvature flow and reduced integral oracles.

Round spheres in R^{n+1} and geodesic spheres in the curved space forms stay
umbilic under the flow, so every space-time integral of a function of |A|
or |H| collapses to a one-dimensional integral in time.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .space_forms import unit_sphere_area


class SolutionKind(str, enum.Enum):
    EUCLIDEAN_SPHERE = "euclidean-sphere"
    SPHERICAL_GEODESIC_SPHERE = "spherical-geodesic-sphere"
    HYPERBOLIC_GEODESIC_SPHERE = "hyperbolic-geodesic-sphere"


@dataclass(frozen=True)
class ExactSolution:
    kind: SolutionKind
    radius0: float  # r0 (Euclidean) or geodesic radius rho0
    n: int = 2
    K: float = 0.0

    @property
    def k(self) -> float:
        return math.sqrt(abs(self.K))

    @property
    def T(self) -> float:
        n = self.n
        if self.kind is SolutionKind.EUCLIDEAN_SPHERE:
            return self.radius0**2 / (2 * n)
        s0 = self.k * self.radius0
        if self.kind is SolutionKind.SPHERICAL_GEODESIC_SPHERE:
            return math.log(1.0 / math.cos(s0)) / (n * self.K)
        return math.log(math.cosh(s0)) / (n * abs(self.K))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.T):
            raise ValueError(f"time outside [0, {self.T})")
        return t

    def radius(self, t):
        """Euclidean radius r(t) or geodesic radius rho(t)."""
        t = self._check(t)
        n = self.n
        if self.kind is SolutionKind.EUCLIDEAN_SPHERE:
            return np.sqrt(self.radius0**2 - 2 * n * t)
        s0, k = self.k * self.radius0, self.k
        if self.kind is SolutionKind.SPHERICAL_GEODESIC_SPHERE:
            return np.arccos(math.cos(s0) * np.exp(n * self.K * t)) / k
        return np.arccosh(math.cosh(s0) * np.exp(-n * abs(self.K) * t)) / k

    def principal_curvature(self, t):
        r = self.radius(t)
        if self.kind is SolutionKind.EUCLIDEAN_SPHERE:
            return 1.0 / r
        k = self.k
        if self.kind is SolutionKind.SPHERICAL_GEODESIC_SPHERE:
            return k / np.tan(k * r)
        return k / np.tanh(k * r)

    def H(self, t):
        return self.n * self.principal_curvature(t)

    def A2(self, t):
        return self.n * self.principal_curvature(t) ** 2

    def area(self, t):
        r = self.radius(t)
        k = self.k
        if self.kind is SolutionKind.EUCLIDEAN_SPHERE:
            profile = r
        elif self.kind is SolutionKind.SPHERICAL_GEODESIC_SPHERE:
            profile = np.sin(k * r) / k
        else:
            profile = np.sinh(k * r) / k
        return unit_sphere_area(self.n) * profile**self.n

    def area_rate(self, t):
        """Closed-form d(area)/dt, for the energy identity."""
        r = self.radius(t)
        k = self.k
        n = self.n
        H = self.H(t)
        if self.kind is SolutionKind.EUCLIDEAN_SPHERE:
            prof, dprof = r, 1.0
        elif self.kind is SolutionKind.SPHERICAL_GEODESIC_SPHERE:
            prof, dprof = np.sin(k * r) / k, np.cos(k * r)
        else:
            prof, dprof = np.sinh(k * r) / k, np.cosh(k * r)
        # d rho / dt = -H
        return unit_sphere_area(n) * n * prof ** (n - 1) * dprof * (-H)


def euclidean_sphere(r0: float, n: int = 2) -> ExactSolution:
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    return ExactSolution(SolutionKind.EUCLIDEAN_SPHERE, float(r0), n, 0.0)


def spaceform_geodesic_sphere(K: float, rho0: float, n: int = 2) -> ExactSolution:
    if K > 0:
        if not 0 < rho0 * math.sqrt(K) < math.pi / 2:
            raise ValueError("need 0 < sqrt(K) rho0 < pi/2 on the sphere")
        return ExactSolution(SolutionKind.SPHERICAL_GEODESIC_SPHERE, float(rho0), n, float(K))
    if K < 0:
        if not rho0 > 0:
            raise ValueError("rho0 must be positive")
        return ExactSolution(SolutionKind.HYPERBOLIC_GEODESIC_SPHERE, float(rho0), n, float(K))
    raise ValueError("use euclidean_sphere for K = 0")


def solution_for(space, radius0: float) -> ExactSolution:
    """Exact solution matching a geodesic sphere about the base point of ``space``."""
    if not space.curved:
        return euclidean_sphere(radius0, space.n)
    return spaceform_geodesic_sphere(space.K, radius0, space.n)


# ------------------------------------------------------------------ integrals
def a_pow(alpha: float):
    return ("A_pow", float(alpha))


def h_pow(alpha: float):
    return ("H_pow", float(alpha))


def subcritical(a: float, b: float = 1.0):
    return ("subcritical", float(a), float(b))


def _integrand(sol: ExactSolution, quantity):
    name = quantity[0]
    if name == "A_pow":
        alpha = quantity[1]
        return lambda s: sol.area(s) * sol.A2(s) ** (alpha / 2)
    if name == "H_pow":
        alpha = quantity[1]
        return lambda s: sol.area(s) * np.abs(sol.H(s)) ** alpha
    if name == "subcritical":
        _, a, b = quantity
        n = sol.n

        def f(s):
            A = np.sqrt(sol.A2(s))
            return sol.area(s) * A ** (n + 2) / np.log(a + A**b)

        return f
    raise ValueError(f"unknown quantity {quantity!r}")


def _closed_form(sol: ExactSolution, quantity, t: float):
    if sol.kind is not SolutionKind.EUCLIDEAN_SPHERE or quantity[0] not in ("A_pow", "H_pow"):
        return None
    n, r0, alpha = sol.n, sol.radius0, quantity[1]
    # integrand = sigma_n c^alpha r^(n - alpha), r^2 = r0^2 - 2 n s
    c = math.sqrt(n) if quantity[0] == "A_pow" else float(n)
    pref = unit_sphere_area(n) * c**alpha
    e = (n - alpha) / 2 + 1
    u0, u1 = r0 * r0, r0 * r0 - 2 * n * t
    if abs(e) < 1e-14:
        return pref * math.log(u0 / u1) / (2 * n)
    return pref * (u0**e - u1**e) / (2 * n * e)


def oracle_integral(sol: ExactSolution, quantity, t: float, method: str = "auto") -> float:
    """Space-time integral of ``quantity`` over [0, t] on the exact solution.

    ``method`` is "closed", "quadrature" or "auto" (closed form when known).
    """
    if not 0 <= t < sol.T:
        raise ValueError(f"t must lie in [0, T = {sol.T})")
    if method in ("auto", "closed"):
        val = _closed_form(sol, quantity, t)
        if val is not None:
            return val
        if method == "closed":
            raise ValueError("no closed form for this quantity")
    f = _integrand(sol, quantity)
    T = sol.T
    # s = T (1 - exp(-y)) removes the 1/(T - s) growth near the singular time
    ymax = -math.log1p(-t / T)
    g = lambda y: f(T * -math.expm1(-y)) * T * math.exp(-y)
    with warnings.catch_warnings():
        # within ~1e-12 of T the radius loses digits to cancellation and quad
        # flags roundoff; the result is still accurate to about 1e-9
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(g, 0.0, ymax, epsabs=0.0, epsrel=1e-10, limit=500)
    return float(val)


# ------------------------------------------------------------------ replay
def replay(sol: ExactSolution, times, tracking=None):
    """FlowRun whose snapshot summaries are sampled from the exact solution."""
    from .flow import FlowRun, Tracking, a_key, g_key, h_key
    from .space_forms import AmbientSpaceForm

    tracking = tracking or Tracking.default(sol.n)
    if sol.kind is SolutionKind.EUCLIDEAN_SPHERE:
        space = AmbientSpaceForm.euclidean(sol.n)
    else:
        space = AmbientSpaceForm.sphere(sol.K, sol.n) if sol.K > 0 else AmbientSpaceForm.hyperbolic(sol.K, sol.n)
    times = np.asarray(times, dtype=float)
    A2 = sol.A2(times)
    A = np.sqrt(A2)
    H = sol.H(times)
    area = sol.area(times)
    n = sol.n
    cols = {
        "t": times,
        "dt": np.r_[0.0, np.diff(times)],
        "area": area,
        "volume": area * sol.radius(times) / (n + 1) if sol.kind is SolutionKind.EUCLIDEAN_SPHERE else np.full(len(times), np.nan),
        "radius": sol.radius(times),
        "max_A2": A2,
        "sup_A": A,
        "sup_Abar": np.abs(H) * A,
        "min_eig": sol.principal_curvature(times),
        "mean_H": H,
        "cv_H": np.zeros(len(times)),
        "int_H2": area * H * H,
        "min_edge": np.full(len(times), np.nan),
        "consistency": np.zeros(len(times)),
    }
    for p in tracking.A_powers:
        cols[a_key(p)] = area * A**p
    for p in tracking.H_powers:
        cols[h_key(p)] = area * np.abs(H) ** p
    for a, b in tracking.subcritical:
        cols[g_key(a, b)] = area * A ** (n + 2) / np.log(a + A**b)
    return FlowRun.from_series(space, cols, reason="replay", tracking=tracking, meta={"oracle": sol.kind.value})


@dataclass
class ComparisonReport:
    radius_max_rel_err: float
    supA_max_rel_err: float
    integral_rel_errs: dict
    T_est_rel_err: float
    window: tuple

    def as_dict(self):
        return {
            "radius_max_rel_err": self.radius_max_rel_err,
            "supA_max_rel_err": self.supA_max_rel_err,
            "integral_rel_errs": dict(self.integral_rel_errs),
            "T_est_rel_err": self.T_est_rel_err,
            "window": list(self.window),
        }


def compare(run, sol: ExactSolution, upto: float | None = None, T_est: float | None = None) -> ComparisonReport:
    """Relative errors of a run against an exact solution over the overlap window."""
    from .flow import a_key, g_key

    expected = {
        SolutionKind.EUCLIDEAN_SPHERE: "euclidean",
        SolutionKind.SPHERICAL_GEODESIC_SPHERE: "sphere",
        SolutionKind.HYPERBOLIC_GEODESIC_SPHERE: "hyperbolic",
    }[sol.kind]
    if run.space.kind.value != expected or run.space.n != sol.n or run.space.K != sol.K:
        raise ValueError("run and exact solution live in different ambient spaces")
    t = run.t
    end = min(t[-1], sol.T * (1 - 1e-12)) if upto is None else min(upto, t[-1])
    w = t <= end
    tw = t[w]
    rad = float(np.max(np.abs(run["radius"][w] / sol.radius(tw) - 1)))
    supA = float(np.max(np.abs(run["sup_A"][w] / np.sqrt(sol.A2(tw)) - 1)))
    errs = {}
    for p in run.tracking.A_powers:
        key = a_key(p)
        if key in run.columns:
            exact = oracle_integral(sol, a_pow(p), end)
            errs[key] = abs(run.integral(key, end) / exact - 1) if exact else 0.0
    for a, b in run.tracking.subcritical:
        key = g_key(a, b)
        if key in run.columns:
            exact = oracle_integral(sol, subcritical(a, b), end)
            errs[key] = abs(run.integral(key, end) / exact - 1) if exact else 0.0
    if T_est is None:
        from .flow import detect_singularity

        try:
            T_est, _ = detect_singularity(run)
        except ValueError:
            T_est = math.nan
    T_err = abs(T_est / sol.T - 1) if math.isfinite(T_est) else math.inf
    return ComparisonReport(rad, supA, errs, float(T_err), (0.0, float(end)))
