"""Extension-criterion quantities evaluated along a flow run.

Everything here is post-processing of the per-snapshot summaries stored in a
:class:`~mcflab.flow.FlowRun`.  Space-time integrals are accumulated with
the trapezoidal rule, so they are non-decreasing for non-negative integrands.
Divergence cannot be decided from finite data; it is reported as evidence
in the form of ceiling crossings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .flow import FlowRun, a_key, detect_singularity, g_key, h_key

DEFAULT_CEILINGS = (1e2, 1e3, 1e4)


class DiagnosticsError(ValueError):
    pass


def _require(run: FlowRun, key: str) -> np.ndarray:
    if len(run) == 0:
        raise DiagnosticsError("empty run")
    if key not in run.columns:
        raise DiagnosticsError(f"quantity {key!r} was not tracked during the run")
    return run[key]


# ------------------------------------------------------------------ ledger
@dataclass
class IntegralLedger:
    """Per-snapshot spatial integrals and their running time accumulations."""

    t: np.ndarray
    spatial: dict  # name -> per-snapshot value
    accumulated: dict  # name -> running space-time integral
    sup_A: np.ndarray
    sup_Abar: np.ndarray
    min_eig: np.ndarray

    @classmethod
    def from_run(cls, run: FlowRun) -> "IntegralLedger":
        if len(run) == 0:
            raise DiagnosticsError("empty run")
        names = [k for k in run.columns if k.startswith(("intA_", "intH_", "G_"))]
        spatial = {k: run[k] for k in names}
        acc = {k: run.accumulate(k) for k in names}
        return cls(run.t, spatial, acc, run["sup_A"], run["sup_Abar"], run["min_eig"])

    def rows(self):
        """Column names and rows for a CSV dump."""
        names = ["t", "sup_A", "sup_Abar", "min_eig"]
        keys = sorted(self.accumulated)
        names += [f"acc_{k}" for k in keys]
        for i in range(len(self.t)):
            row = [self.t[i], self.sup_A[i], self.sup_Abar[i], self.min_eig[i]]
            row += [self.accumulated[k][i] for k in keys]
            yield names, row


# ---------------------------------------------------------------- criteria
@dataclass(frozen=True)
class LpqNorm:
    value: float
    critical: bool  # n/p + 2/q == 1


def lpq_norm(run: FlowRun, p: float, q: float, upto_t: float | None = None) -> LpqNorm:
    """Mixed space-time norm [int_0^t (int |A|^p dmu)^(q/p) ds]^(1/q)."""
    if not (p > 0 and q > 0):
        raise DiagnosticsError("p and q must be positive")
    spatial = _require(run, a_key(p))
    inner = np.maximum(spatial, 0.0) ** (q / p)
    total = run.integral(inner, upto_t)
    n = run.space.n
    return LpqNorm(float(total ** (1.0 / q)), bool(abs(n / p + 2 / q - 1) < 1e-12))


def subcritical_integral(run: FlowRun, a: float, b: float = 1.0, upto_t: float | None = None) -> float:
    """int_0^t int |A|^(n+2) / log(a + |A|^b) dmu ds."""
    if a < 1 or b < 1:
        raise DiagnosticsError("the logarithmic weight needs a >= 1 and b >= 1")
    return run.integral(_require(run, g_key(a, b)), upto_t)


def cooper_sup(run: FlowRun) -> np.ndarray:
    """sup over the surface of |H| |A| at every snapshot."""
    return _require(run, "sup_Abar").copy()


def lower_bound_monitor(run: FlowRun) -> float:
    """Smallest principal curvature seen anywhere on the run."""
    return float(np.min(_require(run, "min_eig")))


def mean_curvature_norm(run: FlowRun, alpha: float, upto_t: float | None = None) -> float:
    """Space-time L^alpha norm of H."""
    return run.integral(_require(run, h_key(alpha)), upto_t) ** (1.0 / alpha)


# ---------------------------------------------------------------- Gronwall
def psi(s, a: float, b: float = 1.0):
    """s log(a + s^b)."""
    s = np.asarray(s, dtype=float)
    return s * np.log(a + s**b)


def psi_tilde(y, a: float, b: float = 1.0, base: float = 1.0):
    """int_base^y ds / psi(s), by quadrature in u = log s."""
    if base <= 0:
        raise DiagnosticsError("base must be positive")

    def one(val):
        if not val > 0:
            raise DiagnosticsError("argument must be positive")
        g = lambda u: 1.0 / math.log(a + math.exp(b * u))
        lo, hi = math.log(base), math.log(val)
        res, _ = integrate.quad(g, min(lo, hi), max(lo, hi), epsabs=0.0, epsrel=1e-12, limit=200)
        return res if hi >= lo else -res

    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        return one(float(y))
    return np.array([one(float(v)) for v in y])


@dataclass
class GronwallReport:
    tau1: float
    c_tau1: float
    a: float
    b: float
    base: float
    t: np.ndarray
    f: np.ndarray
    h: np.ndarray
    psi_tilde_h: np.ndarray
    bound: float  # right-hand side of the Psi-tilde inequality
    f_le_h: bool
    bound_holds: bool
    min_margin_f: float  # min over t >= tau1 of h - f
    min_margin_bound: float

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "base": self.base,
            "bound": self.bound,
            "bound_holds": self.bound_holds,
            "c_tau1": self.c_tau1,
            "f_le_h": self.f_le_h,
            "min_margin_bound": self.min_margin_bound,
            "min_margin_f": self.min_margin_f,
            "tau1": self.tau1,
        }


def calibrate_c(run: FlowRun, tau1: float) -> float:
    """sup|A|(tau1) / (1 + int_0^tau1 int |A|^(n+3))."""
    n = run.space.n
    f = np.interp(tau1, run.t, _require(run, "sup_A"))
    return float(f / (1.0 + run.integral(_require(run, a_key(n + 3)), tau1)))


def gronwall_bound(run: FlowRun, a: float = 1.0, tau1: float | None = None, b: float = 1.0, c: float | None = None, base: float = 1.0) -> GronwallReport:
    """Check f <= h and the Psi-tilde bound with f = sup|A| along the run.

    ``c`` defaults to the calibrated value of :func:`calibrate_c`.  ``tau1``
    defaults to a tenth of the recorded window.
    """
    if a < 1 or b < 1:
        raise DiagnosticsError("need a >= 1 and b >= 1")
    t = run.t
    if tau1 is None:
        tau1 = 0.1 * min(1.0, float(t[-1]))
    if not (0 < tau1 < min(1.0, float(t[-1]))):
        raise DiagnosticsError("tau1 must lie in (0, min(1, last time))")
    if c is None:
        c = calibrate_c(run, tau1)
    f = _require(run, "sup_A")
    G = _require(run, g_key(a, b))
    h = c * (1.0 + run.accumulate(psi(f, a, b) * G))
    after = t >= tau1
    h_tau1 = float(np.interp(tau1, t, h))
    pt = psi_tilde(h[after], a, b, base)
    bound = float(psi_tilde(h_tau1, a, b, base) + c * run.integral(G))
    margin_f = float(np.min(h[after] - f[after]))
    margin_b = float(bound - np.max(pt))
    return GronwallReport(
        tau1=float(tau1),
        c_tau1=float(c),
        a=float(a),
        b=float(b),
        base=float(base),
        t=t,
        f=f,
        h=h,
        psi_tilde_h=pt,
        bound=bound,
        f_le_h=margin_f >= 0,
        bound_holds=margin_b >= 0,
        min_margin_f=margin_f,
        min_margin_bound=margin_b,
    )


# ---------------------------------------------------------------- smallness
@dataclass
class SmallnessRatios:
    window: tuple
    scale: float  # parabolic factor mapping the window onto [0, 1]
    integral_n3: float  # int_0^1 int |A|^(n+3) after rescaling
    sup_late: float  # sup over [1/2, 1] of sup|A| after rescaling
    t: np.ndarray
    running_ratio: np.ndarray  # sup|A|(t) / (1 + int_0^t int |A|^(n+3))


def smallness_ratios(run: FlowRun, window: tuple | None = None) -> SmallnessRatios:
    """Small-energy quantities on a window parabolically rescaled to [0, 1].

    Under x -> lam x, t -> lam^2 t the integral of |A|^(n+3) picks up a
    factor 1/lam and sup|A| a factor 1/lam.
    """
    t = run.t
    if window is None:
        window = (float(t[0]), float(min(t[-1], t[0] + 1.0)))
    t0, t1 = window
    if not (t[0] <= t0 < t1 <= t[-1] * (1 + 1e-12)):
        raise DiagnosticsError(f"window {window} not covered by the run")
    n = run.space.n
    lam = 1.0 / math.sqrt(t1 - t0)
    spatial = _require(run, a_key(n + 3))
    acc = run.accumulate(spatial)
    total = float(np.interp(t1, t, acc) - np.interp(t0, t, acc)) / lam
    sup = _require(run, "sup_A")
    late = (t >= t0 + 0.5 * (t1 - t0)) & (t <= t1)
    sup_late = float(np.max(sup[late])) / lam if late.any() else float(np.interp(t1, t, sup)) / lam
    ratio = sup / (1.0 + acc)
    return SmallnessRatios((t0, t1), lam, total, sup_late, t, ratio)


# ---------------------------------------------------------------- verdicts
@dataclass
class CriteriaConfig:
    ceilings: tuple = DEFAULT_CEILINGS
    alphas: tuple | None = None  # A and H exponents, default (n+2, n+3)
    lpq_pairs: tuple | None = None  # default the critical pairs (n+2, n+2), (2n, 4)
    log_weights: tuple = ((1.0, 1.0),)  # (a, b) pairs
    enabled: tuple = ("sup_A", "cooper", "lpq", "critical_alpha", "subcritical", "lower_bound")

    def resolved(self, n: int):
        alphas = self.alphas or (float(n + 2), float(n + 3))
        pairs = self.lpq_pairs or ((float(n + 2), float(n + 2)), (float(2 * n), 4.0))
        # drop duplicate pairs while keeping order
        pairs = tuple(dict.fromkeys(tuple(map(float, p)) for p in pairs))
        return alphas, pairs


def crossing_evidence(t: np.ndarray, series: np.ndarray, ceilings) -> dict:
    """First crossing time of each ceiling and whether growth was monotone."""
    crossed = {}
    for c in ceilings:
        idx = np.flatnonzero(series > c)
        crossed[f"{c:g}"] = float(t[idx[0]]) if len(idx) else None
    times = [v for v in crossed.values() if v is not None]
    return {
        "final": float(series[-1]),
        "max": float(np.max(series)),
        "crossings": crossed,
        "all_crossed": len(times) == len(ceilings),
        "monotone": bool(np.all(np.diff(series) >= -1e-12 * np.maximum(np.abs(series[1:]), 1.0))),
    }


def _label(evidence: dict, blew_up: bool) -> tuple:
    finite = not evidence["all_crossed"]
    if blew_up and not finite:
        return "diverging", "quantity grows past every ceiling; consistent with the detected singularity"
    if blew_up:
        return "unresolved", "singularity detected but the quantity stayed below the top ceiling on the recorded window"
    if not finite:
        return "diverging", "quantity grows past every ceiling although no singularity was detected"
    return "finite", "no obstruction recorded"


def extension_report(run: FlowRun, config: CriteriaConfig | None = None) -> dict:
    """Machine-readable verdicts for every enabled extension criterion."""
    config = config or CriteriaConfig()
    n = run.space.n
    t = run.t
    try:
        T_est, blew_up = detect_singularity(run)
    except ValueError:
        T_est, blew_up = math.inf, False
    alphas, pairs = config.resolved(n)
    ceilings = tuple(float(c) for c in config.ceilings)
    entries = {}

    def add(name, series, extra):
        ev = crossing_evidence(t, series, ceilings)
        label, note = _label(ev, blew_up)
        entries[name] = {**extra, "evidence": ev, "verdict": label, "note": note}

    if "sup_A" in config.enabled:
        add("sup_A", _require(run, "sup_A"), {"quantity": "sup |A|"})
    if "cooper" in config.enabled:
        add("cooper_sup_Abar", cooper_sup(run), {"quantity": "sup |H||A|"})
    if "lpq" in config.enabled:
        for p, q in pairs:
            if a_key(p) not in run.columns:
                continue
            inner = np.maximum(run[a_key(p)], 0.0) ** (q / p)
            acc = run.accumulate(inner)
            add(
                f"lpq_p{p:g}_q{q:g}",
                acc,
                {"quantity": "int_0^t (int |A|^p)^(q/p) ds", "p": p, "q": q, "critical": bool(abs(n / p + 2 / q - 1) < 1e-12)},
            )
    if "critical_alpha" in config.enabled:
        for alpha in alphas:
            if alpha >= n + 2 and a_key(alpha) in run.columns:
                add(f"intA_alpha{alpha:g}", run.accumulate(a_key(alpha)), {"quantity": "int int |A|^alpha", "alpha": alpha})
    if "subcritical" in config.enabled:
        for a, b in config.log_weights:
            if g_key(a, b) in run.columns:
                add(
                    f"subcritical_a{a:g}_b{b:g}",
                    run.accumulate(g_key(a, b)),
                    {"quantity": "int int |A|^(n+2) / log(a + |A|^b)", "a": float(a), "b": float(b)},
                )
    if "lower_bound" in config.enabled:
        for alpha in alphas:
            if h_key(alpha) in run.columns:
                acc = run.accumulate(h_key(alpha))
                add(
                    f"H_alpha{alpha:g}_with_lower_bound",
                    acc,
                    {"quantity": "int int |H|^alpha", "alpha": alpha, "min_principal_curvature": lower_bound_monitor(run)},
                )
    any_div = any(e["verdict"] == "diverging" for e in entries.values())
    if blew_up and any_div:
        overall = "singularity detected; diverging quantities consistent with it"
    elif blew_up:
        overall = "singularity detected; no tracked quantity crossed every ceiling"
    else:
        overall = "no obstruction recorded"
    return {
        "T_est": T_est,
        "blew_up": bool(blew_up),
        "ceilings": list(ceilings),
        "criteria": entries,
        "halt_reason": run.reason,
        "n": n,
        "snapshots": len(run),
        "t_last": float(t[-1]),
        "verdict": overall,
    }
