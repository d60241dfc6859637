"""Constant-curvature ambient spaces (Euclidean, spherical, hyperbolic).

Curved ambients are realized as embedded quadrics in one higher dimension:
the round sphere of radius 1/sqrt(K) in R^{n+2}, and the upper sheet of the
hyperboloid <x, x> = -1/|K| in Minkowski space R^{n+1,1} (time coordinate
last).  All inner products go through :meth:`AmbientSpaceForm.inner`, which
applies the diagonal metric of the embedding space.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate as _quad
from scipy.special import gamma


class Kind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    HYPERBOLIC = "hyperbolic"


@lru_cache(maxsize=None)
def unit_ball_volume(n: int) -> float:
    """Volume omega_n of the unit ball in R^n."""
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


@lru_cache(maxsize=None)
def unit_sphere_area(n: int) -> float:
    """Area sigma_n of the unit n-sphere S^n in R^{n+1}."""
    return (n + 1) * unit_ball_volume(n + 1)


@dataclass(frozen=True)
class AmbientSpaceForm:
    """Simply connected space form of dimension ``n + 1``.

    ``K`` is the sectional curvature; it must be 0 for Euclidean space,
    positive for the sphere and negative for hyperbolic space.
    """

    kind: Kind
    K: float = 0.0
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.n + 1 < 3:
            raise ValueError("ambient dimension must be at least 3")
        if self.kind is Kind.EUCLIDEAN and self.K != 0.0:
            raise ValueError("Euclidean space has K = 0")
        if self.kind is Kind.SPHERE and not self.K > 0:
            raise ValueError("sphere requires K > 0")
        if self.kind is Kind.HYPERBOLIC and not self.K < 0:
            raise ValueError("hyperbolic space requires K < 0")

    @classmethod
    def euclidean(cls, n: int = 2) -> "AmbientSpaceForm":
        return cls(Kind.EUCLIDEAN, 0.0, n)

    @classmethod
    def sphere(cls, K: float = 1.0, n: int = 2) -> "AmbientSpaceForm":
        return cls(Kind.SPHERE, float(K), n)

    @classmethod
    def hyperbolic(cls, K: float = -1.0, n: int = 2) -> "AmbientSpaceForm":
        return cls(Kind.HYPERBOLIC, float(K), n)

    @classmethod
    def from_config(cls, ambient: str, curvature: float | None = None, n: int = 2):
        kind = Kind(ambient.lower())
        if kind is Kind.EUCLIDEAN:
            return cls.euclidean(n)
        if curvature is None:
            curvature = 1.0 if kind is Kind.SPHERE else -1.0
        return cls(kind, float(curvature), n)

    # -- chart ------------------------------------------------------------
    @property
    def ambient_dim(self) -> int:
        return self.n + 1

    @property
    def embed_dim(self) -> int:
        return self.n + 1 if self.kind is Kind.EUCLIDEAN else self.n + 2

    @property
    def curved(self) -> bool:
        return self.kind is not Kind.EUCLIDEAN

    @property
    def scale(self) -> float:
        """Curvature radius 1/sqrt(|K|); infinite for Euclidean space."""
        return math.inf if self.K == 0 else 1.0 / math.sqrt(abs(self.K))

    @property
    def metric_diag(self) -> np.ndarray:
        g = np.ones(self.embed_dim)
        if self.kind is Kind.HYPERBOLIC:
            g[-1] = -1.0
        return g

    def inner(self, u, v):
        """Embedding-space inner product along the last axis."""
        if self.kind is not Kind.HYPERBOLIC:
            return np.einsum("...i,...i->...", np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return np.sum(np.asarray(u) * np.asarray(v) * self.metric_diag, axis=-1)

    def norm(self, v):
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def constraint_residual(self, x) -> np.ndarray:
        """Relative violation of the embedding constraint (zero when Euclidean)."""
        x = np.atleast_2d(x)
        if not self.curved:
            return np.zeros(len(x))
        R2 = self.scale**2
        q = self.inner(x, x)
        target = R2 if self.kind is Kind.SPHERE else -R2
        return np.abs(q - target) / R2

    def project(self, x) -> np.ndarray:
        """Closest-point style projection onto the embedded model."""
        x = np.array(x, dtype=float)
        if not self.curved:
            return x
        R = self.scale
        if self.kind is Kind.SPHERE:
            return R * x / np.linalg.norm(x, axis=-1, keepdims=True)
        # hyperboloid: radial rescaling of future timelike points, which
        # matches the sphere case to first order; otherwise solve for time
        q = self.inner(x, x)
        timelike = (q < 0) & (x[..., -1] > 0)
        spatial = x[..., :-1]
        lifted = x.copy()
        lifted[..., -1] = np.sqrt(R * R + np.sum(spatial * spatial, axis=-1))
        scaled = R * x / np.sqrt(np.where(timelike, -q, 1.0))[..., None]
        return np.where(timelike[..., None], scaled, lifted)

    def tangent_project(self, x, v) -> np.ndarray:
        """Remove the component of ``v`` normal to the model at ``x``."""
        v = np.asarray(v, dtype=float)
        if not self.curved:
            return v
        x = np.asarray(x, dtype=float)
        coef = self.inner(x, v) / self.inner(x, x)
        return v - coef[..., None] * x

    def log_map(self, x, y) -> np.ndarray:
        """Riemannian logarithm log_x(y) for points of the model (rows)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not self.curved:
            return y - x
        R = self.scale
        c = self.inner(x, y) / (R * R)
        if self.kind is Kind.SPHERE:
            c = np.clip(c, -1.0, 1.0)
            theta = np.arccos(c)
            s = np.sin(theta)
            w = y - c[..., None] * x
        else:
            c = np.maximum(-c, 1.0)
            theta = np.arccosh(c)
            s = np.sinh(theta)
            w = y - c[..., None] * x
        safe = s > 1e-14
        # |y - c x| = R sin(theta); the geodesic length is R theta
        fac = np.where(safe, theta / np.where(safe, s, 1.0), 1.0)
        return fac[..., None] * w

    def distance(self, x, y) -> np.ndarray:
        """Geodesic distance in the ambient space."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not self.curved:
            return np.linalg.norm(y - x, axis=-1)
        R = self.scale
        c = self.inner(x, y) / (R * R)
        if self.kind is Kind.SPHERE:
            return R * np.arccos(np.clip(c, -1.0, 1.0))
        return R * np.arccosh(np.maximum(-c, 1.0))

    def normal_from_edges(self, x, e1, e2) -> np.ndarray:
        """Vector orthogonal to ``e1``, ``e2`` (and to ``x`` for curved models).

        Its length is the parallelogram area of (e1, e2) times |x| in the
        curved case; the orientation agrees with ``e1 x e2`` in a chart
        centred at ``x``.
        """
        e1 = np.asarray(e1, dtype=float)
        e2 = np.asarray(e2, dtype=float)
        if not self.curved:
            return np.cross(e1, e2)
        x = np.asarray(x, dtype=float)
        x, e1, e2 = np.broadcast_arrays(x, e1, e2)
        d = self.embed_dim
        rows = np.stack([e1, e2, np.zeros_like(e1), x], axis=-2)
        cof = np.empty(e1.shape)
        for i in range(d):
            m = rows.copy()
            m[..., 2, :] = 0.0
            m[..., 2, i] = 1.0
            cof[..., i] = np.linalg.det(m)
        # <w, v>_G = det[e1, e2, v, x]  =>  w = G^{-1} cof
        w = cof * self.metric_diag
        return w / self.scale

    # -- curvature ----------------------------------------------------------
    def riem_tensor(self, a: int, b: int, c: int, d: int) -> float:
        """Component R_{abcd} in an orthonormal frame; index 0 is the normal."""
        for idx in (a, b, c, d):
            if not 0 <= idx <= self.n:
                raise IndexError(f"frame index {idx} outside 0..{self.n}")
        return self.K * (float(a == c) * float(b == d) - float(a == d) * float(b == c))

    def ric_normal(self, n: int | None = None) -> float:
        """Ric(nu, nu) = sum_l R_{0l0l} = n K."""
        n = self.n if n is None else n
        if n != self.ambient_dim - 1:
            raise ValueError("hypersurface dimension must equal ambient_dim - 1")
        return sum(self.riem_tensor(0, l, 0, l) for l in range(1, n + 1))

    def sectional_bound(self) -> tuple[float, bool]:
        """Return (b^2, b_is_imaginary) for the bound K_N <= b^2.

        Euclidean and hyperbolic spaces use a pure-imaginary b, for which the
        support conditions of the Hoffman-Spruck inequality hold trivially.
        """
        return float(self.K), self.kind is not Kind.SPHERE

    def injectivity_radius(self) -> float:
        if self.kind is Kind.SPHERE:
            return math.pi * self.scale
        return math.inf


def riem_tensor(space: AmbientSpaceForm, a: int, b: int, c: int, d: int) -> float:
    return space.riem_tensor(a, b, c, d)


def ric_normal(space: AmbientSpaceForm, n: int) -> float:
    return space.ric_normal(n)


def sectional_bound(space: AmbientSpaceForm) -> tuple[float, bool]:
    return space.sectional_bound()


def model_ball_volume(K_lower: float, R: float, n: int) -> float:
    """Volume of the geodesic ball of radius R in the n-dim space form of curvature K."""
    if not R > 0:
        raise ValueError("radius must be positive")
    if K_lower == 0:
        return unit_ball_volume(n) * R**n
    if K_lower > 0:
        k = math.sqrt(K_lower)
        R = min(R, math.pi / k)
        profile = lambda s: (math.sin(k * s) / k) ** (n - 1)
    else:
        k = math.sqrt(-K_lower)
        profile = lambda s: (math.sinh(k * s) / k) ** (n - 1)
    val, _ = _quad.quad(profile, 0.0, R, epsabs=0.0, epsrel=1e-12, limit=200)
    return unit_sphere_area(n - 1) * val
