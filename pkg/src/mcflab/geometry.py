"""Per-vertex extrinsic geometry of a hypersurface mesh.

Mean curvature comes from the cotangent Laplace-Beltrami operator applied to
the position (Delta F = -H nu), the traceless part of the second fundamental
form from an osculating-quadric fit over the 2-ring in geodesic normal
coordinates.  Vertex areas are mixed Voronoi areas.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import sparse

from .mesh import HypersurfaceMesh, MeshError
from .space_forms import AmbientSpaceForm


class DegenerateStencilError(MeshError):
    def __init__(self, vertex: int, size: int):
        super().__init__(f"vertex {vertex}: 2-ring has {size} neighbours, quadric fit needs 5")
        self.vertex = vertex


@dataclass
class CurvatureField:
    """Curvature quantities sampled at the vertices of one mesh.

    ``h`` is stored in the orthonormal tangent frame ``(e1, e2)`` so the
    induced metric in that frame is the identity and ``trace(h) == H``.
    """

    normal: np.ndarray  # (V, d)
    H: np.ndarray  # (V,)
    h: np.ndarray  # (V, 2, 2)
    frame: np.ndarray  # (V, 2, d)
    area: np.ndarray  # (V,) mixed Voronoi areas
    H_fit: np.ndarray  # (V,) trace of the raw quadric fit

    @property
    def A2(self) -> np.ndarray:
        return np.einsum("vij,vij->v", self.h, self.h)

    @property
    def A(self) -> np.ndarray:
        return np.sqrt(self.A2)

    @property
    def Abar(self) -> np.ndarray:
        """|H| |A|, the codimension-one norm of H^alpha h_ij alpha."""
        return np.abs(self.H) * self.A

    @property
    def min_eigenvalue(self) -> np.ndarray:
        a, b, c = self.h[:, 0, 0], self.h[:, 0, 1], self.h[:, 1, 1]
        return 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)

    @property
    def consistency(self) -> float:
        """Max relative gap between Laplacian H and the quadric-fit trace."""
        scale = max(np.max(np.abs(self.H)), 1e-300)
        return float(np.max(np.abs(self.H - self.H_fit)) / scale)

    def __len__(self):
        return len(self.H)


# ------------------------------------------------------------------ operators
def _face_geometry(mesh: HypersurfaceMesh, space: AmbientSpaceForm):
    """Cotangents at each face corner and face areas under the ambient metric."""
    key = ("face_geometry", space)
    if key not in mesh.cache:
        mesh.cache[key] = _face_geometry_impl(mesh, space)
    return mesh.cache[key]


def _face_geometry_impl(mesh, space):
    v = mesh.vertices
    f = mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cots = np.empty((len(f), 3))
    sq = np.empty((len(f), 3))  # squared length of edge opposite corner k
    corners = ((p0, p1, p2), (p1, p2, p0), (p2, p0, p1))
    dbl_area = None
    for k, (a, b, c) in enumerate(corners):
        u, w = b - a, c - a
        uu, ww, uw = space.inner(u, u), space.inner(w, w), space.inner(u, w)
        cross = np.sqrt(np.maximum(uu * ww - uw * uw, 0.0))
        if dbl_area is None:
            dbl_area = cross
        cots[:, k] = uw / np.maximum(cross, 1e-300)
        d = c - b
        sq[:, k] = space.inner(d, d)
    return cots, sq, 0.5 * dbl_area


def _cotan_pattern(mesh: HypersurfaceMesh):
    """CSR layout of the cotan matrices, shared by all meshes with one topology.

    Returns the per-corner edge endpoints, the CSR slot of every (i, j) and
    (j, i) contribution in the weight matrix and in the stiffness matrix, and
    the two index structures.
    """
    topo = mesh.topology
    cached = getattr(topo, "_cotan_pattern", None)
    if cached is not None:
        return cached
    f = mesh.faces.astype(np.int64)
    n = mesh.n_vertices
    rows = np.concatenate([np.concatenate([f[:, (k + 1) % 3], f[:, (k + 2) % 3]]) for k in range(3)])
    cols = np.concatenate([np.concatenate([f[:, (k + 2) % 3], f[:, (k + 1) % 3]]) for k in range(3)])
    keys = rows * n + cols
    w_keys, w_slot = np.unique(keys, return_inverse=True)
    diag = np.arange(n, dtype=np.int64) * (n + 1)
    l_keys, l_slot = np.unique(np.concatenate([keys, diag]), return_inverse=True)

    def layout(k):
        r = k // n
        return np.searchsorted(r, np.arange(n + 1)), (k % n).astype(np.int32)

    cached = (rows, w_slot, len(w_keys), layout(w_keys), l_slot[: len(keys)], l_slot[len(keys):], len(l_keys), layout(l_keys))
    topo._cotan_pattern = cached
    return cached


def _corner_weights(mesh, space):
    cots, _, _ = _face_geometry(mesh, space)
    half = 0.5 * cots
    return np.concatenate([np.concatenate([half[:, k], half[:, k]]) for k in range(3)])


def cotan_weights(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> sparse.csr_matrix:
    """Symmetric matrix of (cot alpha + cot beta) / 2 edge weights."""
    key = ("cotan", space)
    if key in mesh.cache:
        return mesh.cache[key]
    _, w_slot, nnz, (indptr, indices), *_ = _cotan_pattern(mesh)
    n = mesh.n_vertices
    data = np.bincount(w_slot, weights=_corner_weights(mesh, space), minlength=nnz)
    W = sparse.csr_matrix((data, indices, indptr), shape=(n, n))
    mesh.cache[key] = W
    return W


def stiffness_matrix(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> sparse.csr_matrix:
    """Positive semi-definite cotangent stiffness L with (L F)_i = sum_j w_ij (F_i - F_j)."""
    key = ("stiffness", space)
    if key in mesh.cache:
        return mesh.cache[key]
    rows, _, _, _, off_slot, diag_slot, nnz, (indptr, indices) = _cotan_pattern(mesh)
    n = mesh.n_vertices
    w = _corner_weights(mesh, space)
    data = np.bincount(off_slot, weights=-w, minlength=nnz)
    data += np.bincount(diag_slot, weights=np.bincount(rows, weights=w, minlength=n), minlength=nnz)
    L = sparse.csr_matrix((data, indices, indptr), shape=(n, n))
    mesh.cache[key] = L
    return L


def mixed_areas(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> np.ndarray:
    """Mixed Voronoi vertex areas; they partition the total mesh area."""
    cots, sq, area = _face_geometry(mesh, space)
    f = mesh.faces
    out = np.zeros(mesh.n_vertices)
    obtuse = cots < 0  # corner angle > 90 degrees
    any_obtuse = obtuse.any(axis=1)
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        # Voronoi part: edges adjacent to corner k are opposite k1 and k2
        vor = (sq[:, k1] * cots[:, k1] + sq[:, k2] * cots[:, k2]) / 8.0
        val = np.where(any_obtuse, np.where(obtuse[:, k], area / 2, area / 4), vor)
        out += scatter_add(f[:, k], val, mesh.n_vertices)
    return out


def vertex_normals(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> np.ndarray:
    """Area-weighted face normals, projected to the ambient tangent space."""
    v = mesh.vertices
    f = mesh.faces
    if not space.curved:
        nrm = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        acc = sum(scatter_add(f[:, k], nrm, len(v)) for k in range(3))
        return acc / np.linalg.norm(acc, axis=1)[:, None]
    acc = np.zeros_like(v)
    for k in range(3):
        i, j, l = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        nrm = space.normal_from_edges(v[i], v[j] - v[i], v[l] - v[i])
        acc += scatter_add(i, nrm, len(v))
    acc = space.tangent_project(v, acc)
    return acc / space.norm(acc)[:, None]


def scatter_add(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """Unbuffered sum of ``values`` rows into ``n`` bins (fixed summation order)."""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=n)
    flat = values.reshape(len(values), -1)
    out = np.empty((n, flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.bincount(index, weights=flat[:, c], minlength=n)
    return out.reshape((n,) + values.shape[1:])


def laplace_position(mesh: HypersurfaceMesh, space: AmbientSpaceForm, area=None) -> np.ndarray:
    """Discrete Laplace-Beltrami of the position, using log-map edge vectors."""
    if area is None:
        area = mixed_areas(mesh, space)
    if not space.curved:
        return -(stiffness_matrix(mesh, space) @ mesh.vertices) / area[:, None]
    W = cotan_weights(mesh, space).tocoo()
    v = mesh.vertices
    d = space.log_map(v[W.row], v[W.col])
    acc = scatter_add(W.row, W.data[:, None] * d, mesh.n_vertices)
    return acc / area[:, None]


def geodesic_edge_lengths(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> np.ndarray:
    E = mesh.edges
    v = mesh.vertices
    return space.norm(space.log_map(v[E[:, 0]], v[E[:, 1]]))


def tangential_relaxation(mesh: HypersurfaceMesh, space: AmbientSpaceForm, normal: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """Tangential spring displacement pulling geodesic edge lengths toward ``rest``.

    The rest lengths are rescaled by one global factor so that a homothetic
    copy of the reference mesh is an equilibrium.  ``rest`` is indexed like
    ``mesh.edges``.
    """
    E = mesh.edges
    v = mesh.vertices
    e = space.log_map(v[E[:, 0]], v[E[:, 1]])
    length = space.norm(e)
    if rest is None:
        return np.zeros_like(v)
    sigma = np.sqrt(np.sum(length**2) / np.sum(rest**2))
    pull = ((length - sigma * rest) / np.maximum(length, 1e-300))[:, None] * e
    n = mesh.n_vertices
    acc = scatter_add(E[:, 0], pull, n) - scatter_add(E[:, 1], pull, n)
    acc = acc / mesh.topology.valence[:, None]
    acc = space.tangent_project(v, acc)
    return acc - space.inner(acc, normal)[:, None] * normal


# ---------------------------------------------------------------- quadric fit
def tangent_frames(mesh: HypersurfaceMesh, space: AmbientSpaceForm, normal: np.ndarray) -> np.ndarray:
    """Orthonormal (e1, e2) per vertex; e1 follows the edge to the lowest-index neighbour."""
    topo = mesh.topology
    adj = topo.adjacency
    first = adj.indices[adj.indptr[:-1]]  # csr indices are sorted
    v = mesh.vertices
    e = space.log_map(v, v[first])
    e = e - space.inner(e, normal)[:, None] * normal
    e1 = e / space.norm(e)[:, None]
    e2 = space.normal_from_edges(v, normal, e1)
    e2 = space.tangent_project(v, e2)
    e2 = e2 / space.norm(e2)[:, None]
    # orient so that (e1, e2, normal) is positive
    test = space.inner(space.normal_from_edges(v, e1, e2), normal)
    e2 = np.where((test < 0)[:, None], -e2, e2)
    return np.stack([e1, e2], axis=1)


def _fit_stencil(mesh: HypersurfaceMesh):
    topo = mesh.topology
    cached = getattr(topo, "_fit_stencil", None)
    if cached is None:
        r2 = topo.two_ring()
        counts = np.diff(r2.indptr)
        small = np.flatnonzero(counts < 5)
        if len(small):
            raise DegenerateStencilError(int(small[0]), int(counts[small[0]]))
        rows = np.repeat(np.arange(mesh.n_vertices), counts)
        cols = r2.indices.astype(np.int64)
        cached = (rows, cols, counts, r2.indptr.astype(np.int64))
        topo._fit_stencil = cached
    return cached


@njit(cache=True)
def _quadric_kernel(indptr, cols, basis, v, p):
    """Per-vertex normal equations for z = a u^2/2 + b uw + c w^2/2 + d u + e w.

    Offsets come from ``p`` (one row per stencil entry) or, when ``p`` is
    empty, from Euclidean position differences.  Coordinates are rescaled by the RMS stencil radius for conditioning;
    returns the scaled coefficients and the scale.
    """
    nv = len(indptr) - 1
    coef = np.empty((nv, 5))
    scale = np.empty(nv)
    X = np.empty(5)
    uwz = np.empty((len(cols), 3))
    given = len(p) > 0
    dim = v.shape[1]
    for i in range(nv):
        lo, hi = indptr[i], indptr[i + 1]
        for r in range(lo, hi):
            for k in range(3):
                acc = 0.0
                for d in range(dim):
                    off = p[r, d] if given else v[cols[r], d] - v[i, d]
                    acc += basis[i, k, d] * off
                uwz[r, k] = acc
        ss = 0.0
        for r in range(lo, hi):
            ss += uwz[r, 0] ** 2 + uwz[r, 1] ** 2
        sc = np.sqrt(ss / (hi - lo))
        scale[i] = sc
        M = np.zeros((5, 5))
        rhs = np.zeros(5)
        for r in range(lo, hi):
            u, w, z = uwz[r, 0] / sc, uwz[r, 1] / sc, uwz[r, 2] / sc
            X[0] = 0.5 * u * u
            X[1] = u * w
            X[2] = 0.5 * w * w
            X[3] = u
            X[4] = w
            for a in range(5):
                rhs[a] += X[a] * z
                for b in range(a, 5):
                    M[a, b] += X[a] * X[b]
        for a in range(5):
            for b in range(a):
                M[a, b] = M[b, a]
        # Cholesky; a non-positive pivot marks a rank-deficient stencil
        ok = True
        for a in range(5):
            d = M[a, a]
            for k in range(a):
                d -= M[a, k] ** 2
            if d <= 1e-14 * (1.0 + M[a, a]):
                ok = False
                break
            M[a, a] = np.sqrt(d)
            for b in range(a + 1, 5):
                s = M[b, a]
                for k in range(a):
                    s -= M[b, k] * M[a, k]
                M[b, a] = s / M[a, a]
        if not ok:
            coef[i, :] = np.nan
            continue
        y = np.empty(5)
        for a in range(5):
            s = rhs[a]
            for k in range(a):
                s -= M[a, k] * y[k]
            y[a] = s / M[a, a]
        for a in range(4, -1, -1):
            s = y[a]
            for k in range(a + 1, 5):
                s -= M[k, a] * coef[i, k]
            coef[i, a] = s / M[a, a]
    return coef, scale


def fit_second_fundamental_form(mesh, space, normal, frame):
    """Least-squares osculating quadric over each 2-ring.

    Returns h (V, 2, 2) in the orthonormal frame, including the tilt
    correction for the fitted linear terms.
    """
    rows, cols, counts, indptr = _fit_stencil(mesh)
    v = mesh.vertices
    if space.curved:
        p = space.log_map(v[rows], v[cols])
    else:
        p = np.empty((0, v.shape[1]))  # the kernel differences positions itself
    basis = np.concatenate([frame, normal[:, None, :]], axis=1) * space.metric_diag
    coef, sc = _quadric_kernel(indptr, cols, np.ascontiguousarray(basis), np.ascontiguousarray(v), p)
    if not np.all(np.isfinite(coef)):
        bad = int(np.flatnonzero(~np.isfinite(coef).all(axis=1))[0])
        raise DegenerateStencilError(bad, int(counts[bad]))
    hess = np.empty((mesh.n_vertices, 2, 2))
    hess[:, 0, 0] = coef[:, 0] / sc
    hess[:, 0, 1] = hess[:, 1, 0] = coef[:, 1] / sc
    hess[:, 1, 1] = coef[:, 2] / sc
    grad = coef[:, 3:5]
    # graph z(u, w): g = I + grad grad^T, h = -hess / sqrt(1 + |grad|^2)
    gg = np.sum(grad * grad, axis=1)
    q = np.sqrt(1.0 + gg)
    hg = -hess / q[:, None, None]
    # g^{-1/2} in closed form: I - (1 - 1/q) grad grad^T / |grad|^2
    fac = np.divide(1.0 - 1.0 / q, gg, out=np.full_like(gg, 0.5), where=gg > 1e-300)
    ginv_half = np.eye(2)[None] - fac[:, None, None] * grad[:, :, None] * grad[:, None, :]
    return ginv_half @ hg @ ginv_half


# ----------------------------------------------------------------- public API
def compute_curvature(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> CurvatureField:
    """Normals, mean curvature, second fundamental form and vertex areas."""
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.ravel()] = True
    if not used.all():
        raise MeshError(f"isolated vertex {int(np.flatnonzero(~used)[0])}")
    area = mixed_areas(mesh, space)
    normal = vertex_normals(mesh, space)
    lap = laplace_position(mesh, space, area)
    H = -space.inner(lap, normal)
    frame = tangent_frames(mesh, space, normal)
    h_fit = fit_second_fundamental_form(mesh, space, normal, frame)
    H_fit = np.trace(h_fit, axis1=1, axis2=2)
    # keep the fitted traceless part, take the trace from the Laplacian
    h = h_fit + ((H - H_fit) / 2.0)[:, None, None] * np.eye(2)[None]
    field = CurvatureField(normal=normal, H=H, h=h, frame=frame, area=area, H_fit=H_fit)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
        raise MeshError("non-finite curvature")
    return field


def integrate(mesh: HypersurfaceMesh, field: CurvatureField, values) -> float:
    """Sum of values * dmu over the vertices."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError(f"expected {mesh.n_vertices} values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite integrand")
    return float(np.dot(values, field.area))


def angle_defect(mesh: HypersurfaceMesh, space: AmbientSpaceForm) -> np.ndarray:
    """2 pi minus the sum of incident corner angles."""
    cots, _, _ = _face_geometry(mesh, space)
    ang = np.arctan2(1.0, cots)
    out = np.full(mesh.n_vertices, 2 * np.pi)
    for k in range(3):
        out -= scatter_add(mesh.faces[:, k], ang[:, k], mesh.n_vertices)
    return out


def _ambient_tensor(field: CurvatureField) -> np.ndarray:
    """h as a (V, d, d) tensor e_a (x) e_b h_ab in embedding coordinates."""
    return np.einsum("vai,vab,vbj->vij", field.frame, field.h, field.frame)


def gauss_codazzi_residual(mesh, field: CurvatureField, space: AmbientSpaceForm):
    """Area-weighted L2 residuals of the Gauss and Codazzi equations.

    Gauss: intrinsic curvature (angle defect / area) against K + det h.
    Codazzi: antisymmetrised covariant derivative of h per face; the ambient
    curvature term vanishes in a space form.
    """
    if len(field) != mesh.n_vertices:
        raise ValueError("curvature field does not belong to this mesh")
    K_int = angle_defect(mesh, space) / field.area
    det_h = np.linalg.det(field.h)
    g_err = K_int - (space.K + det_h)
    gauss = float(np.sqrt(np.sum(field.area * g_err**2)))

    S = _ambient_tensor(field)
    G = space.metric_diag
    v = mesh.vertices
    f = mesh.faces
    a = v[f[:, 1]] - v[f[:, 0]]
    b = v[f[:, 2]] - v[f[:, 0]]
    # orthonormal face basis (t1, t2) under the ambient metric
    t1 = a / space.norm(a)[:, None]
    b_perp = b - space.inner(b, t1)[:, None] * t1
    t2 = b_perp / space.norm(b_perp)[:, None]
    # gradient of the linear interpolant: dS/dx along t1, t2
    A_ = np.stack([space.inner(a, t1), space.inner(a, t2), space.inner(b, t1), space.inner(b, t2)], 1).reshape(-1, 2, 2)
    dS = np.stack([S[f[:, 1]] - S[f[:, 0]], S[f[:, 2]] - S[f[:, 0]]], axis=1)
    inv = np.linalg.inv(A_)
    D = np.einsum("fkj,fjab->fkab", inv, dS)  # D[:, k] = derivative along t_k
    Gt1, Gt2 = t1 * G, t2 * G

    def contract(T, y, z):
        return np.einsum("fi,fij,fj->f", y, T, z)

    res = np.zeros(len(f))
    for z in (Gt1, Gt2):
        c = contract(D[:, 0], Gt2, z) - contract(D[:, 1], Gt1, z)
        res += c * c
    face_area = mesh.face_areas(space)
    codazzi = float(np.sqrt(np.sum(face_area * res)))
    return gauss, codazzi
