"""Closed triangle meshes living in the embedding chart of a space form."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .space_forms import AmbientSpaceForm, Kind


class MeshError(ValueError):
    pass


class Topology:
    """Connectivity derived once per face array and shared between meshes."""

    def __init__(self, faces: np.ndarray, n_vertices: int):
        self.faces = faces
        self.n_vertices = n_vertices
        f = faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = np.sort(e, axis=1)
        self.edges, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        self.edge_face_count = counts
        # face k, local edge j (opposite vertex (j + 2) % 3) -> edge id
        self.face_edges = inverse.reshape(3, -1).T
        ii, jj = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(ii))
        self.adjacency = sparse.csr_matrix(
            (data, (np.concatenate([ii, jj]), np.concatenate([jj, ii]))),
            shape=(n_vertices, n_vertices),
        )
        self._two_ring = None

    @property
    def valence(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def one_ring(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    def two_ring(self) -> sparse.csr_matrix:
        if self._two_ring is None:
            a = self.adjacency
            r2 = (a + a @ a).tocsr()
            r2.setdiag(0)
            r2.eliminate_zeros()
            r2.sort_indices()
            self._two_ring = r2
        return self._two_ring


@dataclass
class HypersurfaceMesh:
    """Vertices in embedding coordinates plus outward-oriented triangles."""

    vertices: np.ndarray
    faces: np.ndarray
    _topology: Topology | None = field(default=None, repr=False, compare=False)
    # derived per-position quantities; positions are treated as immutable
    cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("vertices must be (N, d) and faces (F, 3)")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    @property
    def topology(self) -> Topology:
        if self._topology is None:
            self._topology = Topology(self.faces, len(self.vertices))
        return self._topology

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> np.ndarray:
        return self.topology.edges

    def with_vertices(self, vertices: np.ndarray) -> "HypersurfaceMesh":
        """Same connectivity, new positions (topology cache is shared)."""
        return HypersurfaceMesh(vertices, self.faces, self._topology)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + len(self.faces)

    def flipped(self) -> "HypersurfaceMesh":
        return HypersurfaceMesh(self.vertices.copy(), self.faces[:, ::-1].copy())

    def face_areas(self, space: AmbientSpaceForm) -> np.ndarray:
        v = self.vertices
        a = v[self.faces[:, 1]] - v[self.faces[:, 0]]
        b = v[self.faces[:, 2]] - v[self.faces[:, 0]]
        aa, bb, ab = space.inner(a, a), space.inner(b, b), space.inner(a, b)
        return 0.5 * np.sqrt(np.maximum(aa * bb - ab * ab, 0.0))

    def edge_lengths(self, space: AmbientSpaceForm) -> np.ndarray:
        v = self.vertices
        d = v[self.edges[:, 1]] - v[self.edges[:, 0]]
        return space.norm(d)

    def enclosed_volume(self) -> float:
        """Signed volume enclosed by a mesh in R^3 (divergence theorem)."""
        v = self.vertices
        if v.shape[1] != 3:
            raise MeshError("enclosed volume only defined for meshes in R^3")
        f = self.faces
        return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)

    def validate(self, space: AmbientSpaceForm, area_floor: float = 0.0) -> None:
        if self.vertices.shape[1] != space.embed_dim:
            raise MeshError(
                f"vertices have {self.vertices.shape[1]} coordinates, ambient chart needs {space.embed_dim}"
            )
        topo = self.topology
        if np.any(topo.edge_face_count != 2):
            raise MeshError("mesh is not closed: some edge is not shared by exactly two faces")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.faces.ravel()] = True
        if not used.all():
            raise MeshError(f"isolated vertex {int(np.flatnonzero(~used)[0])}")
        # consistent orientation: each directed edge appears once
        d = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        if len(np.unique(d, axis=0)) != len(d):
            raise MeshError("faces are not consistently oriented")
        areas = self.face_areas(space)
        if np.any(areas <= area_floor):
            raise MeshError(f"degenerate face {int(np.argmin(areas))} (area {areas.min():.3e})")
        res = space.constraint_residual(self.vertices)
        if np.any(res > 1e-10):
            raise MeshError(f"vertex {int(np.argmax(res))} violates the ambient constraint ({res.max():.2e})")


# ---------------------------------------------------------------- generators
def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    m = inv.reshape(3, -1).T + len(v)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
    nf = np.concatenate(
        [
            np.stack([a, ab, ca], 1),
            np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1),
            np.stack([ab, bc, ca], 1),
        ]
    )
    return np.vstack([v, mid]), nf


def unit_icosphere(level: int):
    """Unit-sphere vertex directions and outward faces of a subdivided icosahedron."""
    if level < 0:
        raise ValueError("subdivision level must be >= 0")
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
    return v, f


def icosphere(level: int = 4, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> HypersurfaceMesh:
    """Round sphere in R^3."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    u, f = unit_icosphere(level)
    return HypersurfaceMesh(radius * u + np.asarray(center, dtype=float), f)


def geodesic_sphere(space: AmbientSpaceForm, rho: float, level: int = 4) -> HypersurfaceMesh:
    """Geodesic sphere of radius ``rho`` about the base point of the model.

    The base point is the origin for Euclidean space and the last coordinate
    axis (scaled to the curvature radius) for the curved models.
    """
    if not rho > 0:
        raise ValueError("geodesic radius must be positive")
    u, f = unit_icosphere(level)
    if space.kind is Kind.EUCLIDEAN:
        return HypersurfaceMesh(rho * u, f)
    R = space.scale
    if space.kind is Kind.SPHERE:
        if rho >= math.pi * R:
            raise ValueError("geodesic radius exceeds the diameter of the sphere")
        s, c = R * math.sin(rho / R), R * math.cos(rho / R)
    else:
        s, c = R * math.sinh(rho / R), R * math.cosh(rho / R)
    v = np.hstack([s * u, np.full((len(u), 1), c)])
    return HypersurfaceMesh(space.project(v), f)


def dumbbell(level: int = 4, neck: float = 0.35, lobe: float = 1.0, length: float = 2.2) -> HypersurfaceMesh:
    """Surface of revolution with two lobes joined by a thin neck (axis x)."""
    u, f = unit_icosphere(level)
    x = u[:, 0] * length / 2
    s = x / (length / 2)
    # radial profile: lobes of radius ``lobe`` pinched to ``neck`` at x = 0
    prof = lobe * np.sqrt(np.clip(1 - s**2, 0, None)) * (neck / lobe + (1 - neck / lobe) * np.sin(np.pi * s) ** 2)
    prof = np.where(np.abs(s) < 1, prof, 0.0)
    rho = np.linalg.norm(u[:, 1:], axis=1)
    scale = np.divide(prof, rho, out=np.zeros_like(rho), where=rho > 1e-12)
    v = np.column_stack([x, u[:, 1] * scale, u[:, 2] * scale])
    return HypersurfaceMesh(v, f)


# ----------------------------------------------------------------- file I/O
def read_mesh(path) -> HypersurfaceMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".off":
        return _read_off(path)
    if suffix == ".obj":
        return _read_obj(path)
    raise MeshError(f"unsupported mesh format: {path.suffix}")


def _read_off(path: Path) -> HypersurfaceMesh:
    tokens = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    header = tokens[0]
    if header[0].upper() not in ("OFF", "4OFF", "NOFF"):
        raise MeshError("missing OFF header")
    dim = 4 if header[0].upper() == "4OFF" else 3
    rest = header[1:] if len(header) > 1 else None
    body = tokens[1:]
    if not rest:
        rest, body = body[0], body[1:]
    nv, nf = int(rest[0]), int(rest[1])
    v = np.array([[float(x) for x in row[:dim]] for row in body[:nv]])
    faces = []
    for row in body[nv : nv + nf]:
        k = int(row[0])
        if k != 3:
            raise MeshError("only triangle faces are supported")
        faces.append([int(x) for x in row[1:4]])
    return HypersurfaceMesh(v, np.array(faces, dtype=np.int64).reshape(-1, 3))


def _read_obj(path: Path) -> HypersurfaceMesh:
    v, faces = [], []
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            v.append([float(x) for x in parts[1:]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(v) + i for i in idx]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    return HypersurfaceMesh(np.array(v), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(mesh: HypersurfaceMesh, path, curvature=None) -> None:
    """Write OFF (4OFF for 4-coordinate charts); optional sidecar CSV of H, |A|^2."""
    path = Path(path)
    v = mesh.vertices
    head = "OFF" if v.shape[1] == 3 else "4OFF"
    lines = [head, f"{len(v)} {len(mesh.faces)} {len(mesh.edges)}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in v]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n")
    if curvature is not None:
        side = path.with_suffix(".csv")
        rows = ["# per-vertex curvature; H in 1/length, A2 = |A|^2 in 1/length^2", "vertex,H,A2"]
        rows += [f"{i},{h:.17g},{a:.17g}" for i, (h, a) in enumerate(zip(curvature.H, curvature.A2))]
        side.write_text("\n".join(rows) + "\n")
