"""Local remeshing: edge collapse, split and flip plus tangential smoothing.

Works on a plain face list rebuilt between passes; intended for occasional
repair of flow meshes, not for high-throughput remeshing.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .mesh import HypersurfaceMesh
from .space_forms import AmbientSpaceForm


@dataclass
class RemeshConfig:
    min_angle_deg: float = 20.0
    max_edge_ratio: float = 4.0
    short: float = 0.5  # collapse below short * target length
    long: float = 4.0 / 3.0  # split above long * target length
    smoothing: float = 0.5
    passes: int = 6


@dataclass
class Quality:
    min_angle_deg: float
    edge_ratio: float
    ok: bool


@dataclass
class RemeshReport:
    ok: bool
    changed: bool
    quality: Quality
    collapses: int = 0
    splits: int = 0
    flips: int = 0


def _angles(v, faces, space):
    out = np.empty((len(faces), 3))
    for k in range(3):
        a = v[faces[:, k]]
        u = v[faces[:, (k + 1) % 3]] - a
        w = v[faces[:, (k + 2) % 3]] - a
        uu, ww, uw = space.inner(u, u), space.inner(w, w), space.inner(u, w)
        out[:, k] = np.arctan2(np.sqrt(np.maximum(uu * ww - uw * uw, 0.0)), uw)
    return out


def mesh_quality(mesh: HypersurfaceMesh, space: AmbientSpaceForm, cfg: RemeshConfig | None = None) -> Quality:
    cfg = cfg or RemeshConfig()
    ang = np.degrees(_angles(mesh.vertices, mesh.faces, space).min())
    lengths = mesh.edge_lengths(space)
    ratio = float(lengths.max() / max(lengths.min(), 1e-300))
    return Quality(float(ang), ratio, bool(ang >= cfg.min_angle_deg and ratio <= cfg.max_edge_ratio))


class _Work:
    """Mutable face soup with vertex -> face incidence."""

    def __init__(self, mesh, space):
        self.space = space
        self.v = [np.array(p) for p in mesh.vertices]
        self.faces = {i: tuple(int(x) for x in f) for i, f in enumerate(mesh.faces)}
        self.next_face = len(self.faces)
        self.vf = defaultdict(set)
        for fid, f in self.faces.items():
            for x in f:
                self.vf[x].add(fid)
        self.alive = [True] * len(self.v)

    def add_face(self, f):
        fid = self.next_face
        self.next_face += 1
        self.faces[fid] = f
        for x in f:
            self.vf[x].add(fid)

    def remove_face(self, fid):
        for x in self.faces.pop(fid):
            self.vf[x].discard(fid)

    def edge_faces(self, a, b):
        return sorted(self.vf[a] & self.vf[b])

    def neighbours(self, a):
        out = set()
        for fid in self.vf[a]:
            out.update(self.faces[fid])
        out.discard(a)
        return out

    def length(self, a, b):
        d = self.v[b] - self.v[a]
        return math.sqrt(max(float(self.space.inner(d, d)), 0.0))

    def edges(self):
        seen = set()
        for f in self.faces.values():
            for k in range(3):
                a, b = f[k], f[(k + 1) % 3]
                e = (min(a, b), max(a, b))
                if e not in seen:
                    seen.add(e)
                    yield e

    def face_normal(self, f, pos=None):
        p = [self.v[x] if pos is None or x not in pos else pos[x] for x in f]
        return self.space.normal_from_edges(p[0], p[1] - p[0], p[2] - p[0])

    def min_angle(self, f, pos=None):
        p = [self.v[x] if pos is None or x not in pos else pos[x] for x in f]
        arr = np.array(p)[None]
        return float(_angles(arr[0], np.array([[0, 1, 2]]), self.space).min())

    # -- operations ------------------------------------------------------
    def collapse(self, a, b) -> bool:
        shared = self.edge_faces(a, b)
        if len(shared) != 2:
            return False
        opposite = {x for fid in shared for x in self.faces[fid]} - {a, b}
        if self.neighbours(a) & self.neighbours(b) != opposite:
            return False  # link condition
        if len(self.neighbours(a)) + len(self.neighbours(b)) - 4 < 3:
            return False
        mid = self.space.project(0.5 * (self.v[a] + self.v[b]))
        pos = {a: mid, b: mid}
        for fid in (self.vf[a] | self.vf[b]) - set(shared):
            f = self.faces[fid]
            g = tuple(a if x == b else x for x in f)
            before = self.face_normal(f)
            after = self.face_normal(g, pos)
            if float(self.space.inner(before, after)) <= 0:
                return False
        for fid in shared:
            self.remove_face(fid)
        for fid in list(self.vf[b]):
            f = self.faces[fid]
            self.remove_face(fid)
            self.add_face(tuple(a if x == b else x for x in f))
        self.v[a] = mid
        self.alive[b] = False
        return True

    def split(self, a, b):
        shared = self.edge_faces(a, b)
        m = len(self.v)
        self.v.append(self.space.project(0.5 * (self.v[a] + self.v[b])))
        self.alive.append(True)
        for fid in shared:
            f = self.faces[fid]
            self.remove_face(fid)
            k = f.index(a)
            if f[(k + 1) % 3] == b:
                c = f[(k + 2) % 3]
                self.add_face((a, m, c))
                self.add_face((m, b, c))
            else:
                c = f[(k + 1) % 3]
                self.add_face((a, c, m))
                self.add_face((m, c, b))
        return m

    def try_flip(self, a, b) -> bool:
        shared = self.edge_faces(a, b)
        if len(shared) != 2:
            return False
        f1, f2 = (self.faces[s] for s in shared)
        # orient so that f1 contains a -> b
        k = f1.index(a)
        if f1[(k + 1) % 3] != b:
            f1, f2 = f2, f1
            shared = shared[::-1]
            k = f1.index(a)
        c = f1[(k + 2) % 3]
        d = next(x for x in f2 if x not in (a, b))
        if c == d or d in self.neighbours(c):
            return False
        if len(self.vf[a]) <= 3 or len(self.vf[b]) <= 3:
            return False
        g1, g2 = (c, a, d), (d, b, c)
        old = min(self.min_angle(f1), self.min_angle(f2))
        new = min(self.min_angle(g1), self.min_angle(g2))
        if new <= old + 1e-12:
            return False
        n_old = self.face_normal(f1) + self.face_normal(f2)
        for g in (g1, g2):
            if float(self.space.inner(self.face_normal(g), n_old)) <= 0:
                return False
        for s in shared:
            self.remove_face(s)
        self.add_face(g1)
        self.add_face(g2)
        return True

    def smooth(self, lam):
        new = {}
        normals = defaultdict(lambda: 0.0)
        for f in self.faces.values():
            nrm = self.face_normal(f)
            for x in f:
                normals[x] = normals[x] + nrm
        for i, ok in enumerate(self.alive):
            if not ok or not self.vf[i]:
                continue
            nb = list(self.neighbours(i))
            c = np.mean([self.v[j] for j in nb], axis=0)
            d = self.space.tangent_project(self.v[i], c - self.v[i])
            nu = self.space.tangent_project(self.v[i], normals[i])
            nu = nu / max(float(self.space.norm(nu)), 1e-300)
            d = d - float(self.space.inner(d, nu)) * nu
            new[i] = self.space.project(self.v[i] + lam * d)
        self.v = [new.get(i, p) for i, p in enumerate(self.v)]

    def to_mesh(self):
        keep = [i for i, ok in enumerate(self.alive) if ok and self.vf[i]]
        remap = {old: new for new, old in enumerate(keep)}
        verts = np.array([self.v[i] for i in keep])
        faces = np.array([[remap[x] for x in self.faces[k]] for k in sorted(self.faces)], dtype=np.int64)
        return HypersurfaceMesh(verts, faces)


def remesh(mesh: HypersurfaceMesh, space: AmbientSpaceForm, cfg: RemeshConfig | None = None):
    """Improve triangle quality without changing topology.

    Returns ``(mesh, report)``; the input object itself is returned when it
    already satisfies the quality bounds.
    """
    cfg = cfg or RemeshConfig()
    q0 = mesh_quality(mesh, space, cfg)
    if q0.ok:
        return mesh, RemeshReport(True, False, q0)
    chi = mesh.euler_characteristic()
    work = _Work(mesh, space)
    target = float(np.median(mesh.edge_lengths(space)))
    floor = math.radians(cfg.min_angle_deg)
    report = RemeshReport(False, True, q0)
    for _ in range(cfg.passes):
        # collapse short edges and edges of needle triangles
        for a, b in sorted(work.edges(), key=lambda e: work.length(*e)):
            if not (work.alive[a] and work.alive[b]) or not work.edge_faces(a, b):
                continue
            if work.length(a, b) < cfg.short * target and work.collapse(a, b):
                report.collapses += 1
        for a, b in list(work.edges()):
            if work.length(a, b) > cfg.long * target:
                work.split(a, b)
                report.splits += 1
        for a, b in list(work.edges()):
            if work.edge_faces(a, b) and work.try_flip(a, b):
                report.flips += 1
        work.smooth(cfg.smoothing)
        out = work.to_mesh()
        q = mesh_quality(out, space, cfg)
        if q.ok:
            break
        work = _Work(out, space)
        # collapse the shortest edge of each remaining needle
        for fid, f in list(work.faces.items()):
            if fid not in work.faces:
                continue
            if work.min_angle(f) < floor:
                es = sorted(((f[k], f[(k + 1) % 3]) for k in range(3)), key=lambda e: work.length(*e))
                a, b = es[0]
                if work.alive[a] and work.alive[b] and work.collapse(a, b):
                    report.collapses += 1
        out = work.to_mesh()
        work = _Work(out, space)
    out = work.to_mesh()
    report.quality = mesh_quality(out, space, cfg)
    report.ok = report.quality.ok and out.euler_characteristic() == chi
    if out.euler_characteristic() != chi:
        return mesh, RemeshReport(False, False, q0)
    return out, report
