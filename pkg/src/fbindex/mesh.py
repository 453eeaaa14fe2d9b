"""Oriented triangle meshes with boundary.

A :class:`Mesh` is immutable after construction.  Connectivity is stored as
flat half-edge arrays: half-edge ``3*f + j`` runs from ``triangles[f, j]`` to
``triangles[f, (j+1) % 3]`` and has the face on its left.  Undirected edges
are stored once, oriented from the lower to the higher vertex index; a
discrete 1-form is an array with one coefficient per such edge.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import sparse

from .errors import MeshError

__all__ = [
    "Mesh",
    "Topology",
    "load_mesh",
    "read_mesh",
    "write_off",
    "topology",
    "refine",
]

_AREA_EPS = 1e-300


@dataclass(frozen=True)
class Topology:
    genus: int
    boundary_components: int
    euler_characteristic: int

    @property
    def harmonic_dimension(self) -> int:
        """First Betti number ``2g + k - 1`` of a surface with boundary."""
        return 2 * self.genus + self.boundary_components - 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Mesh:
    """Orientable triangulated 2-manifold with (possibly empty) boundary.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
    triangles : array_like, shape (F, 3)
        Oriented vertex triples.  The winding is taken as given; a mesh whose
        windings disagree across an edge is rejected, never flipped.
    normals : array_like, shape (V, 3), optional
        Unit vertex normals supplied by an exact construction (NOFF / OBJ
        ``vn``).  When absent, geometry estimates them from the faces.
    """

    def __init__(self, vertices, triangles, normals=None):
        v = np.array(vertices, dtype=float)
        t = np.array(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (F, 3), got {t.shape}")
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if t.min() < 0 or t.max() >= len(v):
            bad = int(np.flatnonzero((t < 0).any(1) | (t >= len(v)).any(1))[0])
            raise MeshError(f"face {bad}: vertex index out of range")
        used = np.zeros(len(v), bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any face")
        rep = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 2] == t[:, 0])
        if rep.any():
            raise MeshError(f"face {int(np.flatnonzero(rep)[0])}: repeated vertex")

        self.vertices = _frozen(v)
        self.triangles = _frozen(t)
        if normals is not None:
            n = np.array(normals, dtype=float)
            if n.shape != v.shape:
                raise MeshError("normals must match vertices in shape")
            n = n / np.linalg.norm(n, axis=1, keepdims=True)
            self.normals = _frozen(n)
        else:
            self.normals = None

        self._build_halfedges()
        self._check_vertex_fans()
        self._build_boundary_loops()

        e0 = v[t[:, 1]] - v[t[:, 0]]
        e1 = v[t[:, 2]] - v[t[:, 0]]
        cross = np.cross(e0, e1)
        area2 = np.linalg.norm(cross, axis=1)
        scale = max(np.ptp(v, axis=0).max(), 1.0) ** 2
        degenerate = area2 <= 1e-14 * scale
        if degenerate.any():
            raise MeshError(f"face {int(np.flatnonzero(degenerate)[0])}: degenerate (zero area)")
        self.face_areas = _frozen(0.5 * area2)
        self.face_normals = _frozen(cross / area2[:, None])

    # -- construction helpers -------------------------------------------------

    def _build_halfedges(self):
        t = self.triangles
        F = len(t)
        src = t.ravel()
        dst = np.roll(t, -1, axis=1).ravel()
        lo = np.minimum(src, dst)
        hi = np.maximum(src, dst)
        key = lo * (len(self.vertices) + 1) + hi
        uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
        if counts.max() > 2:
            e = int(np.flatnonzero(counts > 2)[0])
            hes = np.flatnonzero(inv == e)
            a, b = int(lo[hes[0]]), int(hi[hes[0]])
            faces = sorted({int(h) // 3 for h in hes})
            raise MeshError(f"non-manifold edge ({a}, {b}) shared by faces {faces}")
        # A manifold edge seen twice must be traversed in opposite directions.
        order = np.argsort(inv, kind="stable")
        inv_sorted = inv[order]
        pair = np.flatnonzero(inv_sorted[1:] == inv_sorted[:-1])
        h1 = order[pair]
        h2 = order[pair + 1]
        same = src[h1] == src[h2]
        if same.any():
            k = int(np.flatnonzero(same)[0])
            raise MeshError(
                f"non-orientable or inconsistently wound: edge ({int(src[h1[k]])}, "
                f"{int(dst[h1[k]])}) traversed in the same direction by faces "
                f"{int(h1[k]) // 3} and {int(h2[k]) // 3}"
            )
        twin = np.full(3 * F, -1, dtype=np.int64)
        twin[h1] = h2
        twin[h2] = h1

        self.halfedge_src = _frozen(src)
        self.halfedge_dst = _frozen(dst)
        self.halfedge_twin = _frozen(twin)
        self.halfedge_edge = _frozen(inv.astype(np.int64))
        edges = np.empty((len(uniq), 2), dtype=np.int64)
        edges[inv, 0] = lo
        edges[inv, 1] = hi
        self.edges = _frozen(edges)
        self.face_edges = _frozen(inv.reshape(F, 3).astype(np.int64))
        self.face_edge_signs = _frozen(np.where(src < dst, 1, -1).reshape(F, 3))
        bmask = np.zeros(len(uniq), bool)
        bmask[inv[twin < 0]] = True
        self.boundary_edge_mask = _frozen(bmask)

    def _check_vertex_fans(self):
        # A manifold vertex has one fan of faces; rotate around each vertex
        # through twins and compare against its face count.
        V = len(self.vertices)
        src, twin = self.halfedge_src, self.halfedge_twin
        nfaces = np.bincount(src, minlength=V)
        seen = np.zeros(V, dtype=np.int64)
        start = np.full(V, -1, dtype=np.int64)
        bnd_out = np.flatnonzero(twin < 0)
        start[src[bnd_out]] = bnd_out
        first = np.full(V, -1, dtype=np.int64)
        first[src[::-1]] = np.arange(len(src))[::-1]
        start = np.where(start >= 0, start, first)
        for v in range(V):
            h = start[v]
            h0 = h
            count = 0
            while True:
                count += 1
                # previous half-edge in the same face ends at v; its twin leaves v
                prev = 3 * (h // 3) + (h % 3 + 2) % 3
                h = twin[prev]
                if h < 0 or h == h0 or count > nfaces[v]:
                    break
            seen[v] = count
        bad = np.flatnonzero(seen != nfaces)
        if len(bad):
            raise MeshError(f"non-manifold vertex {int(bad[0])} (faces form more than one fan)")

    def _build_boundary_loops(self):
        twin = self.halfedge_twin
        bhe = np.flatnonzero(twin < 0)
        V = len(self.vertices)
        out = {}
        for h in bhe:
            s = int(self.halfedge_src[h])
            if s in out:
                raise MeshError(f"boundary is not a union of simple loops at vertex {s}")
            out[s] = int(h)
        loops = []
        visited = set()
        for h0 in bhe:
            h0 = int(h0)
            if h0 in visited:
                continue
            loop = []
            h = h0
            while h not in visited:
                visited.add(h)
                loop.append(int(self.halfedge_src[h]))
                h = out[int(self.halfedge_dst[h])]
            loops.append(np.array(loop, dtype=np.int64))
        self.boundary_loops = tuple(_frozen(l) for l in loops)
        bv = np.zeros(V, bool)
        for l in loops:
            bv[l] = True
        self.boundary_vertex_mask = _frozen(bv)

    # -- convenience ----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def mean_edge_length(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.linalg.norm(d, axis=1).mean())

    def boundary_halfedges(self) -> np.ndarray:
        """Boundary half-edges, ordered loop by loop."""
        out = {int(self.halfedge_src[h]): int(h) for h in np.flatnonzero(self.halfedge_twin < 0)}
        return np.array([out[int(v)] for loop in self.boundary_loops for v in loop], dtype=np.int64)

    def adjacency(self) -> sparse.csr_matrix:
        V = self.n_vertices
        e = self.edges
        data = np.ones(2 * len(e))
        a = sparse.coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(V, V))
        return a.tocsr()

    def rings(self, n: int) -> list[np.ndarray]:
        """For each vertex, the vertices within ``n`` edge hops (excluding itself)."""
        adj = self.adjacency()
        adj.data[:] = 1.0
        reach = sparse.identity(self.n_vertices, format="csr")
        step = reach
        for _ in range(n):
            step = step @ (adj + sparse.identity(self.n_vertices, format="csr"))
            step.data[:] = 1.0
        reach = step.tolil()
        out = []
        for v, row in enumerate(reach.rows):
            out.append(np.array([u for u in row if u != v], dtype=np.int64))
        return out

    def with_normals(self, normals: Optional[np.ndarray]) -> "Mesh":
        return Mesh(self.vertices, self.triangles, normals)

    def remove_faces(self, faces: Iterable[int]) -> "Mesh":
        """Drop faces and any vertices left unused, keeping relative order."""
        keep = np.ones(self.n_faces, bool)
        keep[list(faces)] = False
        t = self.triangles[keep]
        used = np.unique(t)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        normals = None if self.normals is None else self.normals[used]
        return Mesh(self.vertices[used], remap[t], normals)

    def __repr__(self):
        return f"Mesh(V={self.n_vertices}, E={self.n_edges}, F={self.n_faces}, loops={len(self.boundary_loops)})"


def topology(m: Mesh) -> Topology:
    """Genus, boundary count and Euler characteristic, purely combinatorially."""
    chi = m.n_vertices - m.n_edges + m.n_faces
    k = len(m.boundary_loops)
    if k == 0:
        raise MeshError("closed surface: a nonempty boundary is required")
    twice_g = 2 - k - chi
    if twice_g < 0 or twice_g % 2:
        raise MeshError(f"inconsistent topology: chi={chi}, k={k} gives non-integer genus")
    return Topology(genus=twice_g // 2, boundary_components=k, euler_characteristic=chi)


# -- refinement ---------------------------------------------------------------

Projector = Callable[[np.ndarray, np.ndarray], np.ndarray]


def refine(m: Mesh, projector: Optional[Projector] = None) -> Mesh:
    """1-to-4 midpoint subdivision.

    ``projector(points, on_boundary)`` moves the new midpoints; if it also has
    a ``normals(points)`` method, exact normals are attached to the result.
    """
    V = m.n_vertices
    e = m.edges
    mid = 0.5 * (m.vertices[e[:, 0]] + m.vertices[e[:, 1]])
    if projector is not None:
        mid = np.asarray(projector(mid, m.boundary_edge_mask.copy()), dtype=float)
        bad = ~np.all(np.isfinite(mid), axis=1)
        if bad.any():
            raise MeshError(f"projector failed at midpoint of edge {int(np.flatnonzero(bad)[0])}")
    verts = np.vstack([m.vertices, mid])
    fe = m.face_edges + V
    a, b, c = m.triangles.T
    mab, mbc, mca = fe[:, 0], fe[:, 1], fe[:, 2]
    tris = np.stack(
        [
            np.stack([a, mab, mca], 1),
            np.stack([b, mbc, mab], 1),
            np.stack([c, mca, mbc], 1),
            np.stack([mab, mbc, mca], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    normals = None
    if projector is not None and hasattr(projector, "normals"):
        normals = projector.normals(verts)
    elif m.normals is not None:
        nm = m.normals[e[:, 0]] + m.normals[e[:, 1]]
        normals = np.vstack([m.normals, nm / np.linalg.norm(nm, axis=1, keepdims=True)])
    return Mesh(verts, tris, normals)


# -- file formats -------------------------------------------------------------

def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_off(text: str) -> Mesh:
    lines = _data_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshError("OFF: empty file") from None
    tokens = header.split()
    kind = tokens[0].upper()
    if not kind.endswith("OFF"):
        raise MeshError(f"OFF line {lineno}: missing OFF header")
    has_normals = "N" in kind[:-3]
    has_colors = "C" in kind[:-3]
    rest = tokens[1:]
    if not rest:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise MeshError("OFF: missing counts line") from None
        rest = counts.split()
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshError(f"OFF line {lineno}: bad counts line") from None
    verts = np.empty((nv, 3))
    normals = np.empty((nv, 3)) if has_normals else None
    for i in range(nv):
        try:
            lineno, line = next(lines)
            vals = [float(x) for x in line.split()]
            verts[i] = vals[:3]
            if has_normals:
                normals[i] = vals[3:6]
        except StopIteration:
            raise MeshError(f"OFF: expected {nv} vertices, file ended after {i}") from None
        except (ValueError, IndexError):
            raise MeshError(f"OFF line {lineno}: bad vertex record") from None
    del has_colors
    tris = np.empty((nf, 3), dtype=np.int64)
    for f in range(nf):
        try:
            lineno, line = next(lines)
            vals = line.split()
            n = int(vals[0])
        except StopIteration:
            raise MeshError(f"OFF: expected {nf} faces, file ended after {f}") from None
        except (ValueError, IndexError):
            raise MeshError(f"OFF line {lineno}: bad face record") from None
        if n != 3:
            raise MeshError(f"OFF line {lineno}: face {f} has {n} vertices, only triangles are supported")
        try:
            tris[f] = [int(x) for x in vals[1:4]]
        except (ValueError, IndexError):
            raise MeshError(f"OFF line {lineno}: bad face record") from None
    return Mesh(verts, tris, normals)


def _parse_obj(text: str) -> Mesh:
    verts, vnormals, faces, corner_normals = [], [], [], []
    for lineno, line in _data_lines(text):
        tok = line.split()
        try:
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "vn":
                vnormals.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                if len(tok) != 4:
                    raise MeshError(
                        f"OBJ line {lineno}: face has {len(tok) - 1} vertices, only triangles are supported"
                    )
                f, fn = [], []
                for corner in tok[1:]:
                    parts = corner.split("/")
                    vi = int(parts[0])
                    f.append(vi - 1 if vi > 0 else len(verts) + vi)
                    if len(parts) == 3 and parts[2]:
                        ni = int(parts[2])
                        fn.append(ni - 1 if ni > 0 else len(vnormals) + ni)
                faces.append(f)
                corner_normals.append(fn if len(fn) == 3 else None)
        except ValueError:
            raise MeshError(f"OBJ line {lineno}: cannot parse record") from None
    if not faces:
        raise MeshError("OBJ: no faces")
    normals = None
    if vnormals and all(c is not None for c in corner_normals):
        normals = np.full((len(verts), 3), np.nan)
        vn = np.asarray(vnormals)
        for f, fn in zip(faces, corner_normals):
            normals[f] = vn[fn]
        if np.isnan(normals).any():
            normals = None
    return Mesh(np.asarray(verts, float).reshape(-1, 3), np.asarray(faces), normals)


def load_mesh(source, format: str) -> Mesh:
    """Parse an OFF or OBJ byte/text stream (or bytes/str) into a Mesh."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    fmt = format.upper()
    if fmt == "OFF":
        return _parse_off(source)
    if fmt == "OBJ":
        return _parse_obj(source)
    raise MeshError(f"unsupported mesh format {format!r}")


def read_mesh(path) -> Mesh:
    ext = os.path.splitext(str(path))[1].lstrip(".")
    with open(path, "rb") as fh:
        return load_mesh(fh, ext or "OFF")


def write_off(m: Mesh, dest=None) -> str:
    """Canonical OFF text; NOFF when the mesh carries exact normals."""
    buf = io.StringIO()
    buf.write("NOFF\n" if m.normals is not None else "OFF\n")
    buf.write(f"{m.n_vertices} {m.n_faces} {m.n_edges}\n")
    for i, p in enumerate(m.vertices):
        vals = list(p) if m.normals is None else list(p) + list(m.normals[i])
        buf.write(" ".join(repr(float(x)) for x in vals) + "\n")
    for t in m.triangles:
        buf.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    text = buf.getvalue()
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w") as fh:
                fh.write(text)
    return text
