"""Test surfaces with containers and closed-form oracles.

Every free-boundary generator returns ``(mesh, container, oracle)``; the
meshes carry exact vertex normals, oriented so that the mean curvature is
nonnegative.  Hodge-only fixtures (annulus, punctured torus, genus 2) return
a bare mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

from .errors import ConfigError
from .geometry import Ball, Container, HalfSpace, Slab
from .mesh import Mesh, refine

__all__ = [
    "AnalyticOracle",
    "gen_disk_in_ball",
    "gen_hemisphere_on_plane",
    "gen_cylinder_in_slab",
    "gen_punctured_torus",
    "annulus_mesh",
    "square_annulus",
    "genus2_mesh",
    "disk_mesh",
    "SphereProjector",
    "CylinderProjector",
    "DiskProjector",
]


@dataclass(frozen=True)
class AnalyticOracle:
    exact_H: float
    exact_A_norm_sq: float
    exact_jacobi_eigenvalues: Optional[Callable[[int], np.ndarray]] = None
    exact_index: Optional[int] = None

    def eigenvalues(self, n: int) -> np.ndarray:
        if self.exact_jacobi_eigenvalues is None:
            raise ValueError("no exact spectrum for this surface")
        return self.exact_jacobi_eigenvalues(n)


# -- projectors used by refine -------------------------------------------------

class SphereProjector:
    """Radial projection onto a sphere; normals point to the centre."""

    def __init__(self, radius=1.0, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, float)

    def __call__(self, pts, on_boundary=None):
        d = pts - self.center
        return self.center + self.radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    def normals(self, pts):
        d = self.center - pts
        return d / np.linalg.norm(d, axis=1, keepdims=True)


class CylinderProjector:
    """Projection onto the cylinder x^2 + y^2 = r^2; normals point to the axis."""

    def __init__(self, radius=1.0):
        self.radius = float(radius)

    def __call__(self, pts, on_boundary=None):
        out = pts.copy()
        rho = np.linalg.norm(pts[:, :2], axis=1)
        out[:, :2] *= (self.radius / rho)[:, None]
        return out

    def normals(self, pts):
        n = np.zeros_like(pts)
        n[:, :2] = -pts[:, :2]
        return n / np.linalg.norm(n, axis=1, keepdims=True)


class DiskProjector:
    """Snaps boundary midpoints of a planar disk back onto its rim circle."""

    def __init__(self, radius=1.0, height=0.0):
        self.radius = float(radius)
        self.height = float(height)

    def __call__(self, pts, on_boundary):
        out = pts.copy()
        b = np.asarray(on_boundary, bool)
        rho = np.linalg.norm(out[b, :2], axis=1)
        out[b, :2] *= (self.radius / rho)[:, None]
        return out

    def normals(self, pts):
        return np.tile([0.0, 0.0, 1.0], (len(pts), 1))


# -- ring meshes ---------------------------------------------------------------

def _zip_rings(inner, outer, inner_ang, outer_ang):
    """Triangulate the band between two closed rings by angular merge.

    Rings are counterclockwise seen from +z; the returned triangles are wound
    so that their normal is +z.
    """
    tris = []
    ni, no = len(inner), len(outer)
    i = j = 0
    # unwrap so both rings start at angle >= the first inner angle
    ai = np.r_[inner_ang, inner_ang[0] + 2 * np.pi]
    ao = np.r_[outer_ang, outer_ang[0] + 2 * np.pi]
    while i < ni or j < no:
        if j < no and (i >= ni or ao[j + 1] <= ai[i + 1]):
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def disk_mesh(resolution: int, radius: float = 1.0) -> Mesh:
    """Planar disk in z=0 built from ``resolution`` concentric rings of 6j points."""
    n = int(resolution)
    if n < 1:
        raise ConfigError("disk resolution must be >= 1")
    pts = [np.zeros(3)]
    rings = [np.array([0])]
    angles = [np.array([0.0])]
    for j in range(1, n + 1):
        count = 6 * j
        ang = 2 * np.pi * np.arange(count) / count
        r = radius * j / n
        start = len(pts)
        pts.extend(np.c_[r * np.cos(ang), r * np.sin(ang), np.zeros(count)])
        rings.append(np.arange(start, start + count))
        angles.append(ang)
    tris = []
    ring1 = rings[1]
    for a in range(len(ring1)):
        tris.append((0, ring1[a], ring1[(a + 1) % len(ring1)]))
    for j in range(2, n + 1):
        tris.extend(_zip_rings(rings[j - 1], rings[j], angles[j - 1], angles[j]))
    v = np.asarray(pts)
    return Mesh(v, tris, np.tile([0.0, 0.0, 1.0], (len(v), 1)))


def annulus_mesh(inner: float = 0.5, outer: float = 1.0, n_theta: int = 32, n_r: int = 6) -> Mesh:
    """Flat annulus in z=0 with ``n_r`` radial layers and ``n_theta`` points per ring."""
    radii = np.linspace(inner, outer, n_r + 1)
    pts, rings, angles = [], [], []
    for k, r in enumerate(radii):
        # stagger alternate rings to keep triangles well shaped
        ang = 2 * np.pi * (np.arange(n_theta) + 0.5 * (k % 2)) / n_theta
        start = len(pts)
        pts.extend(np.c_[r * np.cos(ang), r * np.sin(ang), np.zeros(n_theta)])
        rings.append(np.arange(start, start + n_theta))
        angles.append(ang)
    tris = []
    for k in range(n_r):
        tris.extend(_zip_rings(rings[k], rings[k + 1], angles[k], angles[k + 1]))
    v = np.asarray(pts)
    return Mesh(v, tris, np.tile([0.0, 0.0, 1.0], (len(v), 1)))


def square_annulus() -> Mesh:
    """Smallest annulus: a square frame with 8 vertices and 8 triangles."""
    outer = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    inner = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    v = np.array([(x, y, 0.0) for x, y in outer + inner])
    tris = []
    for a in range(4):
        b = (a + 1) % 4
        tris.append((a, b, 4 + b))
        tris.append((a, 4 + b, 4 + a))
    return Mesh(v, tris)


# -- free boundary suite -------------------------------------------------------

def _disk_robin_spectrum(n: int) -> np.ndarray:
    """Mean-zero spectrum of -Lap u = lam u, du/dr = u on the unit disk.

    Angular modes m >= 1 solve k J_m'(k) = J_m(k) (m = 1 also has the exact
    zero mode r cos(theta)); the radial family carries a Lagrange constant and
    solves -k J_1(k) = J_0(k) - 2 J_1(k)/k.
    """
    def roots(f, count, kmax):
        ks = np.linspace(1e-6, kmax, int(400 * kmax))
        vals = f(ks)
        out = []
        for a, b, fa, fb in zip(ks[:-1], ks[1:], vals[:-1], vals[1:]):
            if fa == 0 or fa * fb < 0:
                out.append(optimize.brentq(f, a, b, xtol=1e-14))
                if len(out) >= count:
                    break
        return out

    kmax = 4.0 * math.sqrt(n) + 10.0
    lams = []
    radial = lambda k: -k * special.j1(k) - special.j0(k) + 2 * special.j1(k) / k
    lams += [k * k for k in roots(radial, n, kmax)]
    for m in range(1, n + 2):
        f = lambda k, m=m: k * special.jvp(m, k) - special.jv(m, k)
        ks = roots(f, n, kmax)
        if m == 1:
            ks = [0.0] + [k for k in ks if k > 1e-3]
        lams += [k * k for k in ks for _ in range(2)]
    return np.sort(np.asarray(lams))[:n]


def gen_disk_in_ball(resolution: int = 16, contact_tilt: float = 0.0):
    """Flat unit disk in the unit ball.

    ``contact_tilt`` lifts the disk to height ``sin(tilt)`` (radius
    ``cos(tilt)``), so the rim meets the sphere at ``tilt`` radians away from
    a right angle; 0 gives the free-boundary equatorial disk.
    """
    m = disk_mesh(resolution, radius=math.cos(contact_tilt))
    if contact_tilt:
        v = m.vertices.copy()
        v[:, 2] = math.sin(contact_tilt)
        m = Mesh(v, m.triangles, m.normals)
    oracle = AnalyticOracle(
        exact_H=0.0,
        exact_A_norm_sq=0.0,
        exact_jacobi_eigenvalues=_disk_robin_spectrum if not contact_tilt else None,
        exact_index=0 if not contact_tilt else None,
    )
    return m, Ball(radius=1.0), oracle


def _octahedron_cap(radius: float) -> Mesh:
    v = radius * np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 0, 1]], float)
    # wound clockwise seen from outside: face normals point to the centre
    tris = [(4, 1, 0), (4, 2, 1), (4, 3, 2), (4, 0, 3)]
    return Mesh(v, tris, SphereProjector(radius).normals(v))


def gen_hemisphere_on_plane(radius: float = 1.0, resolution: int = 4):
    """Upper hemisphere resting on z=0, from a subdivided octahedral cap.

    The equator of the octahedron is a mesh edge loop, and midpoints of
    equator edges project onto the equator, so the boundary lies exactly on
    the plane and the surface meets it at a right angle.
    """
    if radius <= 0:
        raise ConfigError("radius must be positive")
    proj = SphereProjector(radius)
    m = _octahedron_cap(radius)
    for _ in range(int(resolution)):
        m = refine(m, proj)
    R2 = radius * radius

    def spectrum(n):
        vals = []
        l = 1
        while len(vals) < n:
            vals += [(l * (l + 1) - 2) / R2] * (l + 1)
            l += 1
        return np.asarray(vals[:n])

    oracle = AnalyticOracle(
        exact_H=1.0 / radius,
        exact_A_norm_sq=2.0 / R2,
        exact_jacobi_eigenvalues=spectrum,
        exact_index=0,
    )
    return m, HalfSpace(point=(0, 0, 0), normal=(0, 0, -1)), oracle


def cylinder_mesh(r: float, L: float, n_theta: int, n_z: int) -> Mesh:
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    z = np.linspace(0.0, L, n_z + 1)
    T, Z = np.meshgrid(th, z)
    v = np.c_[r * np.cos(T.ravel()), r * np.sin(T.ravel()), Z.ravel()]
    idx = np.arange(len(v)).reshape(n_z + 1, n_theta)
    tris = []
    for b in range(n_z):
        for a in range(n_theta):
            p, q = idx[b, a], idx[b, (a + 1) % n_theta]
            s, t = idx[b + 1, a], idx[b + 1, (a + 1) % n_theta]
            # alternate diagonals; clockwise seen from outside (normal to axis)
            if (a + b) % 2 == 0:
                tris += [(p, s, q), (q, s, t)]
            else:
                tris += [(p, s, t), (p, t, q)]
    return Mesh(v, tris, CylinderProjector(r).normals(v))


def gen_cylinder_in_slab(r: float = 1.0, L: float = 4.0, resolution=48):
    """Cylinder of radius r between the planes z=0 and z=L.

    ``resolution`` is ``n_theta`` or a pair ``(n_theta, n_z)``; a single
    integer uses ``n_z = round(2 n_theta / 3)``, so 48 means 48x32.
    """
    if r <= 0 or L <= 0:
        raise ConfigError("cylinder radius and length must be positive")
    ratio = L / (math.pi * r)
    if abs(ratio - round(ratio)) < 1e-6:
        raise ConfigError(f"L/(pi r) = {ratio:.9f} is a transition length (zero Jacobi eigenvalue)")
    if np.ndim(resolution) == 0:
        n_theta, n_z = int(resolution), max(2, int(round(2 * int(resolution) / 3)))
    else:
        n_theta, n_z = (int(x) for x in resolution)
    m = cylinder_mesh(r, L, n_theta, n_z)

    def spectrum(n):
        vals = []
        mmax = int(math.sqrt(n)) + 3
        nmax = int(L / (math.pi * r) * (mmax + 2)) + n + 3
        for mm in range(mmax + 1):
            for nn in range(nmax + 1):
                if mm == 0 and nn == 0:
                    continue
                lam = (nn * math.pi / L) ** 2 + (mm * mm - 1) / (r * r)
                vals += [lam] * (1 if mm == 0 else 2)
        return np.sort(vals)[:n]

    oracle = AnalyticOracle(
        exact_H=1.0 / (2 * r),
        exact_A_norm_sq=1.0 / (r * r),
        exact_jacobi_eigenvalues=spectrum,
        exact_index=int(math.floor(ratio)),
    )
    return m, Slab(lower=0.0, upper=L), oracle


# -- Hodge-only fixtures -------------------------------------------------------

def gen_punctured_torus(resolution: int = 4, R: float = 2.0, r: float = 1.0) -> Mesh:
    """Torus of revolution with one triangle removed: genus 1, one boundary loop."""
    if resolution < 2:
        raise ConfigError("punctured torus resolution must be >= 2")
    nu, nv = 6 * resolution, 3 * resolution
    u = 2 * np.pi * np.arange(nu) / nu
    w = 2 * np.pi * np.arange(nv) / nv
    U, W = np.meshgrid(u, w, indexing="ij")
    U, W = U.ravel(), W.ravel()
    v = np.c_[(R + r * np.cos(W)) * np.cos(U), (R + r * np.cos(W)) * np.sin(U), r * np.sin(W)]
    idx = np.arange(nu * nv).reshape(nu, nv)
    tris = []
    for a in range(nu):
        for b in range(nv):
            p, q = idx[a, b], idx[(a + 1) % nu, b]
            s, t = idx[a, (b + 1) % nv], idx[(a + 1) % nu, (b + 1) % nv]
            tris += [(p, q, t), (p, t, s)]
    return Mesh(v, tris).remove_faces([0])


def genus2_mesh(resolution: int = 0) -> Mesh:
    """Genus-2 surface with one boundary loop.

    Boundary of a 5x3x1 voxel plate with two square holes (closed genus 2),
    one triangle removed, then ``resolution`` midpoint refinements.
    """
    solid = {(i, j, 0) for i in range(5) for j in range(3)} - {(1, 1, 0), (3, 1, 0)}
    vid: dict = {}
    pts, tris = [], []

    def vertex(p):
        if p not in vid:
            vid[p] = len(pts)
            pts.append(p)
        return vid[p]

    for cell in sorted(solid):
        for axis in range(3):
            for sign in (1, -1):
                nb = list(cell)
                nb[axis] += sign
                if tuple(nb) in solid:
                    continue
                b, c = (axis + 1) % 3, (axis + 2) % 3
                corners = []
                for ob, oc in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = list(cell)
                    p[axis] += 1 if sign > 0 else 0
                    p[b] += ob
                    p[c] += oc
                    corners.append(vertex(tuple(p)))
                if sign < 0:
                    corners = corners[::-1]
                tris += [(corners[0], corners[1], corners[2]), (corners[0], corners[2], corners[3])]
    m = Mesh(np.asarray(pts, float), tris).remove_faces([0])
    for _ in range(int(resolution)):
        m = refine(m)
    return m
