"""Surface and container geometry.

Sign conventions, fixed once for the package:

* ``N`` is the vertex normal given by the face winding; suite surfaces are
  wound so that ``H >= 0``.
* The shape operator is ``A X = -D_X N`` and ``H = tr(A) / 2``.
* A container ``W = {F <= 0}`` has outward normal ``nu = grad F / |grad F|``
  and second fundamental form ``II(X, Y) = <-D_X nu, Y>``, so the unit ball
  has ``II = -<X, Y>`` and ``H^dW = -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, GeometryError
from .mesh import Mesh

__all__ = [
    "Container",
    "Ball",
    "BallComplement",
    "HalfSpace",
    "Slab",
    "container_from_dict",
    "SurfaceGeometry",
    "compute_geometry",
    "container_data",
    "free_boundary_deviation",
    "check_free_boundary",
    "angle_weighted_normals",
]


# -- containers ----------------------------------------------------------------

class Container:
    """Region ``W = {F <= 0}`` bounded by a regular level set of ``F``."""

    kind = "container"

    def value(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_boundary(self, n: int = 64) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def distance(self, p) -> np.ndarray:
        """First-order distance estimate ``|F| / |grad F|`` to the boundary."""
        p = np.atleast_2d(p)
        return np.abs(self.value(p)) / np.linalg.norm(self.gradient(p), axis=1)

    def outward_normal(self, p) -> np.ndarray:
        g = self.gradient(np.atleast_2d(p))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def boundary_mean_curvature(self, p) -> np.ndarray:
        p = np.atleast_2d(p)
        g = self.gradient(p)
        gn = np.linalg.norm(g, axis=1)
        nu = g / gn[:, None]
        Hs = self.hessian(p)
        tr = np.trace(Hs, axis1=1, axis2=2)
        nn = np.einsum("ni,nij,nj->n", nu, Hs, nu)
        return -(tr - nn) / (2.0 * gn)

    def is_mean_convex(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.boundary_mean_curvature(self.sample_boundary()) <= tol))

    def __eq__(self, other):
        return isinstance(other, Container) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class Ball(Container):
    kind = "ball"

    def __init__(self, radius: float = 1.0, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, float)

    def value(self, p):
        d = np.atleast_2d(p) - self.center
        return np.einsum("ij,ij->i", d, d) - self.radius**2

    def gradient(self, p):
        return 2.0 * (np.atleast_2d(p) - self.center)

    def hessian(self, p):
        return np.broadcast_to(2.0 * np.eye(3), (len(np.atleast_2d(p)), 3, 3))

    def sample_boundary(self, n=64):
        rng = np.random.default_rng(0)
        d = rng.normal(size=(n, 3))
        return self.center + self.radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    def to_dict(self):
        return {"type": "ball", "radius": self.radius, "center": self.center.tolist()}


class BallComplement(Ball):
    """Outside of a ball; its boundary is not mean convex."""

    kind = "ball_complement"

    def value(self, p):
        return -super().value(p)

    def gradient(self, p):
        return -super().gradient(p)

    def hessian(self, p):
        return -super().hessian(p)

    def to_dict(self):
        d = super().to_dict()
        d["type"] = "ball_complement"
        return d


class HalfSpace(Container):
    """``{x : <x - point, normal> <= 0}``; ``normal`` is the outward normal."""

    kind = "halfspace"

    def __init__(self, point=(0.0, 0.0, 0.0), normal=(0.0, 0.0, -1.0)):
        self.point = np.asarray(point, float)
        n = np.asarray(normal, float)
        self.normal = n / np.linalg.norm(n)

    def value(self, p):
        return (np.atleast_2d(p) - self.point) @ self.normal

    def gradient(self, p):
        return np.broadcast_to(self.normal, (len(np.atleast_2d(p)), 3))

    def hessian(self, p):
        return np.zeros((len(np.atleast_2d(p)), 3, 3))

    def sample_boundary(self, n=64):
        rng = np.random.default_rng(0)
        q = rng.normal(size=(n, 3))
        q -= np.outer(q @ self.normal, self.normal)
        return self.point + q

    def to_dict(self):
        return {"type": "halfspace", "point": self.point.tolist(), "normal": self.normal.tolist()}


class Slab(Container):
    """``lower <= z <= upper``, written as ``(z - c)^2 - h^2 <= 0``."""

    kind = "slab"

    def __init__(self, lower: float = 0.0, upper: float = 1.0):
        if not upper > lower:
            raise ConfigError("slab needs upper > lower")
        self.lower = float(lower)
        self.upper = float(upper)

    @property
    def _mid(self):
        return 0.5 * (self.lower + self.upper)

    def value(self, p):
        z = np.atleast_2d(p)[:, 2]
        return (z - self._mid) ** 2 - (0.5 * (self.upper - self.lower)) ** 2

    def gradient(self, p):
        p = np.atleast_2d(p)
        g = np.zeros_like(p, dtype=float)
        g[:, 2] = 2.0 * (p[:, 2] - self._mid)
        return g

    def hessian(self, p):
        h = np.zeros((len(np.atleast_2d(p)), 3, 3))
        h[:, 2, 2] = 2.0
        return h

    def sample_boundary(self, n=64):
        rng = np.random.default_rng(0)
        q = rng.normal(size=(n, 3))
        q[:, 2] = np.where(np.arange(n) % 2, self.lower, self.upper)
        return q

    def to_dict(self):
        return {"type": "slab", "lower": self.lower, "upper": self.upper}


def container_from_dict(d: dict) -> Container:
    kind = d.get("type")
    try:
        if kind == "ball":
            return Ball(d.get("radius", 1.0), d.get("center", (0, 0, 0)))
        if kind == "ball_complement":
            return BallComplement(d.get("radius", 1.0), d.get("center", (0, 0, 0)))
        if kind == "halfspace":
            return HalfSpace(d.get("point", (0, 0, 0)), d.get("normal", (0, 0, -1)))
        if kind == "slab":
            return Slab(d["lower"], d["upper"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad container description {d!r}: {exc}") from None
    raise ConfigError(f"unknown container type {kind!r}")


def container_data(c: Container, p, N, tol: float = 1e-6) -> tuple[float, float]:
    """``(II^dW(N, N), H^dW)`` at a boundary point ``p`` for a unit tangent ``N``."""
    p = np.asarray(p, float).reshape(1, 3)
    N = np.asarray(N, float)
    g = c.gradient(p)[0]
    gn = np.linalg.norm(g)
    if gn < 1e-12:
        raise GeometryError(f"container gradient vanishes at {p[0].tolist()}")
    if c.distance(p)[0] > tol * max(1.0, np.linalg.norm(p)):
        raise GeometryError(f"point {p[0].tolist()} is not on the container boundary")
    nu = g / gn
    if abs(N @ nu) > max(tol, 1e-3):
        raise GeometryError("N is not tangent to the container boundary")
    Hs = c.hessian(p)[0]
    ii = -(N @ Hs @ N) / gn
    return float(ii), float(c.boundary_mean_curvature(p)[0])


# -- surface geometry ----------------------------------------------------------

@dataclass
class SurfaceGeometry:
    """Per-vertex differential geometry of an immersed mesh.

    ``shape`` holds the 2x2 shape operator in the orthonormal tangent frame
    ``frames[v] = (t1, t2)``; ``shape3`` is the same operator as a 3x3 tensor
    acting on ambient vectors (zero along ``N``).  ``conormals`` is zero at
    interior vertices.
    """

    normals: np.ndarray
    frames: np.ndarray
    shape: np.ndarray
    H: np.ndarray
    A_norm_sq: np.ndarray
    conormals: np.ndarray
    boundary_mask: np.ndarray
    fallback_vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def shape3(self) -> np.ndarray:
        return np.einsum("vai,vab,vbj->vij", self.frames, self.shape, self.frames)

    def rotate(self, X: np.ndarray) -> np.ndarray:
        """Pointwise 90 degree rotation ``N x X`` of per-vertex tangent vectors."""
        return np.cross(self.normals, X)

    def interior_mean_curvature(self) -> np.ndarray:
        return self.H[~self.boundary_mask]


def angle_weighted_normals(m: Mesh) -> np.ndarray:
    v, t = m.vertices, m.triangles
    n = np.zeros_like(v)
    for k in range(3):
        a, b, c = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        e1 = v[b] - v[a]
        e2 = v[c] - v[a]
        cosang = np.einsum("ij,ij->i", e1, e2) / (np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(n, a, ang[:, None] * m.face_normals)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _tangent_frames(N: np.ndarray) -> np.ndarray:
    ref = np.where(np.abs(N[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = ref - np.einsum("ij,ij->i", ref, N)[:, None] * N
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(N, t1)
    return np.stack([t1, t2], axis=1)


def _monomials(u, v, degree):
    cols = []
    for total in range(1, degree + 1):
        for i in range(total, -1, -1):
            cols.append(u**i * v ** (total - i))
    return np.stack(cols, axis=1)


def _fit_shape(u, v, w, degree):
    """Shape operator at the origin of the height field ``w(u, v)``.

    Returns ``None`` if the least-squares system is rank deficient.
    """
    scale = np.sqrt(np.mean(u * u + v * v))
    us, vs = u / scale, v / scale
    M = _monomials(us, vs, degree)
    if len(w) < M.shape[1]:
        return None
    coef, _, rank, sv = np.linalg.lstsq(M, w, rcond=None)
    if rank < M.shape[1] or sv[-1] < 1e-8 * sv[0]:
        return None
    d, e = coef[0] / scale, coef[1] / scale
    a, b, c = coef[2] / scale**2, coef[3] / scale**2, coef[4] / scale**2
    I = np.array([[1 + d * d, d * e], [d * e, 1 + e * e]])
    II = np.array([[2 * a, b], [b, 2 * c]]) / np.sqrt(1 + d * d + e * e)
    lam, Q = np.linalg.eigh(I)
    Ih = Q @ np.diag(lam**-0.5) @ Q.T
    A = Ih @ II @ Ih
    return 0.5 * (A + A.T)


def _fit_shape_quadric(u, v, w):
    """Shape operator at the origin of the implicit quadric through the origin

        w = (A u^2 + 2B uv + C v^2 + D w^2 + 2E uw + 2F vw) / 2 + d u + e v

    fitted in least squares.  Any quadric surface (plane, sphere, cylinder)
    is reproduced exactly whatever the tangent-frame error.  The w-dependent
    columns vanish on flat patches; the minimum-norm solution handles that.
    """
    scale = np.sqrt(np.mean(u * u + v * v))
    us, vs, ws = u / scale, v / scale, w / scale
    M = np.stack([us * us / 2, us * vs, vs * vs / 2, ws * ws / 2, us * ws, vs * ws, us, vs], axis=1)
    base = M[:, [0, 1, 2, 6, 7]]
    if len(w) < 5 or np.linalg.matrix_rank(base, tol=1e-8 * np.linalg.norm(base, 2)) < 5:
        return None
    coef = np.linalg.lstsq(M, ws, rcond=1e-10)[0]
    A, B, C, D, E, F, d, e = coef
    fuu = A + 2 * E * d + D * d * d
    fuv = B + E * e + F * d + D * d * e
    fvv = C + 2 * F * e + D * e * e
    I = np.array([[1 + d * d, d * e], [d * e, 1 + e * e]])
    II = np.array([[fuu, fuv], [fuv, fvv]]) / (scale * np.sqrt(1 + d * d + e * e))
    lam, Q = np.linalg.eigh(I)
    Ih = Q @ np.diag(lam**-0.5) @ Q.T
    S = Ih @ II @ Ih
    return 0.5 * (S + S.T)


def _cotan_mean_curvature(m: Mesh, N: np.ndarray) -> np.ndarray:
    """Mean curvature from the cotangent Laplacian of the position (fallback)."""
    v, t = m.vertices, m.triangles
    lap = np.zeros_like(v)
    mass = np.zeros(len(v))
    for k in range(3):
        i, j, o = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cot = np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)
        d = (v[j] - v[i]) * (0.5 * cot)[:, None]
        np.add.at(lap, i, d)
        np.add.at(lap, j, -d)
    np.add.at(mass, t.ravel(), np.repeat(m.face_areas / 3.0, 3))
    # Lap x = 2 H N for the outward-curving convention used here
    return 0.5 * np.einsum("ij,ij->i", lap / mass[:, None], N)


def compute_geometry(
    m: Mesh,
    rings: int = 2,
    method: str = "quadric",
    degree: int = 4,
    boundary_rings: int = 2,
    boundary_degree: int = 2,
    use_mesh_normals: bool = True,
) -> SurfaceGeometry:
    """Normals, shape operator, mean curvature and conormals of a mesh.

    Parameters
    ----------
    rings : int
        Neighbourhood (in edge hops) of the local fit at interior vertices.
    method : {"quadric", "jet"}
        ``quadric`` fits an implicit general quadric through the
        neighbourhood, which reproduces spheres and cylinders exactly;
        ``jet`` fits a polynomial height field over the tangent plane.
    degree : int
        Degree of the ``jet`` fit at interior vertices; it drops to lower
        degrees where the neighbourhood is too small.
    boundary_rings, boundary_degree : int
        Same for boundary vertices, whose one-sided stencils make high-degree
        jets ill-conditioned.
    use_mesh_normals : bool
        Use exact normals stored on the mesh when available.

    Vertices where no fit is possible fall back to the cotangent mean
    curvature with an umbilic shape operator; they are listed in
    ``fallback_vertices``.
    """
    V = m.n_vertices
    if use_mesh_normals and m.normals is not None:
        N = np.array(m.normals)
    else:
        N = angle_weighted_normals(m)
    frames = _tangent_frames(N)
    nbrs = m.rings(rings)
    bnbrs = m.rings(boundary_rings) if boundary_rings != rings else nbrs
    bmask = m.boundary_vertex_mask
    shape = np.zeros((V, 2, 2))
    fallback = []
    for p in range(V):
        deg_p = boundary_degree if bmask[p] else degree
        d = m.vertices[(bnbrs if bmask[p] else nbrs)[p]] - m.vertices[p]
        u = d @ frames[p, 0]
        v = d @ frames[p, 1]
        w = d @ N[p]
        A = None
        if method == "quadric":
            A = _fit_shape_quadric(u, v, w)
        else:
            for deg in range(deg_p, 1, -1):
                A = _fit_shape(u, v, w, deg)
                if A is not None:
                    break
        if A is None:
            fallback.append(p)
        else:
            shape[p] = A
    fallback = np.asarray(fallback, dtype=np.int64)
    if len(fallback):
        Hc = _cotan_mean_curvature(m, N)
        shape[fallback] = Hc[fallback, None, None] * np.eye(2)
    H = 0.5 * np.trace(shape, axis1=1, axis2=2)
    A2 = np.einsum("vij,vij->v", shape, shape)

    conormals = np.zeros((V, 3))
    for loop in m.boundary_loops:
        nxt = np.roll(loop, -1)
        prv = np.roll(loop, 1)
        tang = m.vertices[nxt] - m.vertices[prv]
        # interior lies to the left of the loop direction seen from N
        eta = np.cross(tang, N[loop])
        eta -= np.einsum("ij,ij->i", eta, N[loop])[:, None] * N[loop]
        conormals[loop] = eta / np.linalg.norm(eta, axis=1, keepdims=True)
    return SurfaceGeometry(
        normals=N,
        frames=frames,
        shape=shape,
        H=H,
        A_norm_sq=A2,
        conormals=conormals,
        boundary_mask=np.array(m.boundary_vertex_mask),
        fallback_vertices=fallback,
    )


def free_boundary_deviation(m: Mesh, g: SurfaceGeometry, c: Container, dist_tol: float = 1e-6) -> np.ndarray:
    """Angle (radians) between conormal and container normal at each boundary vertex."""
    bv = np.flatnonzero(m.boundary_vertex_mask)
    p = m.vertices[bv]
    scale = max(1.0, float(np.abs(m.vertices).max()))
    dist = c.distance(p)
    if np.any(dist > dist_tol * scale):
        k = int(np.argmax(dist))
        raise GeometryError(f"boundary vertex {int(bv[k])} is {dist[k]:.3e} off the container boundary")
    nu = c.outward_normal(p)
    eta = g.conormals[bv]
    return 2.0 * np.arctan2(np.linalg.norm(eta - nu, axis=1), np.linalg.norm(eta + nu, axis=1))


def check_free_boundary(m: Mesh, g: SurfaceGeometry, c: Container, dist_tol: float = 1e-6) -> float:
    """Max angle between conormal ``eta`` and ``nu`` over the boundary (0 when free)."""
    return float(free_boundary_deviation(m, g, c, dist_tol).max())
