"""Coordinate test functions built from tangent vector fields.

For a tangent field ``xi`` and the projected ambient frame
``E_i = e_i - <e_i, N> N`` the test functions are

    w_i = <E_i, xi>,   wbar_i = <E_i, N x xi>,   g_i = <e_i, N>.

Since ``xi`` is tangent, ``w_i`` is simply the i-th ambient component of
``xi``.  The residual checks below compare discrete quantities built from
these functions with the identities they satisfy for smooth harmonic
fields; all are normalized by natural norms of ``xi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import linalg as spla

from .errors import GeometryError
from .geometry import Container, SurfaceGeometry
from .hodge import HarmonicBasis, assemble_complex, face_field, hodge_laplacian, circulation_fit, sample_field
from .jacobi import QuadraticForm, assemble, boundary_weights, mass_matrix, stiffness_matrix
from .mesh import Mesh

__all__ = [
    "TestFunctionSet",
    "BoundaryIdentity",
    "ChainCheck",
    "OrthogonalitySolution",
    "build_test_set",
    "harmonicity_residual",
    "mean_zero_residual",
    "boundary_identity_residual",
    "conormal_derivative",
    "jacobi_formula_residual",
    "inequality_chain",
    "solve_orthogonality_system",
    "rayleigh",
    "write_test_set",
    "HARMONIC_TOL",
]

# Hodge Rayleigh quotient times area below which a 1-form counts as harmonic.
HARMONIC_TOL = 1e-8


@dataclass(frozen=True)
class TestFunctionSet:
    """Per-vertex test functions of one tangent field.

    ``w``, ``wbar`` and ``g`` have shape (V, 3), column i holding
    ``w_i``, ``wbar_i`` and ``g_i``; ``E[v, i]`` is the projected frame
    vector ``E_i`` at vertex v.
    """

    __test__ = False  # not a pytest class

    mesh: Mesh
    geometry: SurfaceGeometry
    xi: np.ndarray
    star_xi: np.ndarray
    w: np.ndarray
    wbar: np.ndarray
    g: np.ndarray
    form: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = field(repr=False, default=None)


def build_test_set(xi, m: Mesh, g: SurfaceGeometry, recovery: str = "patch") -> TestFunctionSet:
    """Test functions of a field given as a 1-form (E,) or vertex vectors (V, 3).

    A 1-form is sampled with :func:`sample_field`; boundary values use patch
    recovery by default because the boundary checks differentiate them.
    """
    xi = np.asarray(xi, float)
    N = g.normals
    form = None
    if xi.ndim == 1:
        form = xi.copy()
        X = sample_field(xi, m, N, recovery)
    else:
        X = xi - np.einsum("ij,ij->i", xi, N)[:, None] * N
    SX = g.rotate(X)
    # E[v, i] = e_i - g_i N
    E = np.eye(3)[None, :, :] - N[:, :, None] * N[:, None, :]
    w = np.einsum("vij,vj->vi", E, X)
    wbar = np.einsum("vij,vj->vi", E, SX)
    return TestFunctionSet(m, g, X, SX, w, wbar, N.copy(), form, E)


def harmonicity_residual(form: np.ndarray, m: Mesh) -> float:
    """``area * (L w, w) / (w, w)`` for the Hodge Laplacian with the tangential-field condition."""
    curl, d0, M0, M1, _ = hodge_laplacian(m, "tangential_field")
    form = np.asarray(form, float)
    nrm = form @ (M1 @ form)
    if nrm <= 0:
        return 0.0
    G = M1 @ d0
    s = spla.spsolve(M0.tocsc(), G.T @ form)
    q = form @ (curl @ form) + (G.T @ form) @ s
    return float(m.area * q / nrm)


def mean_zero_residual(t: TestFunctionSet, check: bool = True) -> np.ndarray:
    """``|int_M w_i| / (sqrt(area) * ||xi||_L2)`` for i = 1, 2, 3.

    The integral uses the Whitney field itself, which is linear on each
    face, so one-point centroid quadrature is exact.  It equals
    ``(d0 x_i)^T M1 w`` and vanishes to rounding for co-closed forms with
    the tangential-field condition.  With ``check`` the form must be
    harmonic (``HARMONIC_TOL``), else ``GeometryError`` is raised.
    """
    if t.form is None:
        raise ValueError("mean_zero_residual needs the originating 1-form")
    m = t.mesh
    cx = assemble_complex(m)
    nrm = float(np.sqrt(t.form @ (cx.M1 @ t.form)))
    if nrm == 0.0:
        return np.zeros(3)
    if check:
        h = harmonicity_residual(t.form, m)
        if h > HARMONIC_TOL:
            raise GeometryError(f"field is not harmonic: Hodge Rayleigh residual {h:.3e} > {HARMONIC_TOL:g}")
    integral = (face_field(t.form, m) * m.face_areas[:, None]).sum(axis=0)
    return np.abs(integral) / (np.sqrt(m.area) * nrm)


def conormal_derivative(m: Mesh, g: SurfaceGeometry, values: np.ndarray, rings: int = 2) -> np.ndarray:
    """Derivative along the outward conormal at boundary vertices.

    Least-squares quadratic in tangent-plane coordinates ``(s, t)`` through
    the vertex's ``rings``-neighbourhood, which lies on the interior side
    only, so the difference is one-sided.  Returns shape (nb, ...) in the
    order of ``np.flatnonzero(m.boundary_vertex_mask)``.
    """
    values = np.asarray(values, float)
    bv = np.flatnonzero(m.boundary_vertex_mask)
    nbrs = m.rings(rings)
    out = np.zeros((len(bv),) + values.shape[1:])
    for j, v in enumerate(bv):
        eta = g.conormals[v]
        tau = np.cross(g.normals[v], eta)
        d = m.vertices[nbrs[v]] - m.vertices[v]
        s, tt = d @ tau, d @ eta
        h = np.sqrt(np.mean(s * s + tt * tt))
        s, tt = s / h, tt / h
        P = np.c_[s, tt, s * s, s * tt, tt * tt]
        coef, *_ = np.linalg.lstsq(P, values[nbrs[v]] - values[v], rcond=None)
        out[j] = coef[1] / h
    return out


@dataclass(frozen=True)
class BoundaryIdentity:
    """Both sides of the boundary identity for ``w`` and ``wbar``.

    ``mismatch`` is ``|lhs - rhs| / max(|rhs|, ||xi||^2_{L2(dM)})``.
    """

    lhs_w: float
    lhs_wbar: float
    rhs: float
    boundary_norm_sq: float
    mismatch_w: float
    mismatch_wbar: float

    def as_tuple(self):
        return self.mismatch_w, self.mismatch_wbar


def boundary_identity_residual(t: TestFunctionSet, c: Container, q: Optional[QuadraticForm] = None,
                               rings: int = 3) -> BoundaryIdentity:
    """Compare ``sum_i int_dM (w_i eta(w_i) + II(N,N) w_i^2)`` with ``2 int_dM H^dW |xi|^2``.

    Boundary integrals use the lumped boundary measure.  ``q`` supplies
    ``II(N,N)`` and ``H^dW`` if already assembled.
    """
    m, g = t.mesh, t.geometry
    if q is None:
        q = assemble(m, g, c)
    bv = np.flatnonzero(m.boundary_vertex_mask)
    ds = boundary_weights(m)[bv]
    ii = q.ii_nn[bv]
    hb = q.h_boundary[bv]
    norm_sq = np.einsum("ij,ij->i", t.xi[bv], t.xi[bv])
    rhs = float(2.0 * np.sum(ds * hb * norm_sq))
    bn = float(np.sum(ds * norm_sq))

    if t.form is not None:
        # tangential derivative from a fit to the edge circulations, then
        # eta(w_i) = (grad_eta xi)_i + <A eta, xi> g_i, likewise for N x xi
        eta = g.conormals[bv]
        X, dX = circulation_fit(m, t.form, bv, g.normals, eta, rings)
        N = g.normals[bv]
        Aeta = np.einsum("vij,vj->vi", g.shape3[bv], eta)
        SX = np.cross(N, X)
        dW = dX + np.einsum("vi,vi->v", Aeta, X)[:, None] * N
        dS = np.cross(N, dX) + np.einsum("vi,vi->v", Aeta, SX)[:, None] * N
        Wb, Sb = X, SX
    else:
        dW = conormal_derivative(m, g, t.w, rings)
        dS = conormal_derivative(m, g, t.wbar, rings)
        Wb, Sb = t.w[bv], t.wbar[bv]

    def lhs(Wb, dW):
        return float(np.sum(ds * (np.einsum("ij,ij->i", Wb, dW) + ii * np.einsum("ij,ij->i", Wb, Wb))))

    lw, lb = lhs(Wb, dW), lhs(Sb, dS)
    scale = max(abs(rhs), bn)
    if scale == 0.0:
        return BoundaryIdentity(lw, lb, rhs, bn, 0.0, 0.0)
    return BoundaryIdentity(lw, lb, rhs, bn, abs(lw - rhs) / scale, abs(lb - rhs) / scale)


def _face_gradients(m: Mesh, f: np.ndarray) -> np.ndarray:
    """Per-face gradient of P1 functions: (F, 3) for f (V,), (F, 3, k) for f (V, k)."""
    cx = assemble_complex(m)
    vals = np.asarray(f, float)[m.triangles]  # (F, 3, ...)
    return np.einsum("fk...,fkj->fj...", vals, cx.grads)


def covariant_contraction(t: TestFunctionSet) -> np.ndarray:
    """Per-vertex ``<A, grad xi>`` from the piecewise-linear vertex field.

    On each face the ambient derivative of the interpolated field is
    projected on the face plane on both sides and contracted with the mean
    of the three vertex shape operators; face values are averaged to
    vertices with area weights.
    """
    m, g = t.mesh, t.geometry
    D = _face_gradients(m, t.xi)  # D[f, j, i] = d_j xi_i
    n = m.face_normals
    P = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
    Dt = np.einsum("fab,fbc,fcd->fad", P, D, P)
    A3 = g.shape3[m.triangles].mean(axis=1)
    c = np.einsum("fij,fij->f", A3, Dt)
    acc = np.zeros(m.n_vertices)
    wsum = np.zeros(m.n_vertices)
    for k in range(3):
        np.add.at(acc, m.triangles[:, k], c * m.face_areas)
        np.add.at(wsum, m.triangles[:, k], m.face_areas)
    return acc / wsum


def jacobi_formula_residual(t: TestFunctionSet, q: Optional[QuadraticForm] = None, n_probes: int = 12,
                            seed: int = 0, use_star: bool = False) -> float:
    """Weak-form residual of the Laplacian formula for ``w_i`` (harmonic ``xi``).

    For interior probes ``v`` (vanishing on the boundary) compares
    ``int <grad w_i, grad v>`` with
    ``int [(|A|^2 - 4H^2) w_i + 2H <A E_i, xi> - 2 g_i <A, grad xi>] v``.
    Probes are random combinations of the lowest Dirichlet Laplace
    eigenfunctions; the result is ``max |residual(v)| / (|v|_H1 |w|_H1)``,
    an estimate of the relative ``H^-1`` norm of the defect.
    """
    m, g = t.mesh, t.geometry
    K = stiffness_matrix(m) if q is None else q.K
    B = mass_matrix(m) if q is None else q.B
    X = t.star_xi if use_star else t.xi
    W = t.wbar if use_star else t.w
    sub = TestFunctionSet(m, g, X, g.rotate(X), W, W, t.g, None, t.E)
    H = g.H
    AX = np.einsum("vij,vj->vi", g.shape3, X)  # <A E_i, xi> = (A xi)_i
    c = covariant_contraction(sub)
    F = (g.A_norm_sq - 4 * H * H)[:, None] * W + 2 * H[:, None] * AX - 2 * t.g * c[:, None]
    R = K @ W - B @ F

    interior = np.flatnonzero(~m.boundary_vertex_mask)
    Ki = K[interior][:, interior].tocsc()
    Bi = B[interior][:, interior].tocsc()
    k = min(len(interior) - 2, max(n_probes, 6))
    rng = np.random.default_rng(seed)
    # explicit start vector: ARPACK's own is stateful across calls
    _, phi = spla.eigsh(Ki, k=k, M=Bi, sigma=-1e-8, which="LM", v0=rng.standard_normal(len(interior)))
    coeffs = rng.standard_normal((k, n_probes))
    V = np.zeros((m.n_vertices, n_probes))
    V[interior] = phi @ coeffs
    wnorm = np.sqrt(np.sum(W * (K @ W)) + np.sum(W * (B @ W)) / m.area)
    vnorm = np.sqrt(np.einsum("ij,ij->j", V, K @ V))
    per_probe = np.linalg.norm(V.T @ R, axis=1) / vnorm
    if wnorm == 0.0:
        return 0.0
    return float(per_probe.max() / wnorm)


@dataclass(frozen=True)
class ChainCheck:
    """``sum_i Q(w_i) + Q(wbar_i)`` against ``-4H^2 int|xi|^2 + 4 int_dM H^dW |xi|^2``."""

    lhs: float
    rhs: float
    interior_term: float
    boundary_term: float
    epsilon: float
    relative_epsilon: float


def inequality_chain(t: TestFunctionSet, q: QuadraticForm, H: Optional[float] = None) -> ChainCheck:
    """Summed second variation of all six test functions versus its curvature bound.

    ``epsilon = lhs - rhs`` and ``relative_epsilon`` divides it by the
    larger of the two right-hand terms.
    """
    m = t.mesh
    if H is None:
        H = float(np.mean(t.geometry.interior_mean_curvature()))
    lhs = sum(q(t.w[:, i]) + q(t.wbar[:, i]) for i in range(3))
    l2 = float(np.sum(t.xi * (q.B @ t.xi)))
    bv = np.flatnonzero(m.boundary_vertex_mask)
    nb = np.einsum("ij,ij->i", t.xi[bv], t.xi[bv])
    interior = -4.0 * H * H * l2
    boundary = 4.0 * float(np.sum(q.boundary_length[bv] * q.h_boundary[bv] * nb))
    rhs = interior + boundary
    eps = lhs - rhs
    dom = max(abs(interior), abs(boundary))
    return ChainCheck(lhs, rhs, interior, boundary, eps, eps / dom if dom > 0 else float("inf"))


@dataclass(frozen=True)
class OrthogonalitySolution:
    """Outcome of the homogeneous orthogonality system.

    ``coefficients`` is a unit vector in harmonic-basis coordinates when an
    exact nontrivial solution exists, else None; ``direction`` is always the
    least-singular right vector and ``residual`` is ``|A c|`` divided by
    ``||xi_c||_L2 * sqrt(area)``, which bounds every equation for
    L2-normalized eigenfunctions.
    """

    coefficients: Optional[np.ndarray]
    direction: np.ndarray
    residual: float
    n_equations: int
    n_unknowns: int

    @property
    def exact(self) -> bool:
        return self.coefficients is not None


def orthogonality_matrix(tests: Sequence[TestFunctionSet], phi: np.ndarray, alpha: int,
                         include_mean_zero_for_wbar: bool, B) -> np.ndarray:
    """Rows ``int w_i phi_k``, ``int wbar_i phi_k`` (k < alpha) and optionally ``int wbar_i``."""
    phi = np.asarray(phi, float).reshape(len(tests[0].w), -1) if len(tests) else np.zeros((0, 0))
    rows = []
    for k in range(alpha - 1):
        Bp = B @ phi[:, k]
        for i in range(3):
            rows.append([t.w[:, i] @ Bp for t in tests])
        for i in range(3):
            rows.append([t.wbar[:, i] @ Bp for t in tests])
    if include_mean_zero_for_wbar:
        a = np.asarray(B.sum(axis=1)).ravel()
        for i in range(3):
            rows.append([t.wbar[:, i] @ a for t in tests])
    return np.asarray(rows, float).reshape(len(rows), len(tests))


def solve_orthogonality_system(basis: HarmonicBasis, phi: np.ndarray, alpha: int,
                               include_mean_zero_for_wbar: bool, m: Mesh, g: SurfaceGeometry,
                               exact_tol: float = 1e-10) -> OrthogonalitySolution:
    """Find harmonic ``xi`` whose test functions satisfy the orthogonality system.

    There are ``6 (alpha - 1)`` equations against the first ``alpha - 1``
    Jacobi eigenfunctions ``phi`` plus three mean-zero equations for
    ``wbar`` when the flag is set.  The unknowns are the coefficients of
    ``xi`` in ``basis``.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    phi = np.asarray(phi, float)
    if phi.ndim == 1:
        phi = phi[:, None]
    if alpha - 1 > phi.shape[1]:
        raise ValueError(f"need {alpha - 1} eigenfunctions, got {phi.shape[1]}")
    n = basis.dim
    tests = [build_test_set(basis[j], m, g) for j in range(n)]
    A = orthogonality_matrix(tests, phi, alpha, include_mean_zero_for_wbar, mass_matrix(m))
    n_eq = A.shape[0]
    if n == 0:
        return OrthogonalitySolution(None, np.zeros(0), float("inf"), n_eq, 0)
    if n_eq == 0:
        d = np.zeros(n)
        d[0] = 1.0
        return OrthogonalitySolution(d, d, 0.0, 0, n)
    _, _, Vt = np.linalg.svd(A)
    d = Vt[-1]
    d = d * np.sign(d[np.argmax(np.abs(d))])
    # each equation is bounded by ||test function|| * sqrt(area) for unit phi
    B = mass_matrix(m)
    X = sum(dj * t.xi for dj, t in zip(d, tests))
    scale = np.sqrt(np.sum(X * (B @ X)) * m.area)
    res = float(np.linalg.norm(A @ d) / scale) if scale > 0 else float("inf")
    return OrthogonalitySolution(d if res <= exact_tol else None, d, res, n_eq, n)


def rayleigh(q: QuadraticForm, u: np.ndarray) -> float:
    """``u^T S u / u^T B u``."""
    u = np.asarray(u, float)
    den = q.mass(u)
    if den <= 0.0:
        raise ValueError("Rayleigh quotient of a zero function")
    return q(u) / den


def write_test_set(t: TestFunctionSet, dest) -> None:
    """Per-vertex CSV of positions, both fields and all nine test functions."""
    cols = ["vertex", "x", "y", "z", "xi_x", "xi_y", "xi_z", "star_xi_x", "star_xi_y", "star_xi_z",
            "w1", "w2", "w3", "wbar1", "wbar2", "wbar3", "g1", "g2", "g3"]
    data = np.c_[t.mesh.vertices, t.xi, t.star_xi, t.w, t.wbar, t.g]
    lines = [",".join(cols)]
    lines += [f"{v}," + ",".join(repr(x) for x in row) for v, row in enumerate(data.tolist())]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)

