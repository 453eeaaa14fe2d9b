"""Piecewise-linear discretization of the volume-preserving second variation.

In weak form, with the nonnegative Laplacian, the index form is

    Q(u, u) = int_M |grad u|^2 - |A|^2 u^2 dM + int_dM II^dW(N, N) u^2 ds

and its eigenvalue problem carries the Robin condition
``du/deta = -II^dW(N, N) u``.  Admissible variations have mean zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .errors import GeometryError, SolverError
from .geometry import Container, SurfaceGeometry, container_data
from .mesh import Mesh
from .spectral import SpectralResult, solve_lowest

__all__ = [
    "QuadraticForm",
    "MorseIndex",
    "stiffness_matrix",
    "mass_matrix",
    "boundary_weights",
    "assemble",
    "constrained_spectrum",
    "unconstrained_spectrum",
    "default_zero_tol",
    "morse_index",
    "write_coo",
]


def _cotangents(m: Mesh) -> np.ndarray:
    """Cotangent of the angle at corner k of every face, shape (F, 3)."""
    v, t = m.vertices, m.triangles
    cot = np.empty(t.shape)
    for k in range(3):
        o, i, j = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cot[:, k] = np.einsum("ij,ij->i", e1, e2) / (2.0 * m.face_areas)
    return cot


def stiffness_matrix(m: Mesh) -> sparse.csr_matrix:
    """Cotangent stiffness ``K_ij = int <grad phi_i, grad phi_j>``."""
    t = m.triangles
    cot = _cotangents(m)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        w = 0.5 * cot[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    V = m.n_vertices
    K = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(V, V))
    return K.tocsr()


def mass_matrix(m: Mesh) -> sparse.csr_matrix:
    """Consistent P1 mass matrix ``B_ij = int phi_i phi_j``."""
    t = m.triangles
    A = m.face_areas
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(t[:, a])
            cols.append(t[:, b])
            vals.append(A / 6.0 if a == b else A / 12.0)
    V = m.n_vertices
    B = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(V, V))
    return B.tocsr()


def boundary_weights(m: Mesh) -> np.ndarray:
    """Lumped boundary measure: half the length of each adjacent boundary edge."""
    w = np.zeros(m.n_vertices)
    e = m.edges[m.boundary_edge_mask]
    length = np.linalg.norm(m.vertices[e[:, 1]] - m.vertices[e[:, 0]], axis=1)
    np.add.at(w, e[:, 0], 0.5 * length)
    np.add.at(w, e[:, 1], 0.5 * length)
    return w


@dataclass
class QuadraticForm:
    """Matrices of the index form.

    ``S = K - diag(|A|^2 * lumped area) + diag(II_NN * lumped length)``,
    ``B`` is the consistent mass matrix and ``a = B 1`` integrates hat
    functions, so the mean-zero class is ``{u : a^T u = 0}``.
    """

    S: sparse.csr_matrix
    B: sparse.csr_matrix
    a: np.ndarray
    K: sparse.csr_matrix
    potential: np.ndarray
    robin: np.ndarray
    ii_nn: np.ndarray
    h_boundary: np.ndarray
    boundary_length: np.ndarray
    mean_edge_length: float
    area: float

    def __call__(self, u, v=None) -> float:
        v = u if v is None else v
        return float(u @ (self.S @ v))

    def mass(self, u, v=None) -> float:
        v = u if v is None else v
        return float(u @ (self.B @ v))


def assemble(m: Mesh, g: SurfaceGeometry, c: Optional[Container], tol: float = 1e-6) -> QuadraticForm:
    """Assemble the index form of ``m`` inside container ``c``.

    With ``c=None`` the boundary term is dropped (Neumann condition).
    """
    K = stiffness_matrix(m)
    B = mass_matrix(m)
    a = np.asarray(B.sum(axis=1)).ravel()
    potential = g.A_norm_sq * a
    ii = np.zeros(m.n_vertices)
    hb = np.zeros(m.n_vertices)
    bw = boundary_weights(m)
    if c is not None:
        for v in np.flatnonzero(m.boundary_vertex_mask):
            p = m.vertices[v]
            nu = c.outward_normal(p)[0]
            N = g.normals[v] - (g.normals[v] @ nu) * nu
            nrm = np.linalg.norm(N)
            if nrm < 1e-8:
                raise GeometryError(f"surface normal at boundary vertex {v} is parallel to the container normal")
            try:
                ii[v], hb[v] = container_data(c, p, N / nrm, tol=tol)
            except GeometryError as exc:
                raise GeometryError(f"boundary vertex {v}: {exc}") from None
    robin = ii * bw
    S = (K - sparse.diags(potential) + sparse.diags(robin)).tocsr()
    S = 0.5 * (S + S.T)
    return QuadraticForm(
        S=S.tocsr(),
        B=B,
        a=a,
        K=K,
        potential=g.A_norm_sq.copy(),
        robin=robin,
        ii_nn=ii,
        h_boundary=hb,
        boundary_length=bw,
        mean_edge_length=m.mean_edge_length,
        area=m.area,
    )


def constrained_spectrum(q: QuadraticForm, count: int, method: str = "auto", seed: int = 0) -> SpectralResult:
    """Lowest ``count`` eigenpairs of ``S u = lam B u`` on mean-zero functions."""
    return solve_lowest(q.S, q.B, count, a=q.a, method=method, seed=seed)


def unconstrained_spectrum(q: QuadraticForm, count: int, method: str = "auto", seed: int = 0) -> SpectralResult:
    """Debug view: the strong (non volume-preserving) spectrum."""
    return solve_lowest(q.S, q.B, count, a=None, method=method, seed=seed)


def default_zero_tol(q: QuadraticForm) -> float:
    """``h^2`` times the largest curvature scale present (potential, Robin, 1/area).

    This is the size of the O(h^2) eigenvalue error of linear elements; the
    analytic zero modes of the suite (translations) land well inside it.
    """
    scale = max(float(np.max(np.abs(q.potential))), float(np.max(q.ii_nn**2)), 1.0 / q.area)
    return q.mean_edge_length**2 * scale


class MorseIndex(NamedTuple):
    index: int
    numerical_zeros: tuple
    zero_tol: float


def morse_index(s: SpectralResult, zero_tol: float) -> MorseIndex:
    """Count eigenvalues below ``-zero_tol``; report ``|lam| <= zero_tol`` separately."""
    vals = np.asarray(s.eigenvalues)
    if vals[-1] <= zero_tol:
        raise SolverError(
            f"spectrum too short to certify the index: last eigenvalue {vals[-1]:.4g} <= zero_tol {zero_tol:.3g}"
        )
    neg = int(np.count_nonzero(vals < -zero_tol))
    zeros = tuple(float(x) for x in vals[np.abs(vals) <= zero_tol])
    return MorseIndex(neg, zeros, float(zero_tol))


def write_coo(M, dest) -> None:
    """Write a sparse matrix as ``row col value`` lines in row-major order."""
    C = sparse.coo_matrix(M)
    order = np.lexsort((C.col, C.row))
    lines = [f"{C.shape[0]} {C.shape[1]} {C.nnz}"]
    lines += [f"{r} {c} {v!r}" for r, c, v in zip(C.row[order], C.col[order], C.data[order].tolist())]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
