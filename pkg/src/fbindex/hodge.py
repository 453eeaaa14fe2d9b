"""Whitney 1-forms on a triangle mesh: de Rham complex, harmonic fields, star.

A 1-form is stored as one coefficient per edge, its circulation along the
edge oriented from the lower to the higher vertex index.  The interpolant on
a face with barycentric coordinates ``lam_i`` is

    W = sum_k s_k w_{e_k} (lam_a grad lam_b - lam_b grad lam_a)

where ``(a, b)`` walks the face boundary and ``s_k`` matches local and
global edge orientation.  The Hodge Laplacian is the mixed (weak) one:
``sigma = delta w`` is solved for alongside ``w``, so no dual mesh is
needed and the kernel has exactly the topological dimension.

Boundary conditions are named after the dual vector field:

* ``tangential_field``: the field is tangent to the boundary.  This is the
  natural condition of the mixed problem (no constraint on any degree of
  freedom); the normal trace vanishes weakly.
* ``normal_field``: the pullback of the form to the boundary vanishes, so
  boundary edge and vertex degrees of freedom are removed.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConfigError, SolverError
from .jacobi import mass_matrix
from .mesh import Mesh, topology
from .spectral import DENSE_LIMIT, SpectralResult

__all__ = [
    "DeRhamComplex",
    "HarmonicBasis",
    "assemble_complex",
    "harmonic_basis",
    "one_form_spectrum",
    "hodge_laplacian",
    "star",
    "face_field",
    "circulation_fit",
    "sample_field",
    "de_rham",
    "codifferential",
    "write_one_form",
    "RANK_GAP",
    "numerical_rank_split",
    "BOUNDARY_CONDITIONS",
]

BOUNDARY_CONDITIONS = ("tangential_field", "normal_field")

# A numerical kernel must sit at least this factor below the first nonzero eigenvalue.
RANK_GAP = 1e6


@dataclass(frozen=True)
class DeRhamComplex:
    """Incidence and mass matrices of the lowest-order complex.

    ``d0`` is (E, V), ``d1`` is (F, E); ``M0`` is the P1 mass matrix, ``M1``
    the Whitney mass matrix, ``M2 = diag(1 / area)`` and ``C`` the rotation
    pairing ``C_ee' = int W_e . (n x W_e')`` used by the star.
    """

    d0: sparse.csr_matrix
    d1: sparse.csr_matrix
    M0: sparse.csr_matrix
    M1: sparse.csr_matrix
    M2: sparse.csr_matrix
    C: sparse.csr_matrix
    grads: np.ndarray  # (F, 3, 3) gradients of barycentric coordinates

    @property
    def shape(self):
        return self.d0.shape[1], self.d0.shape[0], self.d1.shape[0]


_CACHE: "weakref.WeakKeyDictionary[Mesh, DeRhamComplex]" = weakref.WeakKeyDictionary()


def _barycentric_gradients(m: Mesh) -> np.ndarray:
    v, t = m.vertices, m.triangles
    n = m.face_normals
    A2 = 2.0 * m.face_areas[:, None]
    g = np.empty((len(t), 3, 3))
    for k in range(3):
        p1, p2 = v[t[:, (k + 1) % 3]], v[t[:, (k + 2) % 3]]
        g[:, k] = np.cross(n, p2 - p1) / A2
    return g


def _pairing(m: Mesh, g: np.ndarray, rotate: bool) -> sparse.csr_matrix:
    """Assemble ``int W_e . W_e'`` (or ``int W_e . (n x W_e')``) over faces."""
    F = m.n_faces
    A = m.face_areas
    h = g if not rotate else np.cross(m.face_normals[:, None, :], g)
    # dot[f, i, j] = g_i . h_j
    dot = np.einsum("fik,fjk->fij", g, h)

    def I(i, j):
        return A * (2.0 if i == j else 1.0) / 12.0

    rows, cols, vals = [], [], []
    s = m.face_edge_signs
    for k in range(3):
        a, b = k, (k + 1) % 3
        for l in range(3):
            c, d = l, (l + 1) % 3
            val = (I(a, c) * dot[:, b, d] - I(a, d) * dot[:, b, c]
                   - I(b, c) * dot[:, a, d] + I(b, d) * dot[:, a, c])
            rows.append(m.face_edges[:, k])
            cols.append(m.face_edges[:, l])
            vals.append(val * s[:, k] * s[:, l])
    E = m.n_edges
    M = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(E, E))
    del F
    return M.tocsr()


def assemble_complex(m: Mesh) -> DeRhamComplex:
    """Operators of the Whitney complex on ``m`` (cached per mesh object)."""
    hit = _CACHE.get(m)
    if hit is not None:
        return hit
    V, E, F = m.n_vertices, m.n_edges, m.n_faces
    e = m.edges
    d0 = sparse.csr_matrix(
        (np.r_[-np.ones(E), np.ones(E)], (np.r_[np.arange(E), np.arange(E)], np.r_[e[:, 0], e[:, 1]])),
        shape=(E, V), dtype=float,
    )
    d1 = sparse.csr_matrix(
        (m.face_edge_signs.ravel().astype(float), (np.repeat(np.arange(F), 3), m.face_edges.ravel())),
        shape=(F, E),
    )
    g = _barycentric_gradients(m)
    M1 = _pairing(m, g, rotate=False)
    M1 = (0.5 * (M1 + M1.T)).tocsr()
    C = _pairing(m, g, rotate=True)
    cx = DeRhamComplex(
        d0=d0,
        d1=d1,
        M0=mass_matrix(m),
        M1=M1,
        M2=sparse.diags(1.0 / m.face_areas).tocsr(),
        C=C,
        grads=g,
    )
    _CACHE[m] = cx
    return cx


def _restriction(m: Mesh, which: str):
    """Index sets of free edges and vertices for a boundary condition."""
    if which == "tangential_field":
        return np.arange(m.n_edges), np.arange(m.n_vertices)
    if which == "normal_field":
        return np.flatnonzero(~m.boundary_edge_mask), np.flatnonzero(~m.boundary_vertex_mask)
    raise ConfigError(f"unknown boundary condition {which!r}; expected one of {BOUNDARY_CONDITIONS}")


def hodge_laplacian(m: Mesh, which: str = "tangential_field"):
    """Blocks of the mixed Hodge Laplacian restricted to the free DOFs.

    Returns ``(curl, d0, M0, M1, edges)`` with ``curl = d1^T M2 d1``; the
    operator is ``curl + M1 d0 M0^{-1} d0^T M1`` on the listed edges.
    """
    cx = assemble_complex(m)
    ei, vi = _restriction(m, which)
    d0 = cx.d0[ei][:, vi].tocsr()
    d1 = cx.d1[:, ei].tocsr()
    curl = (d1.T @ cx.M2 @ d1).tocsr()
    M0 = cx.M0[vi][:, vi].tocsc()
    M1 = cx.M1[ei][:, ei].tocsr()
    return curl, d0, M0, M1, ei


def _dense_spectrum(curl, d0, M0, M1, count):
    M1d = M1.toarray()
    if d0.shape[1]:
        G = M1 @ d0
        X = sla.cho_solve(sla.cho_factor(M0.toarray()), G.T.toarray())
        L = curl.toarray() + G.toarray() @ X
    else:
        L = curl.toarray()
    L = 0.5 * (L + L.T)
    return sla.eigh(L, M1d, subset_by_index=[0, count - 1])


def _shift_invert_spectrum(curl, d0, M0, M1, count, seed, tol):
    """ARPACK on ``(L + M1)^{-1} M1`` through the symmetric saddle system

        [ M0        -d0^T M1     ] [s]   [ 0 ]
        [ -M1 d0    -(curl + M1) ] [x] = [ -b]
    """
    n, nv = M1.shape[0], M0.shape[0]
    G = (M1 @ d0).tocsr()
    K = sparse.bmat([[M0, -G.T], [-G, -(curl + M1)]], format="csc")
    lu = spla.splu(K)
    M0lu = spla.splu(M0.tocsc()) if nv else None

    def opinv(b):
        rhs = np.r_[np.zeros(nv), -np.asarray(b, float).ravel()]
        return lu.solve(rhs)[nv:]

    def apply_L(x):
        x = np.asarray(x, float).ravel()
        y = curl @ x
        if nv:
            y = y + G @ M0lu.solve(G.T @ x)
        return y

    A = spla.LinearOperator((n, n), matvec=apply_L, dtype=float)
    OPinv = spla.LinearOperator((n, n), matvec=opinv, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    ncv = min(n - 1, max(2 * count + 1, count + 20))
    try:
        vals, vecs = spla.eigsh(A, k=count, M=M1, sigma=-1.0, which="LM", OPinv=OPinv,
                                v0=v0, tol=tol, ncv=ncv, maxiter=max(1000, 10 * n))
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"ARPACK did not converge: {len(exc.eigenvalues)} of {count} eigenpairs") from None
    order = np.argsort(vals)
    return vals[order], vecs[:, order], apply_L


def _solve(m: Mesh, which: str, count: int, method: str, seed: int, tol: float):
    curl, d0, M0, M1, ei = hodge_laplacian(m, which)
    n = M1.shape[0]
    if count < 1 or count >= n:
        raise SolverError(f"count={count} must lie in [1, {n - 1}] for {n} free edges")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "shift_invert"
    if method == "shift_invert" and n < count + 3:
        method = "dense"  # ARPACK needs room for its Krylov basis
    if method == "dense":
        vals, vecs = _dense_spectrum(curl, d0, M0, M1, count)
        M0lu = spla.splu(M0.tocsc()) if M0.shape[0] else None
        G = (M1 @ d0).tocsr()

        def apply_L(x):
            y = curl @ x
            return y + G @ M0lu.solve(G.T @ x) if M0lu is not None else y
    elif method == "shift_invert":
        vals, vecs, apply_L = _shift_invert_spectrum(curl, d0, M0, M1, count, seed, tol)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, M1 @ vecs))
    vecs = vecs / norms
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    LX = np.column_stack([apply_L(vecs[:, j]) for j in range(vecs.shape[1])])
    R = LX - (M1 @ vecs) * vals
    scale = np.linalg.norm(LX, axis=0) + np.abs(vals) * np.linalg.norm(M1 @ vecs, axis=0)
    res = np.linalg.norm(R, axis=0) / np.maximum(scale, 1e-300)
    full = np.zeros((m.n_edges, count))
    full[ei] = vecs
    return SpectralResult(np.asarray(vals), full, which, res, method), M1, curl


def one_form_spectrum(m: Mesh, count: int, method: str = "auto", seed: int = 0,
                      which: str = "tangential_field", tol: float = 1e-13) -> SpectralResult:
    """Lowest ``count`` eigenpairs of the Hodge Laplacian on 1-forms.

    Eigenvectors are edge coefficients (zero on removed DOFs), normalized in
    the Whitney ``L^2`` inner product.
    """
    return _solve(m, which, count, method, seed, tol)[0]


def _spectral_scale(curl, M1) -> float:
    return float(np.max(curl.diagonal() / M1.diagonal()))


def numerical_rank_split(vals: np.ndarray, scale: float) -> tuple[int, float]:
    """Split sorted eigenvalues at the largest multiplicative gap.

    A floor of ``1e-14 * scale`` is prepended, so "no zeros" is a
    candidate.  Returns ``(kernel_dim, gap_ratio)``.
    """
    floor = 1e-14 * max(scale, 1e-300)
    seq = np.r_[floor, np.maximum(np.abs(vals), floor)]
    ratios = seq[1:] / seq[:-1]
    r = int(np.argmax(ratios))
    return r, float(ratios[r])


@dataclass(frozen=True)
class HarmonicBasis:
    """Discrete harmonic 1-forms for one boundary condition.

    ``forms`` is (E, n), orthonormal in the Whitney inner product; ``gram``
    is ``forms^T M1 forms``.
    """

    forms: np.ndarray
    which: str
    gram: np.ndarray
    eigenvalues: np.ndarray
    first_nonzero: float
    gap_ratio: float

    @property
    def dim(self) -> int:
        return self.forms.shape[1]

    def __len__(self):
        return self.dim

    def __getitem__(self, i):
        return self.forms[:, i]


def harmonic_basis(m: Mesh, which: str = "tangential_field", method: str = "auto", seed: int = 0,
                   expected: Optional[int] = None) -> HarmonicBasis:
    """Kernel of the Hodge Laplacian with boundary condition ``which``.

    The kernel dimension is read off the largest spectral gap and must
    clear ``RANK_GAP``; it is then compared with ``2g + k - 1`` (or
    ``expected``), and any mismatch raises ``SolverError``.
    """
    _restriction(m, which)
    if expected is None:
        expected = topology(m).harmonic_dimension
    n_free = len(_restriction(m, which)[0])
    count = min(n_free - 1, max(12, expected + 8))
    while True:
        res, M1, curl = _solve(m, which, count, method, seed, 1e-13)
        r, gap = numerical_rank_split(res.eigenvalues, _spectral_scale(curl, M1))
        if r < count or count == n_free - 1:
            break
        count = min(n_free - 1, 2 * count)
    if gap < RANK_GAP:
        raise SolverError(
            f"ambiguous harmonic rank for {which}: largest eigenvalue gap ratio {gap:.3g} < {RANK_GAP:.0e}"
        )
    if r != expected:
        raise SolverError(f"harmonic dimension {r} for {which} differs from 2g+k-1 = {expected}")
    forms = res.eigenvectors[:, :r]
    cx = assemble_complex(m)
    gram = forms.T @ (cx.M1 @ forms)
    first = float(res.eigenvalues[r]) if r < len(res.eigenvalues) else float("nan")
    return HarmonicBasis(forms, which, gram, res.eigenvalues[:r].copy(), first, gap)


def star(w: np.ndarray, m: Mesh) -> np.ndarray:
    """Hodge star: ``L^2`` projection of the 90 degree rotation ``n x W``.

    The rotation follows the triangle winding (face normal ``n``).
    """
    cx = assemble_complex(m)
    w = np.asarray(w, float)
    lu = _m1_factor(m)
    rhs = cx.C @ w
    return lu.solve(rhs) if rhs.ndim == 1 else np.column_stack([lu.solve(c) for c in rhs.T])


_M1LU: "weakref.WeakKeyDictionary[Mesh, object]" = weakref.WeakKeyDictionary()


def _m1_factor(m: Mesh):
    lu = _M1LU.get(m)
    if lu is None:
        lu = spla.splu(assemble_complex(m).M1.tocsc())
        _M1LU[m] = lu
    return lu


def codifferential(m: Mesh, w: np.ndarray) -> np.ndarray:
    """Weak codifferential of a 1-form: ``M0^{-1} d0^T M1 w`` (no boundary condition)."""
    cx = assemble_complex(m)
    return spla.spsolve(cx.M0.tocsc(), cx.d0.T @ (cx.M1 @ np.asarray(w, float)))


def face_field(w: np.ndarray, m: Mesh) -> np.ndarray:
    """Whitney interpolant at face centroids, shape (F, 3)."""
    cx = assemble_complex(m)
    w = np.asarray(w, float)
    c = w[m.face_edges] * m.face_edge_signs
    g = cx.grads
    out = np.zeros((m.n_faces, 3))
    for k in range(3):
        out += c[:, k, None] * (g[:, (k + 1) % 3] - g[:, k]) / 3.0
    return out


def circulation_fit(m: Mesh, w: np.ndarray, vertices: np.ndarray, normals: np.ndarray,
                    directions: Optional[np.ndarray] = None, rings: int = 3):
    """Quadratic tangent field fitted to edge circulations around vertices.

    For each vertex the field is written in its tangent plane as
    ``X(a, b) = sum_k phi_k(a, b) C_k`` with quadratic monomials
    ``phi_k`` and fitted by least squares to the circulations of all edges
    inside the ``rings``-neighbourhood (Simpson's rule along each edge).  The
    data are the 1-form coefficients themselves, so no averaging bias
    enters at the boundary.  Returns the field at the vertices (V', 3) and,
    when ``directions`` is given, its derivative along them.
    """
    w = np.asarray(w, float)
    E = m.edges
    nbrs = m.rings(rings)
    incident = [[] for _ in range(m.n_vertices)]
    for k, (a, b) in enumerate(E.tolist()):
        incident[a].append(k)
        incident[b].append(k)
    vals = np.zeros((len(vertices), 3))
    ders = np.zeros((len(vertices), 3))
    for j, v in enumerate(vertices):
        patch = {int(v), *nbrs[v].tolist()}
        es = sorted({k for u in patch for k in incident[u] if E[k, 0] in patch and E[k, 1] in patch})
        n = normals[v]
        if directions is not None:
            t1 = np.asarray(directions[j], float)
        else:
            t1 = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        t1 = t1 - (t1 @ n) * n
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        P = m.vertices[E[es, 0]] - m.vertices[v]
        Q = m.vertices[E[es, 1]] - m.vertices[v]
        h = np.sqrt(np.mean(np.sum(P * P, axis=1)))

        def basis(X):
            a, b = X @ t1 / h, X @ t2 / h
            return np.c_[np.ones_like(a), a, b, a * a, a * b, b * b]

        simpson = (basis(P) + 4.0 * basis(0.5 * (P + Q)) + basis(Q)) / 6.0
        d = Q - P
        A = np.c_[simpson * (d @ t1)[:, None], simpson * (d @ t2)[:, None]]
        if len(es) < 12:
            A = A[:, [0, 1, 2, 6, 7, 8]]  # affine fit on small patches
        coef, *_ = np.linalg.lstsq(A, w[es], rcond=None)
        C = coef.reshape(2, -1)
        vals[j] = C[0, 0] * t1 + C[1, 0] * t2
        ders[j] = (C[0, 1] * t1 + C[1, 1] * t2) / h
    return (vals, ders) if directions is not None else vals


def sample_field(w: np.ndarray, m: Mesh, normals: Optional[np.ndarray] = None,
                 recovery: str = "average") -> np.ndarray:
    """Per-vertex tangent vectors from a 1-form.

    Face-centroid values are averaged to vertices with area weights and
    projected to the tangent plane of ``normals`` (default: the mesh
    normals, else angle-weighted face normals).  The one-sided average is
    only first-order accurate at boundary vertices; ``recovery="patch"``
    replaces it there by :func:`circulation_fit`.
    """
    if normals is None:
        if m.normals is not None:
            normals = m.normals
        else:
            from .geometry import angle_weighted_normals

            normals = angle_weighted_normals(m)
    if recovery not in ("average", "patch"):
        raise ConfigError(f"unknown recovery {recovery!r}")
    X = face_field(w, m) * m.face_areas[:, None]
    acc = np.zeros((m.n_vertices, 3))
    wsum = np.zeros(m.n_vertices)
    for k in range(3):
        np.add.at(acc, m.triangles[:, k], X)
        np.add.at(wsum, m.triangles[:, k], m.face_areas)
    acc /= wsum[:, None]
    N = np.asarray(normals, float)
    if recovery == "patch":
        bv = np.flatnonzero(m.boundary_vertex_mask)
        acc[bv] = circulation_fit(m, w, bv, N)
    return acc - np.einsum("ij,ij->i", acc, N)[:, None] * N


def de_rham(m: Mesh, field) -> np.ndarray:
    """Edge circulations of an ambient vector field (Simpson's rule).

    ``field`` maps points (n, 3) to vectors (n, 3).
    """
    p = m.vertices[m.edges[:, 0]]
    q = m.vertices[m.edges[:, 1]]
    t = q - p
    f0, fm, f1 = field(p), field(0.5 * (p + q)), field(q)
    return np.einsum("ij,ij->i", (f0 + 4 * fm + f1) / 6.0, t)


def write_one_form(w: np.ndarray, m: Mesh, dest) -> None:
    """Per-edge CSV: ``v0,v1,coefficient`` with the edge oriented ``v0 -> v1``."""
    lines = ["v0,v1,coefficient"]
    lines += [f"{a},{b},{c!r}" for (a, b), c in zip(m.edges.tolist(), np.asarray(w, float).tolist())]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
