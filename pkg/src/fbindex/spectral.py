"""Symmetric generalized eigensolvers with an optional linear constraint.

Both routes solve ``S u = lam B u`` on ``{u : a^T u = 0}`` (or unconstrained
when ``a`` is None) and return the lowest eigenpairs:

* ``dense``: explicit orthonormal basis of the constraint space (one
  Householder reflector) and LAPACK ``eigh``.
* ``shift_invert``: ARPACK on the constrained resolvent.  The shift is chosen
  below the whole spectrum by Sylvester inertia of ``S - sigma B`` so the
  lowest eigenvalues are the ones returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import SolverError

__all__ = ["SpectralResult", "solve_lowest", "count_below", "DENSE_LIMIT"]

DENSE_LIMIT = 3000


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    constraint: str
    residuals: np.ndarray
    method: str

    def __len__(self):
        return len(self.eigenvalues)

    def __getitem__(self, i):
        return self.eigenvalues[i]


def _as_dense(M):
    return M.toarray() if sparse.issparse(M) else np.asarray(M)


def _relative_residuals(S, B, a, vals, vecs):
    R = S @ vecs - (B @ vecs) * vals
    if a is not None:
        # remove the Lagrange-multiplier component along a
        ones = np.ones(len(a))
        R -= np.outer(a, ones @ R) / (ones @ a)
    scale = np.linalg.norm(S @ vecs, axis=0) + np.abs(vals) * np.linalg.norm(B @ vecs, axis=0)
    return np.linalg.norm(R, axis=0) / np.maximum(scale, 1e-300)


def _normalize(B, vecs):
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, B @ vecs))
    vecs = vecs / norms
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vecs), axis=0)
    return vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])


def _dense(S, B, a, count):
    Sd, Bd = _as_dense(S), _as_dense(B)
    n = Sd.shape[0]
    if a is None:
        vals, vecs = sla.eigh(Sd, Bd, subset_by_index=[0, count - 1])
        return vals, vecs
    # Householder reflector Q with Q a ~ e_1; Q[:, 1:] spans a-perp.
    w = np.array(a, dtype=float)
    w[0] += np.copysign(np.linalg.norm(w), w[0])
    w /= np.linalg.norm(w)

    def reflect(M):
        Mw = M @ w
        wM = w @ M
        return M - 2 * np.outer(w, wM) - 2 * np.outer(Mw, w) + 4 * (w @ Mw) * np.outer(w, w)

    Sz = reflect(Sd)[1:, 1:]
    Bz = reflect(Bd)[1:, 1:]
    vals, y = sla.eigh(Sz, Bz, subset_by_index=[0, count - 1])
    Y = np.vstack([np.zeros((1, count)), y])
    vecs = Y - 2 * np.outer(w, w @ Y)
    del n
    return vals, vecs


def count_below(S, B, sigma: float):
    """Number of eigenvalues of the pencil ``(S, B)`` below ``sigma``.

    Uses the signs of the pivots of an LDL-like factorization of
    ``S - sigma B`` (symmetric ordering, no pivoting).  Returns ``None`` if the
    factorization had to pivot off the diagonal.
    """
    K = (S - sigma * B).tocsc()
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    return int(np.count_nonzero(lu.U.diagonal() < 0))


def _lower_shift(S, B):
    sigma = -1.0
    for _ in range(200):
        below = count_below(S, B, sigma)
        if below == 0:
            return sigma
        sigma = 2.0 * sigma - 1.0
    raise SolverError("could not place a shift below the spectrum")


def _shift_invert(S, B, a, count, seed, tol, sigma=None):
    S = sparse.csc_matrix(S)
    B = sparse.csc_matrix(B)
    n = S.shape[0]
    if sigma is None:
        sigma = _lower_shift(S, B)
    lu = spla.splu((S - sigma * B).tocsc())
    if a is not None:
        Ka = lu.solve(np.asarray(a, float))
        aKa = a @ Ka

        def op(b):
            x = lu.solve(np.asarray(b, float).ravel())
            return x - Ka * ((a @ x) / aKa)
    else:
        def op(b):
            return lu.solve(np.asarray(b, float).ravel())

    OPinv = spla.LinearOperator((n, n), matvec=op, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    if a is not None:
        v0 -= a * (v0 @ a) / (a @ a)
    ncv = min(n - 1, max(2 * count + 1, count + 20))
    try:
        vals, vecs = spla.eigsh(S, k=count, M=B, sigma=sigma, which="LM", OPinv=OPinv,
                                v0=v0, tol=tol, ncv=ncv, maxiter=max(1000, 10 * n))
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"ARPACK did not converge: {len(exc.eigenvalues)} of {count} eigenpairs") from None
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def solve_lowest(S, B, count: int, a=None, method: str = "auto", seed: int = 0,
                 tol: float = 1e-13) -> SpectralResult:
    """Lowest ``count`` eigenpairs of ``S u = lam B u`` (optionally with ``a^T u = 0``)."""
    n = S.shape[0]
    dim = n - (1 if a is not None else 0)
    if count < 1:
        raise SolverError("count must be >= 1")
    if count >= dim:
        raise SolverError(f"count={count} exceeds the solvable subspace dimension {dim}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "shift_invert"
    if method == "dense":
        vals, vecs = _dense(S, B, a, count)
    elif method == "shift_invert":
        vals, vecs = _shift_invert(S, B, a, count, seed, tol)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    vecs = _normalize(B, vecs)
    res = _relative_residuals(S, B, a, vals, vecs)
    return SpectralResult(
        eigenvalues=np.asarray(vals),
        eigenvectors=vecs,
        constraint="mean-zero" if a is not None else "none",
        residuals=res,
        method=method,
    )
