"""Dense float64 linear algebra used by everything else.

Matrices and vectors are plain ``numpy.ndarray`` objects widened to float64.
The SVD is a one-sided (Hestenes) Jacobi iteration so results are
deterministic for a fixed input and independent of the LAPACK build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import njit, pick
from .errors import ConvergenceError, DataError

DEFAULT_RCOND = 1e-10
MAX_SWEEPS = 60
_JACOBI_TOL = 1e-15


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-d float64 array (copying only if needed)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} has non-finite entries")
    return arr


def mean_pool(token_embeddings, mask):
    """Masked mean of token states: ``sum_j m_j H_j / sum_j m_j``."""
    h = as_matrix(token_embeddings, "token_embeddings")
    m = as_vector(mask, "mask")
    if m.shape[0] != h.shape[0]:
        raise DataError(f"mask length {m.shape[0]} != sequence length {h.shape[0]}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise DataError("mask entries must be 0 or 1")
    total = m.sum()
    if total == 0:
        raise DataError("all-zero attention mask: nothing to pool")
    return h[m == 1.0].sum(axis=0) / total


def l2_normalize(v):
    v = as_vector(v)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DataError("cannot normalize a zero vector")
    return v / norm


def l2_normalize_rows(a):
    a = as_matrix(a)
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        bad = np.flatnonzero(norms[:, 0] == 0.0).tolist()
        raise DataError(f"zero rows cannot be normalized: {bad[:10]}")
    return a / norms


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``a = u @ diag(singular_values) @ vt``."""

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.vt

    def rank(self, rcond=DEFAULT_RCOND):
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s > rcond * s[0]))

    def condition(self):
        s = self.singular_values
        if s.size == 0:
            return 1.0
        if s[-1] == 0.0:
            return float("inf")
        return float(s[0] / s[-1])


@njit
def _jacobi_numba(u, v, tol, max_sweeps):
    m, n = u.shape
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += u[i, p] * u[i, p]
                    beta += u[i, q] * u[i, q]
                    gamma += u[i, p] * u[i, q]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = 1.0 / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    up = u[i, p]
                    uq = u[i, q]
                    u[i, p] = c * up - s * uq
                    u[i, q] = s * up + c * uq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if not rotated:
            return sweep + 1
    return -1


def _jacobi_numpy(u, v, tol, max_sweeps):
    n = u.shape[1]
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up = u[:, p]
                uq = u[:, q]
                alpha = up @ up
                beta = uq @ uq
                gamma = up @ uq
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = 1.0 / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                u[:, [p, q]] = np.column_stack((c * up - s * uq, s * up + c * uq))
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            return sweep + 1
    return -1


_jacobi = pick(_jacobi_numba, _jacobi_numpy)


def _complete_orthonormal(u, filled):
    """Fill the columns of ``u`` not in ``filled`` with an orthonormal complement."""
    m = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if filled[j]]
    candidates = iter(np.eye(m))
    for j in range(u.shape[1]):
        if filled[j]:
            continue
        for e in candidates:
            w = e.copy()
            for b in basis:
                w -= (b @ w) * b
            for b in basis:  # second pass for orthogonality
                w -= (b @ w) * b
            nw = np.linalg.norm(w)
            if nw > 1e-8:
                u[:, j] = w / nw
                basis.append(u[:, j])
                break
    return u


def _tall_svd(a, max_sweeps):
    m, n = a.shape
    u = np.array(a, dtype=np.float64, order="C", copy=True)
    v = np.eye(n)
    sweeps = _jacobi(u, v, _JACOBI_TOL, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    sigma = np.linalg.norm(u, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    u = u[:, order]
    v = v[:, order]
    nonzero = sigma > 0.0
    u[:, nonzero] /= sigma[nonzero]
    if not np.all(nonzero):
        u[:, ~nonzero] = 0.0
        u = _complete_orthonormal(u, nonzero)
    return u, sigma, v.T.copy()


def svd(a, max_sweeps=MAX_SWEEPS):
    """Thin SVD of ``a`` (k = min(rows, cols) singular values, descending)."""
    a = as_matrix(a)
    rows, cols = a.shape
    if rows == 0 or cols == 0:
        k = min(rows, cols)
        return SvdFactors(np.zeros((rows, k)), np.zeros(k), np.zeros((k, cols)))
    if rows >= cols:
        u, s, vt = _tall_svd(a, max_sweeps)
    else:
        v, s, ut = _tall_svd(a.T, max_sweeps)
        u, vt = ut.T.copy(), v.T.copy()
    return SvdFactors(u, s, vt)


def pinv(a, rcond=DEFAULT_RCOND):
    """Moore-Penrose pseudoinverse; singular values <= rcond * sigma_max are dropped."""
    if not 0.0 < rcond < 1.0:
        raise DataError(f"rcond must lie in (0, 1), got {rcond}")
    f = svd(a)
    return pinv_from_svd(f, rcond)


def pinv_from_svd(f, rcond=DEFAULT_RCOND):
    s = f.singular_values
    keep = f.rank(rcond)
    if keep == 0:
        return np.zeros((f.vt.shape[1], f.u.shape[0]))
    return (f.vt[:keep].T / s[:keep]) @ f.u[:, :keep].T
