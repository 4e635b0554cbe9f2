"""Action of ``exp(-i tau A)`` on a vector by Arnoldi projection.

A time step that does not converge within ``m_max`` Krylov vectors is split
in two halves, recursively, so the local error estimate stays below ``tol``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericalError

_MAX_SPLIT_DEPTH = 30


def _arnoldi(a, v: np.ndarray, tau: float, tol: float, m_max: int):
    """Arnoldi basis and Hessenberg block accurate for ``exp(-i tau A) v``.

    Returns ``(basis, hess, beta)`` or ``None`` if ``m_max`` vectors do not reach
    ``tol``.
    """
    beta = np.linalg.norm(v)
    n = v.shape[0]
    if beta == 0.0:
        return np.zeros((1, n), dtype=np.complex128), np.zeros((1, 1), dtype=np.complex128), 0.0
    m_max = min(m_max, n)
    basis = np.empty((m_max + 1, n), dtype=np.complex128)
    hess = np.zeros((m_max + 1, m_max), dtype=np.complex128)
    basis[0] = v / beta
    for j in range(m_max):
        w = a @ basis[j]
        # classical Gram-Schmidt, applied twice
        q = basis[: j + 1]
        h = (q @ w.conj()).conj()
        w = w - h @ q
        h2 = (q @ w.conj()).conj()
        w = w - h2 @ q
        hess[: j + 1, j] = h + h2
        h_next = np.linalg.norm(w)
        hess[j + 1, j] = h_next
        k = j + 1
        if h_next <= 1e-13 * beta:
            return basis[:k], hess[:k, :k], beta
        small = scipy.linalg.expm(-1j * tau * hess[:k, :k])
        if beta * tau * h_next * abs(small[k - 1, 0]) <= tol:
            return basis[:k], hess[:k, :k], beta
        basis[k] = w / h_next
    return None


class KrylovProjection:
    """``exp(-i s A) v`` for any ``0 <= s <= tau`` from one Arnoldi basis."""

    def __init__(self, basis, hess, beta):
        self.basis, self.hess, self.beta = basis, hess, beta

    def coefficients(self, s: float) -> np.ndarray:
        return self.beta * scipy.linalg.expm(-1j * s * self.hess)[:, 0]

    def __call__(self, s: float) -> np.ndarray:
        return self.basis.T @ self.coefficients(s)

    def norm2(self, s: float) -> float:
        c = self.coefficients(s)
        return float(np.vdot(c, c).real)


def krylov_projection(a, v, tau: float, tol: float = 1e-10, m_max: int = 30) -> KrylovProjection | None:
    """Projection valid on ``[0, tau]``; ``None`` if the step is too long for ``m_max``."""
    out = _arnoldi(a, np.asarray(v, dtype=np.complex128), tau, tol, m_max)
    return None if out is None else KrylovProjection(*out)


def expm_krylov(a, v, tau: float, tol: float = 1e-10, m_max: int = 30) -> np.ndarray:
    """Return ``exp(-1j * tau * a) @ v`` for a sparse or dense square ``a``.

    Parameters
    ----------
    a : sparse matrix or ndarray
        Generator; need not be Hermitian.
    v : ndarray
        Complex vector.
    tau : float
        Non-negative time step.
    tol : float
        Target local error per (sub)step, absolute in the vector 2-norm.
    m_max : int
        Largest Krylov subspace before the step is halved.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    v = np.asarray(v, dtype=np.complex128)
    if tau == 0:
        return v.copy()

    def advance(vec, step, depth):
        proj = krylov_projection(a, vec, step, tol, m_max)
        if proj is not None:
            return proj(step)
        if depth >= _MAX_SPLIT_DEPTH:
            raise NumericalError("Krylov step failed to converge")
        half = advance(vec, step / 2, depth + 1)
        return advance(half, step / 2, depth + 1)

    return advance(v, tau, 0)
