"""Sparse nearest-neighbour operators on subsets of a box of Z^d."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def _shift(labels: np.ndarray, axis: int, sign: int, periodic: bool) -> np.ndarray:
    """labels[x + sign e_axis] as an array aligned with x; -1 where off the grid."""
    if periodic:
        return np.roll(labels, -sign, axis=axis)
    out = np.full_like(labels, -1)
    src = [slice(None)] * labels.ndim
    dst = [slice(None)] * labels.ndim
    if sign > 0:
        src[axis], dst[axis] = slice(1, None), slice(None, -1)
    else:
        src[axis], dst[axis] = slice(None, -1), slice(1, None)
    out[tuple(dst)] = labels[tuple(src)]
    return out


def masked_transition(mask: np.ndarray, periodic: tuple[int, ...] = ()) -> tuple[np.ndarray, sp.csr_matrix]:
    """Simple-random-walk kernel restricted to ``mask`` (killed on leaving it).

    Returns the C-order flat indices of the masked sites and the
    ``n x n`` matrix with entries ``1/(2d)`` between masked neighbours.
    """
    d = mask.ndim
    labels = np.full(mask.shape, -1, dtype=np.int64)
    flat = np.flatnonzero(mask)
    labels.ravel()[flat] = np.arange(flat.size)
    rows, cols = [], []
    for axis in range(d):
        for sign in (1, -1):
            nb = _shift(labels, axis, sign, axis in periodic)
            ok = mask & (nb >= 0)
            rows.append(labels[ok])
            cols.append(nb[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.full(rows.size, 1.0 / (2 * d))
    P = sp.csr_matrix((data, (rows, cols)), shape=(flat.size, flat.size))
    return flat, P


def neighbour_fraction(mask_from: np.ndarray, mask_to: np.ndarray,
                       periodic: tuple[int, ...] = ()) -> np.ndarray:
    """For each site, (number of neighbours in ``mask_to``) / 2d, zero off ``mask_from``."""
    d = mask_from.ndim
    to = mask_to.astype(np.int64)
    acc = np.zeros(mask_from.shape)
    for axis in range(d):
        for sign in (1, -1):
            acc += _shift(to, axis, sign, axis in periodic) == 1
    return np.where(mask_from, acc / (2 * d), 0.0)


class SolverError(RuntimeError):
    """Iterative linear solve stopped before reaching its residual target."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3g} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def cg_solve(A, b: np.ndarray, *, tol: float = 1e-10, maxiter: int | None = None,
             jacobi: bool = True) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned conjugate gradients for an SPD system.

    Returns ``(x, iterations, relative residual)``; raises ``SolverError``
    when ``maxiter`` runs out first.
    """
    from scipy.sparse.linalg import LinearOperator, cg

    n = b.shape[0]
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    M = None
    if jacobi:
        inv = 1.0 / A.diagonal()
        M = LinearOperator((n, n), matvec=lambda v: inv * v, dtype=float)
    count = [0]

    def _cb(_xk):
        count[0] += 1

    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter or 20 * n, M=M, callback=_cb)
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    if info != 0 and res > tol:
        raise SolverError("conjugate gradients did not converge", res, count[0])
    return x, count[0], res
