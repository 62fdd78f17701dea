"""Small dense linear-algebra helpers with a single rank convention."""
import numpy as np

RANK_RTOL = 1e-10


def numerical_rank(s, rtol=RANK_RTOL):
    s = np.asarray(s)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def null_space(A, rtol=RANK_RTOL):
    """Orthonormal basis (columns) of the right null space of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows, cols = A.shape
    if cols == 0:
        return np.zeros((0, 0))
    if rows == 0:
        return np.eye(cols)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    r = numerical_rank(s, rtol)
    return vt[r:].T.copy()


def range_basis(A, rtol=RANK_RTOL):
    """Orthonormal basis (columns) of the column space of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    return u[:, : numerical_rank(s, rtol)].copy()


def left_null_space(A, rtol=RANK_RTOL):
    return null_space(np.asarray(A, dtype=float).T, rtol)


def projector(basis):
    basis = np.asarray(basis, dtype=float)
    return basis @ basis.T


def pinv(A, rtol=RANK_RTOL):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros(A.shape[::-1])
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    r = numerical_rank(s, rtol)
    return (vt[:r].T / s[:r]) @ u[:, :r].T
