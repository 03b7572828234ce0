"""Dense and sparse linear-algebra kernels.

Dense Hermitian matrices are plain ``numpy`` arrays (complex128); sparse
Hermitian operators are ``scipy.sparse`` matrices.  The dense eigensolver
delegates to LAPACK, while the Lanczos ground-state solver is implemented
here as a thick-restart block method with full reorthogonalization so that
degenerate multiplets are resolved up to the block size.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sps

__all__ = [
    "NotHermitian",
    "NoConvergence",
    "EigenDecomposition",
    "as_hermitian",
    "fix_gauge",
    "eigh",
    "nullspace",
    "lanczos_ground",
    "rank_factor",
]

ABS_FLOOR = 1e-12


class NotHermitian(ValueError):
    """Raised when a matrix fails the Hermiticity check."""


class NoConvergence(RuntimeError):
    """Raised when an iterative eigensolver exhausts its iteration budget."""

    def __init__(self, iterations: int, best_residual: float):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(best residual {best_residual:.3e})"
        )
        self.iterations = iterations
        self.best_residual = best_residual


class EigenDecomposition(NamedTuple):
    values: np.ndarray  # ascending, real
    vectors: np.ndarray  # orthonormal columns


def as_hermitian(m, rtol: float = 1e-9) -> np.ndarray:
    """Return ``m`` as a complex square array, checking Hermiticity.

    Raises
    ------
    NotHermitian
        If ``||m - m^H||_F`` exceeds ``rtol * ||m||_F`` (with an absolute
        floor of 1e-12).
    """
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise NotHermitian(f"expected a non-empty square matrix, got shape {a.shape}")
    err = np.linalg.norm(a - a.conj().T)
    if err > max(rtol * np.linalg.norm(a), ABS_FLOOR):
        raise NotHermitian(f"asymmetry {err:.3e} exceeds tolerance")
    return a


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive.

    Ties in magnitude (within 1e-12 relative) go to the lowest index so the
    convention is stable under round-off.
    """
    v = np.array(vectors, dtype=complex, copy=True)
    if v.ndim == 1:
        return fix_gauge(v[:, None])[:, 0]
    mags = np.abs(v)
    for j in range(v.shape[1]):
        col = mags[:, j]
        top = col.max()
        if top == 0.0:
            continue
        k = int(np.argmax(col >= top * (1 - 1e-12)))
        v[:, j] *= np.conj(v[k, j]) / abs(v[k, j])
    return v


def eigh(m) -> EigenDecomposition:
    """Full spectrum of a Hermitian matrix, ascending, with gauge-fixed vectors."""
    a = as_hermitian(m)
    a = 0.5 * (a + a.conj().T)
    values, vectors = np.linalg.eigh(a)
    return EigenDecomposition(values, fix_gauge(vectors))


def nullspace(m, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (as columns) of the approximate null space of ``m``.

    An eigenvector belongs to the null space when its eigenvalue satisfies
    ``|lambda| <= tol * max(1, ||m||_F)``.  Returns an array with zero
    columns when the null space is empty.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    values, vectors = eigh(m)
    scale = max(1.0, float(np.linalg.norm(m)))
    keep = np.abs(values) <= tol * scale
    return vectors[:, keep]


def _as_sparse(m) -> sps.csr_matrix:
    if sps.issparse(m):
        return sps.csr_matrix(m, dtype=complex)
    return sps.csr_matrix(np.asarray(m, dtype=complex))


def _operator_scale(m: sps.csr_matrix) -> float:
    # cheap bound on the spectral radius: max absolute row sum
    if m.nnz == 0:
        return 1.0
    return max(1.0, float(abs(m).sum(axis=1).max()))


def _project_out(block: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # basis @ basis^H @ block without materializing conj(basis)
    return block - basis @ (block.conj().T @ basis).conj().T


def _orth_block(block: np.ndarray, basis: np.ndarray | None, drop: float = 1e-10) -> np.ndarray:
    """Orthonormalize ``block`` against ``basis`` and itself, dropping
    directions that are numerically already spanned."""
    has_basis = basis is not None and basis.shape[1] > 0
    b = block
    if has_basis:
        for _ in range(2):  # twice is enough
            b = _project_out(b, basis)
    top = float(np.linalg.norm(block, axis=0).max(initial=0.0))
    q, r = np.linalg.qr(b)
    keep = np.abs(np.diag(r)) > drop * top
    q = q[:, keep]
    if has_basis and q.shape[1]:
        q, _ = np.linalg.qr(_project_out(q, basis))
    return q


def lanczos_ground(
    m,
    num_states: int = 1,
    seed: int = 42,
    tol: float = 1e-10,
    max_iter: int = 500,
    krylov_dim: int = 80,
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenpairs of a sparse Hermitian operator by block Lanczos.

    The Krylov space is grown from a random block of ``num_states`` vectors,
    fully reorthogonalized (two Gram-Schmidt passes), and projected with a
    Rayleigh-Ritz step on the stored product ``H V``.  When the basis reaches
    ``krylov_dim`` columns it is thick-restarted from the lowest Ritz vectors
    and expanded along their residuals.  A block start resolves degenerate
    levels up to the block size.

    Parameters
    ----------
    m : sparse or dense Hermitian matrix
    num_states : int
        Number of lowest eigenpairs requested.
    seed : int
        Seed for the random start block; results are deterministic.
    tol : float
        Convergence threshold on every ``||H v - lambda v||`` relative to the
        operator scale (max absolute row sum, at least 1).
    max_iter : int
        Maximum number of restart cycles.
    krylov_dim : int
        Basis size that triggers a restart (raised to ``3 * num_states + 10``
        when smaller).

    Returns
    -------
    values : ndarray, shape (num_states,)
    vectors : ndarray, shape (dim, num_states)

    Raises
    ------
    NoConvergence
        When ``max_iter`` cycles do not bring every residual below the
        threshold.
    """
    h = _as_sparse(m)
    dim = h.shape[0]
    if not 1 <= num_states <= dim:
        raise ValueError(f"need 1 <= num_states <= dim, got {num_states} for dim {dim}")
    b = num_states
    scale = _operator_scale(h)
    rng = np.random.default_rng(seed)
    mmax = min(dim, max(krylov_dim, 3 * b + 10))

    v = np.empty((dim, mmax), dtype=complex)
    w = np.empty((dim, mmax), dtype=complex)
    q = _orth_block(rng.standard_normal((dim, b)) + 1j * rng.standard_normal((dim, b)), None)
    size = q.shape[1]
    v[:, :size] = q
    w[:, :size] = h @ q
    grow = w[:, :size]
    best = np.inf
    for _ in range(max_iter):
        while size < mmax:
            q = _orth_block(grow, v[:, :size])
            if q.shape[1] == 0:
                break  # invariant subspace
            q = q[:, : mmax - size]
            new = slice(size, size + q.shape[1])
            v[:, new] = q
            w[:, new] = h @ q
            grow = w[:, new]
            size = new.stop
        vs, ws = v[:, :size], w[:, :size]
        t = (ws.conj().T @ vs).conj().T
        theta, y = np.linalg.eigh(0.5 * (t + t.conj().T))
        n = min(b, theta.size)
        x = vs @ y[:, :n]
        res = ws @ y[:, :n] - x * theta[:n]
        rnorm = np.linalg.norm(res, axis=0)
        best = min(best, float(rnorm.max()))
        if n == b and rnorm.max() <= tol * scale:
            return theta[:b], fix_gauge(x)
        if size == dim:
            return theta[:b], fix_gauge(x)  # full space: Ritz pairs are exact
        keep = min(theta.size, max(b, mmax // 2 - b))
        v[:, :keep] = vs @ y[:, :keep]
        w[:, :keep] = ws @ y[:, :keep]
        size = keep
        grow = res
    raise NoConvergence(max_iter, best)


def rank_factor(g, tol: float = 1e-10) -> tuple[int, np.ndarray, np.ndarray]:
    """Rank-revealing factorization ``g = L @ R`` via the SVD.

    The numerical rank counts singular values above ``tol * sigma_max``
    (zero for an all-zero matrix).  ``L`` has ``rank`` columns and ``R``
    has ``rank`` rows.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.atleast_2d(np.asarray(g, dtype=complex))
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] <= ABS_FLOOR:
        return 0, np.zeros((a.shape[0], 0), complex), np.zeros((0, a.shape[1]), complex)
    r = int(np.sum(s > tol * s[0]))
    root = np.sqrt(s[:r])
    return r, u[:, :r] * root, root[:, None] * vh[:r]
