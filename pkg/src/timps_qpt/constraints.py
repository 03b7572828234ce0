"""Constraint equations on MPS site matrices from a two-site spectrum.

Every eigenvector ``|e>`` of the two-site block with eigenvalue above the
minimum gives one matrix equation ``sum_ij conj(e_ij) A_i A_j = 0``.
Replacing the products ``A_i A_j`` by independent unknowns ``M_ij`` makes the
system linear; its null space shows which products are forced to vanish.
Whether actual matrices realize a point of that null space is a separate,
nonlinear question answered (heuristically for ``chi >= 2``) by
:func:`factorize`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .localham import SpectralData, spin_operators
from .numerics import rank_factor

__all__ = [
    "UnsupportedSupport",
    "Status",
    "ConstraintSet",
    "MPattern",
    "FactorizationResult",
    "build_constraints",
    "solve_linearized",
    "d1_feasible",
    "factorize",
    "residual",
    "order_parameter_candidates",
    "pair_operator",
]

FOUND_TOL = 1e-20
FORCED_ZERO_TOL = 1e-10
METHOD = "trf"  # the MINPACK path is not bit-reproducible across calls
STOP_TOL = 1e-26  # polish exit, well inside FOUND_TOL


class UnsupportedSupport(ValueError):
    pass


class Status(enum.Enum):
    FOUND = "Found"
    NOT_FOUND = "NotFound"
    PROVED_IMPOSSIBLE = "ProvedImpossible"


@dataclass(frozen=True)
class ConstraintSet:
    d: int
    rows: np.ndarray  # (n_rows, d*d); column i*d + j multiplies M_ij

    @property
    def labels(self) -> tuple[float, ...]:
        return spin_operators((self.d - 1) / 2).labels

    def equations(self, tol: float = 1e-12) -> list[str]:
        """Human-readable form of each row, e.g. ``M(1,-1) - 1.414*M(0,0) + ...``."""
        out = []
        lab = [_fmt_label(x) for x in self.labels]
        for row in self.rows:
            parts = []
            for n, c in enumerate(row):
                if abs(c) <= tol:
                    continue
                i, j = divmod(n, self.d)
                parts.append(f"({_fmt_coeff(c)})*M({lab[i]},{lab[j]})")
            out.append(" + ".join(parts) + " = 0" if parts else "0 = 0")
        return out


def _fmt_label(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{int(round(2 * x))}/2"


def _fmt_coeff(c: complex) -> str:
    if abs(c.imag) <= 1e-14:
        return f"{c.real:.12g}"
    return f"{c.real:.12g}{c.imag:+.12g}j"


@dataclass(frozen=True)
class MPattern:
    d: int
    free_basis: np.ndarray  # (d*d, f), orthonormal columns
    forced_zero: frozenset[tuple[int, int]]
    symmetric_consistent: bool

    @property
    def free_dim(self) -> int:
        return self.free_basis.shape[1]

    @property
    def labels(self) -> tuple[float, ...]:
        return spin_operators((self.d - 1) / 2).labels

    def label(self, pair: tuple[int, int]) -> tuple[float, float]:
        lab = self.labels
        return lab[pair[0]], lab[pair[1]]

    def free_matrices(self) -> list[np.ndarray]:
        return [v.reshape(self.d, self.d) for v in self.free_basis.T]

    def to_constraints(self) -> ConstraintSet:
        """Orthonormal rows annihilating exactly the free space."""
        n = self.d * self.d
        if self.free_dim == 0:
            return ConstraintSet(self.d, np.eye(n, dtype=complex))
        q = np.eye(n) - self.free_basis @ self.free_basis.conj().T
        u, s, _ = np.linalg.svd(q)
        r = int(np.sum(s > 0.5))
        return ConstraintSet(self.d, u[:, :r].conj().T)


@dataclass(frozen=True)
class FactorizationResult:
    status: Status
    A: np.ndarray | None  # (d, chi, chi) when found
    residual: float
    starts_used: int
    chi: int


def build_constraints(spec: SpectralData) -> ConstraintSet:
    """One row per excluded eigenvector, ``row_ij = conj(e_ij)``."""
    if spec.k != 2:
        raise UnsupportedSupport(f"constraints need a two-site block, got k={spec.k}")
    return ConstraintSet(spec.d, spec.excluded.conj().T.copy())


def _null_space(rows: np.ndarray, n: int, tol: float) -> np.ndarray:
    if rows.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(rows)
    if s.size == 0 or s[0] == 0:
        return np.eye(n, dtype=complex)
    r = int(np.sum(s > tol * s[0]))
    return vh[r:].conj().T


def solve_linearized(c: ConstraintSet, tol: float = 1e-10) -> MPattern:
    n = c.d * c.d
    basis = _null_space(c.rows, n, tol)
    weight = np.linalg.norm(basis, axis=1) if basis.size else np.zeros(n)
    forced = frozenset(divmod(k, c.d) for k in range(n) if weight[k] <= FORCED_ZERO_TOL)
    antisym = []
    for i in range(c.d):
        for j in range(i + 1, c.d):
            row = np.zeros(n, dtype=complex)
            row[i * c.d + j], row[j * c.d + i] = 1, -1
            antisym.append(row)
    stacked = np.vstack([c.rows.reshape(-1, n)] + ([np.array(antisym)] if antisym else []))
    sym = _null_space(stacked, n, tol)
    return MPattern(c.d, basis, forced, bool(sym.shape[1] > 0))


def residual(c: ConstraintSet, a: np.ndarray) -> np.ndarray:
    """``||sum_ij row_ij A_i A_j||_F`` for each row."""
    d = c.d
    prods = np.einsum("iab,jbc->ijac", a, a).reshape(d * d, -1)
    return np.linalg.norm(c.rows @ prods, axis=1)


def _normalized(a: np.ndarray) -> np.ndarray:
    return a / max(np.linalg.norm(a, axis=(1, 2)))


def _objective(c: ConstraintSet, a: np.ndarray) -> float:
    return float(np.sum(residual(c, _normalized(a)) ** 2))


def d1_feasible(p: MPattern, seed: int = 42, starts: int = 32, max_iter: int = 5000) -> FactorizationResult:
    """Exact ``chi = 1`` test: is some ``a a^T`` (``a`` a nonzero vector) free?

    Decided exactly when the free space has dimension at most one; larger
    free spaces fall back to the multi-start descent and can only report
    Found or NotFound.
    """
    d = p.d
    if p.free_dim == 0:
        return FactorizationResult(Status.PROVED_IMPOSSIBLE, None, math.inf, 0, 1)
    if p.free_dim == 1:
        m = p.free_basis[:, 0].reshape(d, d)
        if np.linalg.norm(m - m.T) > 1e-10 * np.linalg.norm(m):
            return FactorizationResult(Status.PROVED_IMPOSSIBLE, None, math.inf, 0, 1)
        rank, _, _ = rank_factor(m, 1e-10)
        if rank != 1:
            return FactorizationResult(Status.PROVED_IMPOSSIBLE, None, math.inf, 0, 1)
        k = int(np.argmax(np.abs(np.diag(m))))
        vec = m[:, k] / np.sqrt(m[k, k])
        a = _normalized(vec.reshape(d, 1, 1))
        res = float(np.sum(residual(p.to_constraints(), a) ** 2))
        return FactorizationResult(Status.FOUND, a, res, 0, 1)
    return _descent(p.to_constraints(), 1, starts, seed, max_iter)


def _retract(a: np.ndarray) -> np.ndarray:
    """Nearest point with ``sum_i A_i A_i^H = 1`` (polar factor of ``[A_1 ... A_d]``)."""
    d, chi, _ = a.shape
    v = np.concatenate(list(a), axis=1)  # chi x d*chi
    u, _, wh = np.linalg.svd(v, full_matrices=False)
    v = u @ wh
    return np.stack([v[:, i * chi : (i + 1) * chi] for i in range(d)])


def _solve_right(r3: np.ndarray, left: np.ndarray, anchor: np.ndarray, mu: float) -> np.ndarray:
    # minimize sum_r ||sum_j C_rj Y_j||^2 + mu ||Y - anchor||^2,  C_rj = sum_i r_ij X_i
    d, chi, _ = left.shape
    c = np.einsum("rij,iab->rjab", r3, left)
    eye = np.eye(chi)
    lin = np.einsum("rjac,bd->rabjcd", c, eye).reshape(-1, d * chi * chi)
    return _prox_lstsq(lin, anchor.reshape(-1), mu).reshape(d, chi, chi)


def _solve_left(r3: np.ndarray, right: np.ndarray, anchor: np.ndarray, mu: float) -> np.ndarray:
    # minimize sum_r ||sum_i X_i D_ri||^2 + mu ||X - anchor||^2,  D_ri = sum_j r_ij Y_j
    d, chi, _ = right.shape
    dm = np.einsum("rij,jab->riab", r3, right)
    eye = np.eye(chi)
    lin = np.einsum("ac,ridb->rabicd", eye, dm).reshape(-1, d * chi * chi)
    return _prox_lstsq(lin, anchor.reshape(-1), mu).reshape(d, chi, chi)


def _prox_lstsq(lin: np.ndarray, anchor: np.ndarray, mu: float) -> np.ndarray:
    gram = lin.conj().T @ lin
    gram[np.diag_indices_from(gram)] += mu
    return np.linalg.solve(gram, mu * anchor)


def _als_sweeps(r3: np.ndarray, a: np.ndarray, c: ConstraintSet, sweeps: int) -> np.ndarray:
    """Proximal alternating least squares: solve for the right factors with
    the left ones frozen, then vice versa, and retract."""
    f = _objective(c, a)
    mu = 1.0
    for _ in range(sweeps):
        if f <= FOUND_TOL:
            break
        y = _solve_right(r3, a, a, mu)
        cand = _retract(_solve_left(r3, y, y, mu))
        fc = _objective(c, cand)
        if fc < f:
            a, f = cand, fc
            mu = max(mu / 3, 1e-12)
        else:
            mu = min(mu * 3, 1e12)
    return a


def _polish(r3: np.ndarray, a: np.ndarray, max_nfev: int) -> np.ndarray:
    """Trust-region least squares on the row residuals plus ``sum_i A_i A_i^H - 1``."""
    d, chi, _ = a.shape
    n = d * chi * chi
    eye = np.eye(chi)

    def unpack(x):
        return (x[:n] + 1j * x[n:]).reshape(d, chi, chi)

    def fun(x):
        a = unpack(x)
        f = np.einsum("rij,iab,jbc->rac", r3, a, a).reshape(-1)
        g = (np.einsum("iab,icb->ac", a, a.conj()) - eye).reshape(-1)
        out = np.concatenate([f.real, f.imag, g.real, g.imag])
        if out @ out <= STOP_TOL:
            # past this point steps wander along the solution set on round-off noise
            raise _Converged(x.copy())
        return out

    def jac(x):
        a = unpack(x)
        lf = np.einsum("rjac,bd->rabjcd", np.einsum("rij,iab->rjab", r3, a), eye)
        lf = (lf + np.einsum("ac,ridb->rabicd", eye, np.einsum("rij,jab->riab", r3, a))).reshape(-1, n)
        # d(sum A A^H)[p, q] for a unit change of A_i[s, b]: delta_ps conj(A_i[q, b]) + A_i[p, b] delta_qs
        t1 = np.einsum("ps,iqb->pqisb", eye, a.conj()).reshape(chi * chi, n)
        t2 = np.einsum("ipb,qs->pqisb", a, eye).reshape(chi * chi, n)
        lg_re, lg_im = t1 + t2, 1j * (t1 - t2)
        top = np.block([[lf.real, -lf.imag], [lf.imag, lf.real]])
        bottom = np.block([[lg_re.real, lg_im.real], [lg_re.imag, lg_im.imag]])
        return np.vstack([top, bottom])

    x0 = np.concatenate([a.reshape(-1).real, a.reshape(-1).imag])
    try:
        sol = least_squares(fun, x0, jac=jac, method=METHOD, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    except _Converged as done:
        return unpack(done.x)
    return unpack(sol.x)


class _Converged(Exception):
    def __init__(self, x: np.ndarray):
        super().__init__()
        self.x = x


def _isometry_defect(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.einsum("iab,icb->ac", a, a.conj()) - np.eye(a.shape[1])))


def _descent(
    c: ConstraintSet, chi: int, starts: int, seed: int, max_iter: int, warmup: int = 20
) -> FactorizationResult:
    """Multi-start search on ``sum_i A_i A_i^H = 1``: a few ALS sweeps, then
    a trust-region least-squares polish.  Starts use seeds ``seed + index``; the lowest
    residual wins, ties going to the earlier start."""
    d = c.d
    r3 = c.rows.reshape(-1, d, d)
    best_a, best_f = None, math.inf
    used = 0
    for start in range(starts):
        used += 1
        rng = np.random.default_rng(seed + start)
        a = rng.standard_normal((d, chi, chi)) + 1j * rng.standard_normal((d, chi, chi))
        a = _retract(a / np.linalg.norm(a))
        if r3.shape[0]:
            a = _als_sweeps(r3, a, c, warmup)
            a = _polish(r3, a, max_iter)
        if _isometry_defect(a) > 1e-8:
            a = _retract(a)  # keep the state away from the vanishing family
        f = _objective(c, a)
        if f < best_f:
            best_a, best_f = a, f
        if best_f <= FOUND_TOL:
            break
    if best_f <= FOUND_TOL:
        return FactorizationResult(Status.FOUND, _normalized(best_a), best_f, used, chi)
    return FactorizationResult(Status.NOT_FOUND, None, best_f, used, chi)


def factorize(
    c: ConstraintSet,
    chi: int,
    starts: int = 32,
    seed: int = 42,
    max_iter: int = 5000,
) -> FactorizationResult:
    """Search for ``chi x chi`` site matrices satisfying every row.

    Candidates are restricted to ``sum_i A_i A_i^H = 1`` so that the transfer
    matrix has spectral radius one; this excludes nilpotent families whose
    state vanishes on every long ring.  The reported matrices are rescaled so
    that ``max_i ||A_i||_F = 1`` and ``residual`` is the summed squared row
    residual at that scale.  ``chi = 1`` goes through :func:`d1_feasible`.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    if chi == 1:
        return d1_feasible(solve_linearized(c), seed=seed, starts=starts, max_iter=max_iter)
    return _descent(c, chi, starts, seed, max_iter)


def order_parameter_candidates(
    p1: MPattern,
    p2: MPattern,
    realizable: Sequence[bool] = (True, True),
) -> list[tuple[int, int]]:
    """Index pairs ``(a, b)`` with ``M_ab`` and ``M_ba`` both forced to zero in
    exactly one pattern while the other pattern leaves them free.

    ``realizable[i]`` states whether pattern ``i`` admits actual site
    matrices; a pair only qualifies when its free side is realizable, since
    otherwise the product ``A_a A_b`` is never nonzero in either region.
    """
    if p1.d != p2.d:
        raise ValueError("patterns must share the site dimension")
    out = []
    for a in range(p1.d):
        for b in range(a, p1.d):
            z1 = (a, b) in p1.forced_zero and (b, a) in p1.forced_zero
            z2 = (a, b) in p2.forced_zero and (b, a) in p2.forced_zero
            if z1 != z2 and realizable[0 if z2 else 1]:
                out.append((a, b))
    return out


def pair_operator(d: int, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """``sum |ab><ab|`` over the given index pairs (and their mirrors)."""
    op = np.zeros((d * d, d * d))
    for a, b in pairs:
        for i, j in {(a, b), (b, a)}:
            op[i * d + j, i * d + j] = 1.0
    return op
