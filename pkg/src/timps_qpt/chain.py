"""Finite chains assembled from a two-site block, solved exactly.

``H = sum_b h_b`` over the bonds of an open (``N - 1`` bonds) or periodic
(``N`` bonds) chain.  Since ``h >= alpha`` for every block, the ground energy
obeys ``E_g >= N_b alpha``; :func:`gap_scan` tabulates the excess
``E_g - N_b alpha`` along a parameter segment.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sps

from .localham import LocalHamiltonian, analyze
from .numerics import eigh, lanczos_ground

__all__ = [
    "TooLarge",
    "DEFAULT_CAP",
    "ChainSpec",
    "GroundResult",
    "GapRow",
    "assemble",
    "bond_operator",
    "ground",
    "gap_scan",
    "measure",
    "bond_profile",
]

DEFAULT_CAP = 3**12
DENSE_BELOW = 2000
SECTOR_DENSE_BELOW = 500  # per magnetization sector


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ChainSpec:
    N: int
    boundary: str
    local: LocalHamiltonian

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("chains need at least 3 sites")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.local.k != 2:
            raise ValueError("chains are built from two-site blocks")

    @property
    def d(self) -> int:
        return self.local.d

    @property
    def n_bonds(self) -> int:
        return self.N - 1 if self.boundary == "open" else self.N

    @property
    def bonds(self) -> list[tuple[int, int]]:
        return [(i, (i + 1) % self.N) for i in range(self.n_bonds)]


def _schmidt_terms(op: np.ndarray, d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # op[(a b), (a' b')] -> sum_k L_k[a, a'] R_k[b, b']
    t = op.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = np.linalg.svd(t)
    keep = s > 1e-14 * max(s[0], 1e-300) if s.size else []
    return [
        ((u[:, k] * s[k]).reshape(d, d), vh[k].reshape(d, d))
        for k in np.flatnonzero(keep)
    ]


def bond_operator(spec: ChainSpec, op: np.ndarray, bond: tuple[int, int], cap: int = DEFAULT_CAP) -> sps.csr_matrix:
    """Two-site ``op`` acting on sites ``bond = (i, j)``, first factor on ``i``."""
    d, n = spec.d, spec.N
    if d**n > cap:
        raise TooLarge(f"dimension {d}**{n} exceeds cap {cap}")
    i, j = bond
    out = sps.csr_matrix((d**n, d**n), dtype=complex)
    for left, right in _schmidt_terms(np.asarray(op, dtype=complex), d):
        factors = [sps.identity(d, format="csr", dtype=complex)] * n
        factors = list(factors)
        factors[i] = sps.csr_matrix(left)
        factors[j] = sps.csr_matrix(right)
        out = out + reduce(lambda x, y: sps.kron(x, y, format="csr"), factors)
    return out.tocsr()


def assemble(spec: ChainSpec, cap: int = DEFAULT_CAP) -> sps.csr_matrix:
    """Sparse chain Hamiltonian, ``sum_b h_b``."""
    d, n = spec.d, spec.N
    if d**n > cap:
        raise TooLarge(f"dimension {d}**{n} exceeds cap {cap}")
    h = sps.csr_matrix((d**n, d**n), dtype=complex)
    for bond in spec.bonds:
        h = h + bond_operator(spec, spec.local.matrix, bond, cap)
    h.eliminate_zeros()
    return h.tocsr()


@dataclass(frozen=True)
class GroundResult:
    spec: ChainSpec
    E_g: float
    ground_basis: np.ndarray  # orthonormal columns
    residuals: np.ndarray
    alpha: float
    values: np.ndarray  # all computed low-lying values

    @property
    def bound(self) -> float:
        """``N_b alpha``."""
        return self.spec.n_bonds * self.alpha

    @property
    def gap_above_bound(self) -> float:
        return self.E_g - self.bound

    @property
    def degeneracy(self) -> int:
        return self.ground_basis.shape[1]


def _magnetization_sectors(spec: ChainSpec) -> list[np.ndarray] | None:
    """Index sets of fixed total ``Sz`` when the block conserves it, else None."""
    d = spec.d
    sz = np.diag(np.arange(d - 1, -d, -2) / 2.0)  # descending m
    total = np.kron(sz, np.eye(d)) + np.kron(np.eye(d), sz)
    hm = spec.local.matrix
    if np.linalg.norm(hm @ total - total @ hm) > 1e-12 * max(1.0, np.linalg.norm(hm)):
        return None
    m = np.zeros(1)
    for _ in range(spec.N):
        m = (m[:, None] + np.diag(sz)[None, :]).ravel()
    key = np.round(2 * m).astype(int)
    return [np.flatnonzero(key == k) for k in np.unique(key)]


def _lowest(h, num_states: int, tol: float, seed: int, dense_below: int) -> tuple[np.ndarray, np.ndarray]:
    dim = h.shape[0]
    if dim < dense_below:
        return eigh(h.toarray())
    n = min(num_states, dim)
    while True:
        values, vectors = lanczos_ground(h, n, seed=seed)
        scale = max(1.0, abs(values[0]))
        if np.sum(values - values[0] <= tol * scale) < n or n == dim:
            return values, vectors
        n = min(2 * n, dim)


def ground(
    spec: ChainSpec,
    num_states: int = 4,
    tol: float = 1e-8,
    seed: int = 42,
    cap: int = DEFAULT_CAP,
    dense_below: int = DENSE_BELOW,
) -> GroundResult:
    """Ground energy and ground space of the chain.

    Levels within ``tol * max(1, |E_g|)`` of the lowest one are grouped into
    the ground space.  When the block conserves total ``Sz`` the chain is
    solved sector by sector.  On the sparse path the number of requested
    states is doubled for as long as all of them fall into the ground group.
    """
    h = assemble(spec, cap)
    dim = h.shape[0]
    sectors = _magnetization_sectors(spec) if dim >= dense_below else None
    if sectors is None:
        values, vectors = _lowest(h, num_states, tol, seed, dense_below)
    else:
        vals, vecs = [], []
        for idx in sectors:
            sv, sx = _lowest(h[idx][:, idx], num_states, tol, seed, min(dense_below, SECTOR_DENSE_BELOW))
            full = np.zeros((dim, sv.size), dtype=complex)
            full[idx] = sx
            vals.append(sv)
            vecs.append(full)
        values = np.concatenate(vals)
        order = np.argsort(values, kind="stable")
        values = values[order]
        vectors = np.hstack(vecs)[:, order]
    e_g = float(values[0])
    keep = values - e_g <= tol * max(1.0, abs(e_g))
    basis = vectors[:, keep]
    res = np.linalg.norm(h @ basis - basis * values[keep], axis=0)
    return GroundResult(
        spec=spec,
        E_g=e_g,
        ground_basis=basis,
        residuals=res,
        alpha=analyze(spec.local).alpha,
        values=np.asarray(values),
    )


def bond_profile(g: GroundResult, op: np.ndarray) -> np.ndarray:
    """Ground-space average of ``<op>`` on each bond."""
    v = g.ground_basis
    out = []
    for bond in g.spec.bonds:
        ob = bond_operator(g.spec, op, bond)
        out.append(float(np.real(np.sum(v.conj() * (ob @ v))) / v.shape[1]))
    return np.array(out)


def measure(g: GroundResult, op: np.ndarray) -> float:
    """Per-bond density ``Tr(P sum_b O_b) / (dim P * N_b)`` on the ground space."""
    return float(np.mean(bond_profile(g, op)))


class GapRow(NamedTuple):
    params: dict[str, float]
    N: int
    E_g: float
    bound: float
    gap: float


def gap_scan(
    family: Callable[[Mapping[str, float]], LocalHamiltonian],
    start: Mapping[str, float],
    end: Mapping[str, float],
    samples: int,
    N_list: Sequence[int],
    boundary: str = "open",
    threads: int = 1,
    seed: int = 42,
    cap: int = DEFAULT_CAP,
    tol: float = 1e-8,
) -> list[GapRow]:
    """``E_g - N_b alpha`` for every sample point and chain length.

    Rows are ordered by ``N`` then by position along the segment regardless
    of ``threads``.
    """
    ts = np.linspace(0.0, 1.0, samples) if samples > 1 else np.array([0.0])
    points = [{k: start[k] + t * (end[k] - start[k]) for k in start} for t in ts]

    def one(job: tuple[int, dict[str, float]]) -> GapRow:
        n, params = job
        spec = ChainSpec(n, boundary, family(params))
        res = ground(spec, tol=tol, seed=seed, cap=cap)
        return GapRow(params, n, res.E_g, res.bound, res.gap_above_bound)

    jobs = [(n, p) for n in N_list for p in points]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, jobs))
    return [one(job) for job in jobs]
