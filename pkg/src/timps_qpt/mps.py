"""Translationally invariant matrix product states on a ring.

Everything is expressed through traces of products of ``chi^2 x chi^2``
transfer-type matrices ``sum_ij c_ij A_i (x) conj(A_j)``, so all observables
are manifestly invariant under the gauge ``A_i -> S A_i S^-1``.

Thermodynamic-limit quantities use the spectral projector ``P`` onto the
eigenspace of the dominant transfer eigenvalue ``lambda``:
``<X> = Tr(X P) / (lambda^k Tr P)``.  For injective states ``P`` has rank
one; otherwise the result is the uniform mixture over the dominant sectors
and :class:`NonInjectiveWarning` is emitted.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .localham import LocalHamiltonian
from .models import ParseError
from .numerics import nullspace

__all__ = [
    "ZeroState",
    "ZeroNorm",
    "EmptyNullSpace",
    "NonInjectiveWarning",
    "XiStatus",
    "THERMODYNAMIC",
    "TIMPS",
    "TransferMatrix",
    "transfer_matrix",
    "correlation_length",
    "reduced_density",
    "parent_hamiltonian",
    "energy",
    "local_expectation",
    "bond_sum",
    "two_point",
    "load_timps",
    "dump_timps",
]

THERMODYNAMIC = "thermodynamic"
DEGENERACY_RTOL = 1e-10


class ZeroState(ValueError):
    pass


class ZeroNorm(ValueError):
    pass


class EmptyNullSpace(ValueError):
    pass


class NonInjectiveWarning(UserWarning):
    pass


class XiStatus(enum.Enum):
    DIVERGENT = "Divergent"
    NO_SECOND_EIGENVALUE = "NoSecondEigenvalue"


@dataclass(frozen=True)
class TIMPS:
    """``d`` site matrices ``A[i]`` of size ``chi x chi``."""

    A: np.ndarray  # shape (d, chi, chi)

    def __post_init__(self):
        a = np.asarray(self.A, dtype=complex)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ValueError(f"expected shape (d, chi, chi), got {a.shape}")
        object.__setattr__(self, "A", a)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def chi(self) -> int:
        return self.A.shape[1]

    def gauge(self, s: np.ndarray) -> "TIMPS":
        return TIMPS(s @ self.A @ np.linalg.inv(s))

    def word(self, indices: Sequence[int]) -> np.ndarray:
        out = np.eye(self.chi, dtype=complex)
        for i in indices:
            out = out @ self.A[i]
        return out

    def state(self, n: int) -> np.ndarray:
        """Normalized coefficient vector on an ``n``-site ring (small ``n`` only)."""
        coeffs = np.array([np.trace(self.word(idx)) for idx in product(range(self.d), repeat=n)])
        norm = np.linalg.norm(coeffs)
        if norm <= 1e-150:
            raise ZeroNorm(f"state vanishes on the {n}-site ring")
        return coeffs / norm


@dataclass(frozen=True)
class TransferMatrix:
    E: np.ndarray
    spectrum: np.ndarray  # sorted by descending modulus

    @property
    def radius(self) -> float:
        return float(abs(self.spectrum[0]))

    @cached_property
    def dominant_projector(self) -> np.ndarray:
        """Spectral projector onto the eigenspace of the leading eigenvalue."""
        lam = self.spectrum[0]
        vals, right = np.linalg.eig(self.E)
        left = np.linalg.inv(right)
        keep = np.abs(vals - lam) <= DEGENERACY_RTOL * max(abs(lam), 1e-300) * 1e3
        return right[:, keep] @ left[keep, :]

    @property
    def injective(self) -> bool:
        """Unique eigenvalue of largest modulus."""
        if self.spectrum.size < 2:
            return True
        return abs(self.spectrum[1]) < (1 - DEGENERACY_RTOL) * abs(self.spectrum[0])


def _doubled(m: TIMPS, coeff: np.ndarray) -> np.ndarray:
    """``sum_ij coeff[i, j] A_i (x) conj(A_j)``."""
    a, ac = m.A, m.A.conj()
    return np.einsum("ij,iab,jcd->acbd", coeff, a, ac).reshape(m.chi**2, m.chi**2)


def transfer_matrix(m: TIMPS) -> TransferMatrix:
    if not np.any(m.A):
        raise ZeroState("all site matrices vanish")
    e = _doubled(m, np.eye(m.d))
    vals = np.linalg.eigvals(e)
    order = np.lexsort((-vals.real, -np.abs(np.round(vals, 12))))
    return TransferMatrix(E=e, spectrum=vals[order])


def correlation_length(t: TransferMatrix) -> float | XiStatus:
    """``1 / log|v1/v2|`` from the two leading transfer eigenvalues."""
    if t.radius == 0.0:
        raise ZeroState("transfer matrix is nilpotent")
    if t.spectrum.size < 2:
        return XiStatus.NO_SECOND_EIGENVALUE
    v1, v2 = abs(t.spectrum[0]), abs(t.spectrum[1])
    if v1 - v2 <= 1e-10 * v1:
        return XiStatus.DIVERGENT
    if v2 <= 1e-14 * v1:
        return XiStatus.NO_SECOND_EIGENVALUE
    return float(1.0 / np.log(v1 / v2))


def _ring_weight(m: TIMPS, k: int, n: int | str) -> tuple[np.ndarray, complex]:
    """``(R, z)`` such that the expectation of a ``k``-site operator with
    doubled block ``X`` is ``Tr(X R) / z``."""
    t = transfer_matrix(m)
    lam = t.spectrum[0]
    if lam == 0:
        raise ZeroNorm("transfer matrix is nilpotent")
    if n == THERMODYNAMIC:
        if not t.injective:
            warnings.warn(
                "dominant transfer eigenvalue is degenerate; using the uniform mixture "
                "over dominant sectors",
                NonInjectiveWarning,
                stacklevel=3,
            )
        p = t.dominant_projector
        return p, lam**k * np.trace(p)
    n = int(n)
    if n < k + 1:
        raise ValueError(f"ring of {n} sites too short for a {k}-site block")
    e_scaled = t.E / lam
    z = np.trace(np.linalg.matrix_power(e_scaled, n))
    if abs(z) <= 1e-250 or np.log(abs(z)) + n * np.log(abs(lam)) < np.log(1e-300):
        raise ZeroNorm(f"Tr(E^{n}) vanishes")
    return np.linalg.matrix_power(e_scaled, n - k), lam**k * z


def _block_operator(m: TIMPS, op: np.ndarray, k: int) -> np.ndarray:
    """Doubled block ``sum_{I,J} op[J, I] W_I (x) conj(W_J)`` over k-site words ``W``."""
    chi = m.chi
    w = np.array([m.word(idx) for idx in product(range(m.d), repeat=k)])
    return np.einsum("ji,iab,jcd->acbd", op, w, w.conj()).reshape(chi**2, chi**2)


def reduced_density(m: TIMPS, k: int, n: int | str = THERMODYNAMIC) -> np.ndarray:
    """``k``-site reduced density matrix on a ring of ``n`` sites or in the limit.

    Entry ``(I, J)`` is ``<I| rho |J>``.  Emits :class:`NonInjectiveWarning`
    in the thermodynamic limit when the leading transfer eigenvalue is
    degenerate.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    chi = m.chi
    words = np.array([m.word(idx) for idx in product(range(m.d), repeat=k)])
    weight, z = _ring_weight(m, k, n)
    # Tr((W_I (x) conj W_J) R) with R indexed as R[(b, d), (a, c)]
    r4 = weight.reshape(chi, chi, chi, chi)
    rho = np.einsum("iab,jcd,bdac->ij", words, words.conj(), r4) / z
    return 0.5 * (rho + rho.conj().T)


def parent_hamiltonian(
    m: TIMPS, k: int = 2, weights: Sequence[float] | None = None, tol: float = 1e-10
) -> LocalHamiltonian:
    """``sum_i a_i |v_i><v_i|`` over an orthonormal basis of ``ker rho^(k)``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonInjectiveWarning)
        rho = reduced_density(m, k)
    null = nullspace(rho, tol)
    r = null.shape[1]
    if r == 0:
        raise EmptyNullSpace(f"rho^({k}) has full rank; try a larger k")
    a = np.ones(r) if weights is None else np.asarray(weights, dtype=float)
    if a.shape != (r,) or np.any(a <= 0):
        raise ValueError(f"need {r} positive weights")
    h = (null * a) @ null.conj().T
    return LocalHamiltonian(d=m.d, k=k, matrix=0.5 * (h + h.conj().T))


def local_expectation(m: TIMPS, op: np.ndarray, n: int | str = THERMODYNAMIC) -> float:
    """Per-bond expectation of a two-site operator (``d^2 x d^2``)."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (m.d**2, m.d**2):
        raise ValueError("expected a two-site operator")
    if n != THERMODYNAMIC and int(n) < 3:
        raise ValueError("ring must have at least 3 sites")
    weight, z = _ring_weight(m, 2, n)
    return float((np.trace(_block_operator(m, op, 2) @ weight) / z).real)


def bond_sum(m: TIMPS, op: np.ndarray, n: int) -> float:
    """Extensive sum of a two-site operator over all ``n`` bonds of the ring."""
    return n * local_expectation(m, op, n)


def energy(m: TIMPS, h: LocalHamiltonian, n: int) -> float:
    """``<Psi| sum_i h_{i,i+1} |Psi> / <Psi|Psi>`` on an ``n``-site ring."""
    if h.k != 2:
        raise ValueError("energy needs a two-site block")
    if n < 3:
        raise ValueError("ring must have at least 3 sites")
    return bond_sum(m, h.matrix, n)


def two_point(m: TIMPS, op_a: np.ndarray, op_b: np.ndarray, r: int) -> float:
    """Connected ``<A_0 B_r> - <A><B>`` in the thermodynamic limit."""
    if r < 1:
        raise ValueError("r must be >= 1")
    t = transfer_matrix(m)
    lam = t.spectrum[0]
    env, z1 = _ring_weight(m, 1, THERMODYNAMIC)
    ea = _doubled(m, np.asarray(op_a, dtype=complex).T)
    eb = _doubled(m, np.asarray(op_b, dtype=complex).T)
    between = np.linalg.matrix_power(t.E / lam, r - 1)
    joint = np.trace(ea @ between @ eb @ env) / (lam * z1)
    mean_a = np.trace(ea @ env) / z1
    mean_b = np.trace(eb @ env) / z1
    return float((joint - mean_a * mean_b).real)


def _parse_matrix(raw: Any, chi: int, where: str) -> np.ndarray:
    entries = raw
    if isinstance(raw, list) and len(raw) == chi and all(
        isinstance(row, list) and len(row) == chi and all(isinstance(e, list) for e in row) for row in raw
    ):
        entries = [e for row in raw for e in row]  # nested rows also accepted
    if not isinstance(entries, list) or len(entries) != chi * chi:
        raise ParseError(f"expected {chi * chi} complex entries", where)
    out = np.empty(chi * chi, dtype=complex)
    for n, e in enumerate(entries):
        if isinstance(e, (int, float)) and not isinstance(e, bool):
            out[n] = e
        elif (
            isinstance(e, list)
            and len(e) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in e)
        ):
            out[n] = complex(e[0], e[1])
        else:
            raise ParseError("entry must be a number or a [re, im] pair", f"{where}[{n}]")
    return out.reshape(chi, chi)


def load_timps(source: str | Path | dict) -> TIMPS:
    """Read a TIMPS document ``{"d", "chi", "matrices"}`` from a path, text or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("TIMPS document must be a JSON object", "$")
    for key in ("d", "chi", "matrices"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}", "$")
    d, chi = doc["d"], doc["chi"]
    if not (isinstance(d, int) and d >= 1 and isinstance(chi, int) and chi >= 1):
        raise ParseError("'d' and 'chi' must be positive integers", "$")
    mats = doc["matrices"]
    if not isinstance(mats, list) or len(mats) != d:
        raise ParseError(f"expected {d} matrices", "$.matrices")
    return TIMPS(np.array([_parse_matrix(raw, chi, f"$.matrices[{i}]") for i, raw in enumerate(mats)]))


def dump_timps(m: TIMPS) -> str:
    mats = [[[float(z.real), float(z.imag)] for z in a.reshape(-1)] for a in m.A]
    lines = ["{", f'  "d": {m.d},', f'  "chi": {m.chi},', '  "matrices": [']
    lines += ["    " + json.dumps(mat) + ("," if i < m.d - 1 else "") for i, mat in enumerate(mats)]
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"
