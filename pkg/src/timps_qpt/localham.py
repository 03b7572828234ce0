"""Local interaction blocks: construction, spectral analysis, level crossings.

A local Hamiltonian is a Hermitian ``d**k x d**k`` matrix acting on ``k``
neighbouring sites.  :func:`analyze` splits it into its smallest eigenvalue
``alpha`` and a positive-semidefinite remainder built from the excluded
eigenvectors.  :func:`crossing_scan` walks a straight segment in parameter
space and locates points where the ground eigenspace changes identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .numerics import EigenDecomposition, NotHermitian, as_hermitian, eigh

__all__ = [
    "InvalidSpin",
    "UnknownToken",
    "NonHermitianSpec",
    "StepTooLarge",
    "TOKENS",
    "SpinOperators",
    "LocalHamiltonian",
    "SpectralData",
    "CrossingPoint",
    "Term",
    "spin_operators",
    "build_local",
    "analyze",
    "ground_projector",
    "projector_jump",
    "crossing_scan",
    "alpha_derivative_jump",
]

TOKENS = ("Sx", "Sy", "Sz", "Sz2", "Sp", "Sm", "I")
JUMP_THRESHOLD = 1e-3


class InvalidSpin(ValueError):
    pass


class UnknownToken(ValueError):
    pass


class NonHermitianSpec(ValueError):
    pass


class StepTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SpinOperators:
    s: float
    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray
    Sp: np.ndarray
    Sm: np.ndarray
    Sz2: np.ndarray
    I: np.ndarray

    @property
    def d(self) -> int:
        return self.I.shape[0]

    @property
    def labels(self) -> tuple[float, ...]:
        """Magnetization of each basis state, descending."""
        return tuple(self.s - n for n in range(self.d))

    def token(self, name: str) -> np.ndarray:
        """Single-site operator for a token, or a ``*``-separated product."""
        out = self.I
        for part in name.split("*"):
            part = part.strip()
            if part not in TOKENS:
                raise UnknownToken(f"unknown operator token {part!r}")
            out = out @ getattr(self, part)
        return out


def spin_operators(s: float) -> SpinOperators:
    """Spin-``s`` matrices in the basis ``|s>, |s-1>, ..., |-s>``."""
    two_s = 2 * s
    if two_s < 0 or abs(two_s - round(two_s)) > 1e-12:
        raise InvalidSpin(f"spin must be a non-negative half-integer, got {s}")
    s = round(two_s) / 2
    m = s - np.arange(round(two_s) + 1)
    # <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
    sp = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), 1).astype(complex)
    sm = sp.conj().T
    sz = np.diag(m).astype(complex)
    return SpinOperators(
        s=s,
        Sx=0.5 * (sp + sm),
        Sy=-0.5j * (sp - sm),
        Sz=sz,
        Sp=sp,
        Sm=sm,
        Sz2=sz @ sz,
        I=np.eye(len(m), dtype=complex),
    )


@dataclass(frozen=True)
class Term:
    """``coeff * (ops[0] (x) ops[1] (x) ...)``; ``coeff`` is a number or a
    ``(param_name, scale)`` pair."""

    coeff: float | complex | tuple[str, float]
    ops: tuple[str, ...]

    def value(self, params: Mapping[str, float]) -> complex:
        if isinstance(self.coeff, tuple):
            name, scale = self.coeff
            if name not in params:
                raise KeyError(f"missing parameter {name!r}")
            return scale * params[name]
        return self.coeff


@dataclass(frozen=True)
class LocalHamiltonian:
    d: int
    k: int
    matrix: np.ndarray
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape != (self.d**self.k, self.d**self.k):
            raise ValueError("matrix dimension must be d**k")


def build_local(
    terms: Sequence[Term],
    params: Mapping[str, float],
    spin: float = 1.0,
    k: int = 2,
    onsite_split: str = "left",
) -> LocalHamiltonian:
    """Assemble a ``k``-site block from a list of operator-product terms.

    With ``onsite_split="symmetric"`` every term that acts non-trivially on a
    single slot is averaged over all ``k`` slots instead of staying on the
    slot it was written for.
    """
    if onsite_split not in ("left", "symmetric"):
        raise ValueError(f"onsite_split must be 'left' or 'symmetric', got {onsite_split!r}")
    ops = spin_operators(spin)
    d = ops.d
    h = np.zeros((d**k, d**k), dtype=complex)
    for term in terms:
        if len(term.ops) != k:
            raise ValueError(f"term {term.ops} has {len(term.ops)} slots, expected {k}")
        mats = [ops.token(t) for t in term.ops]
        c = term.value(params)
        nontrivial = [i for i, t in enumerate(term.ops) if t != "I"]
        if onsite_split == "symmetric" and len(nontrivial) == 1:
            single = mats[nontrivial[0]]
            for slot in range(k):
                placed = [ops.I] * k
                placed[slot] = single
                h += (c / k) * _kron_all(placed)
        else:
            h += c * _kron_all(mats)
    try:
        h = as_hermitian(h)
    except NotHermitian as exc:
        raise NonHermitianSpec(str(exc)) from None
    return LocalHamiltonian(d=d, k=k, matrix=h, params=dict(params))


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@dataclass(frozen=True)
class SpectralData:
    decomposition: EigenDecomposition
    alpha: float
    g: int
    d: int
    k: int

    @property
    def ground(self) -> np.ndarray:
        return self.decomposition.vectors[:, : self.g]

    @property
    def excluded(self) -> np.ndarray:
        """Eigenvectors with eigenvalue above ``alpha``, as columns."""
        return self.decomposition.vectors[:, self.g :]

    @property
    def shifted(self) -> np.ndarray:
        vals = self.decomposition.values[self.g :] - self.alpha
        ex = self.excluded
        return (ex * vals) @ ex.conj().T


def analyze(h: LocalHamiltonian, tol: float = 1e-9) -> SpectralData:
    """Smallest eigenvalue, its degeneracy and the shifted block ``h - alpha``."""
    dec = eigh(h.matrix)
    alpha = float(dec.values[0])
    g = int(np.sum(dec.values - alpha <= tol * max(1.0, abs(alpha))))
    return SpectralData(decomposition=dec, alpha=alpha, g=g, d=h.d, k=h.k)


def ground_projector(spec: SpectralData) -> np.ndarray:
    v = spec.ground
    return v @ v.conj().T


def projector_jump(p: np.ndarray, q: np.ndarray) -> float:
    """Squared Frobenius distance of trace-normalized ground projectors.

    Equals ``2 - 2 Tr(PQ)/sqrt(rank P rank Q)``: 0 for identical ground
    spaces, 2 for orthogonal ones.
    """
    gp = np.trace(p).real
    gq = np.trace(q).real
    dist = float(np.linalg.norm(p / math.sqrt(gp) - q / math.sqrt(gq)) ** 2)
    return min(2.0, max(0.0, dist))  # clip round-off


@dataclass(frozen=True)
class CrossingPoint:
    t: float
    params: dict[str, float]
    g_at_crossing: int
    jump: float
    gap: float


Family = Callable[[Mapping[str, float]], LocalHamiltonian]


def _point(start: Mapping[str, float], end: Mapping[str, float], t: float) -> dict[str, float]:
    return {key: start[key] + t * (end[key] - start[key]) for key in start}


def _golden_min(f: Callable[[float], float], a: float, b: float, width: float) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def crossing_scan(
    family: Family,
    start: Mapping[str, float],
    end: Mapping[str, float],
    samples: int = 101,
    tol: float = 1e-6,
    deg_tol: float = 1e-9,
    width: float = 1e-10,
) -> list[CrossingPoint]:
    """Locate level crossings of the smallest eigenvalue along a segment.

    The segment is ``start + t (end - start)``, ``t`` in [0, 1].  Sample
    intervals over which the ground eigenspace changes are bracketed; inside
    a bracket whose end points have ground degeneracies ``gL`` and ``gR`` the
    gap ``lambda_{gL+gR} - lambda_1`` vanishes exactly at the crossing and is
    minimized by golden-section search down to ``width`` in ``t``.  A
    candidate is kept when the minimized gap is below ``tol`` (relative to
    ``max(1, ||h||_2)``) and the ground projector jumps across it.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if set(start) != set(end):
        raise ValueError("start and end must name the same parameters")
    ts = np.linspace(0.0, 1.0, samples)
    specs = [analyze(family(_point(start, end, t)), deg_tol) for t in ts]
    projs = [ground_projector(s) for s in specs]
    changed = [projector_jump(projs[i], projs[i + 1]) > JUMP_THRESHOLD for i in range(samples - 1)]

    brackets: list[tuple[int, int]] = []
    i = 0
    while i < samples - 1:
        if not changed[i]:
            i += 1
            continue
        lo, hi = i, i + 1
        # a sample sitting on the crossing differs from both neighbours
        if hi < samples - 1 and changed[hi] and specs[hi].g > max(specs[lo].g, specs[hi + 1].g):
            hi += 1
        brackets.append((lo, hi))
        i = hi

    found: list[CrossingPoint] = []
    for lo, hi in brackets:
        n = min(specs[lo].g + specs[hi].g, specs[lo].decomposition.values.size)

        def gap(t: float) -> float:
            vals = eigh(family(_point(start, end, t)).matrix).values
            return float(vals[n - 1] - vals[0])

        t_star = _golden_min(gap, float(ts[lo]), float(ts[hi]), width)
        h_star = family(_point(start, end, t_star))
        scale = max(1.0, float(np.linalg.norm(h_star.matrix, 2)))
        g_min = gap(t_star)
        if g_min > tol * scale:
            continue  # avoided crossing
        vals = eigh(h_star.matrix).values
        g_at = int(np.sum(vals - vals[0] <= tol * scale))
        delta = min(1e-6, 0.5 * (t_star - ts[lo]), 0.5 * (ts[hi] - t_star))
        delta = max(delta, 10 * width)
        left = ground_projector(analyze(family(_point(start, end, t_star - delta)), deg_tol))
        right = ground_projector(analyze(family(_point(start, end, t_star + delta)), deg_tol))
        jump = projector_jump(left, right)
        if jump <= JUMP_THRESHOLD or g_at < 2:
            continue
        if found and abs(found[-1].t - t_star) <= 1e-8:
            continue
        found.append(
            CrossingPoint(
                t=t_star,
                params=_point(start, end, t_star),
                g_at_crossing=g_at,
                jump=jump,
                gap=g_min,
            )
        )
    return found


def alpha_derivative_jump(
    family: Family,
    crossing: CrossingPoint,
    direction: Mapping[str, float],
    step: float = 1e-4,
    deg_tol: float = 1e-9,
) -> float:
    """``|slope_+ - slope_-|`` of the smallest eigenvalue across a crossing.

    One-sided second-order finite differences are taken along ``direction``
    (normalized internally).  Raises :class:`StepTooLarge` if the ground
    eigenspace is not constant over either one-sided stencil.
    """
    norm = math.sqrt(sum(v * v for v in direction.values()))
    if norm == 0:
        raise ValueError("direction must be non-zero")
    unit = {key: v / norm for key, v in direction.items()}
    base = dict(crossing.params)

    def at(s: float) -> SpectralData:
        p = dict(base)
        for key, v in unit.items():
            p[key] = p.get(key, 0.0) + s * v
        return analyze(family(p), deg_tol)

    a0 = at(0.0).alpha
    slopes = []
    for sign in (1.0, -1.0):
        s1, s2 = at(sign * step), at(sign * 2 * step)
        if projector_jump(ground_projector(s1), ground_projector(s2)) > JUMP_THRESHOLD:
            raise StepTooLarge(f"another crossing lies within {2 * step} of the point")
        slopes.append(sign * (-3 * a0 + 4 * s1.alpha - s2.alpha) / (2 * step))
    return abs(slopes[0] - slopes[1])
