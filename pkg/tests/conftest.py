"""Independent oracles shared by the test modules.

Nothing here calls into the package: matrices are written out by hand so the
tests compare two separate constructions.
"""

import math

import numpy as np
import pytest

MS = (1, 0, -1)  # basis order, descending magnetization
S2 = math.sqrt(2.0)

# spin-1 matrices written out explicitly
SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]) / S2
SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]]) / S2
SZ = np.diag([1.0, 0.0, -1.0])


def flat(m1: int, m2: int) -> int:
    return 3 * MS.index(m1) + MS.index(m2)


def xxz_oracle(jz: float, d: float) -> np.ndarray:
    """XXZ-D two-site block entry by entry, on-site term on the left site."""
    h = np.zeros((9, 9))
    for m1 in MS:
        for m2 in MS:
            i = flat(m1, m2)
            h[i, i] = jz * m1 * m2 + d * m1 * m1
            # (S+S- + S-S+)/2 moves one unit of magnetization with amplitude 1 at spin 1
            for dm in (1, -1):
                n1, n2 = m1 + dm, m2 - dm
                if n1 in MS and n2 in MS:
                    h[flat(n1, n2), i] = 1.0
    return h


def closed_form(jz: float, d: float) -> dict:
    root = math.sqrt(jz * jz - 2 * jz * d + d * d + 8)
    rd = math.sqrt(d * d + 4)
    return {
        "e1": jz + d,
        "e2": (-jz + d + root) / 2,
        "e3": (-jz + d - root) / 2,
        "e4": -jz + d,
        "e5": (d + rd) / 2,
        "e6": (d - rd) / 2,
    }


def _row(coeffs: dict) -> np.ndarray:
    r = np.zeros(9, dtype=complex)
    for (m1, m2), c in coeffs.items():
        r[flat(m1, m2)] += c
    return r


def published_rows(jz: float, d: float, region: int) -> np.ndarray:
    """Equation sets for the two regions as printed in the source material."""
    e = closed_form(jz, d)
    rows = []
    if region == 1:
        rows += [_row({(1, 1): 1}), _row({(-1, -1): 1})]
    rows.append(_row({(1, -1): 1, (0, 0): -e["e3"], (-1, 1): 1}))
    if region == 2:
        rows.append(_row({(1, -1): 1, (0, 0): -e["e2"], (-1, 1): 1}))
    rows += [
        _row({(1, -1): 1, (-1, 1): -1}),
        _row({(0, -1): e["e6"], (-1, 0): -1}),
        _row({(1, 0): e["e5"], (0, 1): 1}),
        _row({(0, -1): e["e5"], (-1, 0): -1}),
        _row({(1, 0): e["e6"], (0, 1): 1}),
    ]
    return np.array(rows)


def row_space_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance between the orthogonal projectors onto the row spaces."""

    def proj(rows):
        u, s, _ = np.linalg.svd(np.asarray(rows).conj().T, full_matrices=False)
        u = u[:, s > 1e-12 * max(s.max(initial=0), 1e-300)]
        return u @ u.conj().T

    return float(np.linalg.norm(proj(a) - proj(b)))


def heisenberg_block() -> np.ndarray:
    return sum(np.kron(s, s) for s in (SX, SY, SZ))


def spin2_projector() -> np.ndarray:
    """For two spin-1 sites S.S has eigenvalues -2, -1, 1 (total spin 0, 1, 2);
    the Lagrange polynomial through them picks out total spin 2."""
    x = heisenberg_block()
    return (x @ x + 3 * x + 2 * np.eye(9)) / 6


def aklt_matrices() -> np.ndarray:
    ap = math.sqrt(2 / 3) * np.array([[0, 1], [0, 0]])
    a0 = -math.sqrt(1 / 3) * np.diag([1, -1])
    am = -math.sqrt(2 / 3) * np.array([[0, 0], [1, 0]])
    return np.array([ap, a0, am], dtype=complex)


def ghz_matrices() -> np.ndarray:
    return np.array([np.diag([1, 0]), np.zeros((2, 2)), np.diag([0, 1])], dtype=complex)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def well_conditioned(rng: np.random.Generator, n: int, cond: float = 10.0) -> np.ndarray:
    """Random complex matrix with condition number at most ``cond``."""
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    s = rng.uniform(1.0, cond, n)
    s[0], s[-1] = 1.0, cond
    return q1 @ np.diag(s) @ q2


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
