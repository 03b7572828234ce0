"""Acceptance gate.

Each criterion is a function returning ``(ok, detail)``.  Under pytest every
criterion prints one ``PASS``/``FAIL`` line and then asserts; running this
file directly prints the same lines for all criteria.
"""

import math
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sps

from conftest import (
    aklt_matrices,
    closed_form,
    published_rows,
    random_hermitian,
    row_space_distance,
    spin2_projector,
    well_conditioned,
)
from timps_qpt.chain import ChainSpec, assemble, bond_operator, gap_scan, ground, measure
from timps_qpt.constraints import (
    Status,
    build_constraints,
    factorize,
    order_parameter_candidates,
    pair_operator,
    solve_linearized,
)
from timps_qpt.localham import LocalHamiltonian, analyze, crossing_scan
from timps_qpt.models import AKLT, XXZ_D, aklt, xxz_d, xxz_d_spectrum
from timps_qpt.mps import (
    TIMPS,
    correlation_length,
    energy,
    local_expectation,
    parent_hamiltonian,
    reduced_density,
    transfer_matrix,
    two_point,
)
from timps_qpt.numerics import eigh, lanczos_ground

FERRO = pair_operator(3, [(0, 0), (2, 2)])  # O_11 + O_-1-1
PLUS, MINUS = 0, 2  # basis indices of m = +1 and m = -1


def criterion_1():
    """Boundary: scanned crossings vs (-D - sqrt(D^2 + 4)) / 2 within 1e-8, under 5 s."""
    t0 = time.perf_counter()
    worst = 0.0
    for d in (-1.0, 0.0, 1.0, 2.0, 3.0):
        found = crossing_scan(XXZ_D.family(), {"Jz": -6.0, "D": d}, {"Jz": 2.0, "D": d}, samples=81)
        if not found:
            return False, f"no crossing at D={d}"
        jz = min(found, key=lambda c: c.params["Jz"]).params["Jz"]
        worst = max(worst, abs(jz - (-d - math.sqrt(d * d + 4)) / 2))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-8 and elapsed < 5.0, f"max |diff| = {worst:.2e}, {elapsed:.2f} s"


def criterion_2():
    """Open-chain gap E_g - (N-1) alpha along Jz in [-2, 0] at D = 0 for N = 8, 10."""
    notes, ok = [], True
    for n in (8, 10):
        t0 = time.perf_counter()
        rows = gap_scan(XXZ_D.family(), {"Jz": -2.0, "D": 0.0}, {"Jz": 0.0, "D": 0.0}, samples=21, N_list=[n])
        near = ground(ChainSpec(n, "open", xxz_d(-0.99, 0.0))).gap_above_bound
        elapsed = time.perf_counter() - t0
        flat = max(r.gap for r in rows if r.params["Jz"] <= -1.05 + 1e-12)
        raised = min(r.gap for r in rows if r.params["Jz"] >= -0.9 - 1e-12)
        at_zero = rows[-1].gap
        good = flat <= 1e-8 and raised >= 1e-2 and near < at_zero and (n != 10 or elapsed < 600)
        ok &= good
        notes.append(
            f"N={n}: max gap(Jz<=-1.05)={flat:.1e}, min gap(Jz>=-0.9)={raised:.3f}, "
            f"gap(-0.99)={near:.4f} < gap(0)={at_zero:.4f}, {elapsed:.0f} s"
        )
    return ok, "; ".join(notes)


def criterion_3():
    """Equation sets at (0, 0) and (-2, 0) equal the published row spaces within 1e-10."""
    r1 = build_constraints(analyze(xxz_d(0.0, 0.0))).rows
    r2 = build_constraints(analyze(xxz_d(-2.0, 0.0))).rows
    d1 = row_space_distance(r1, published_rows(0.0, 0.0, region=1))
    d2 = row_space_distance(r2, published_rows(-2.0, 0.0, region=2))
    unit = np.zeros(9)
    unit[0] = 1.0  # M_11 = 0
    d11 = row_space_distance(np.vstack([r1, unit]), r1)
    ok = r1.shape[0] == 8 and r2.shape[0] == 7 and max(d1, d2, d11) <= 1e-10
    return ok, f"R1 {r1.shape[0]} rows (dist {d1:.1e}, M_11 {d11:.1e}), R2 {r2.shape[0]} rows (dist {d2:.1e})"


def criterion_4():
    """Forced-zero pattern, factorization statuses and order-parameter candidates."""
    c1 = build_constraints(analyze(xxz_d(0.0, 0.0)))
    c2 = build_constraints(analyze(xxz_d(-2.0, 0.0)))
    p1, p2 = solve_linearized(c1), solve_linearized(c2)
    everything = {(a, b) for a in range(3) for b in range(3)}
    pattern_ok = p2.forced_zero == everything - {(PLUS, PLUS), (MINUS, MINUS)}
    found = factorize(c2, 2)
    r2_ok = found.status is Status.FOUND and found.residual <= 1e-15
    r1 = {1: factorize(c1, 1).status}
    for chi in (2, 3, 4):
        r1[chi] = factorize(c1, chi, starts=32).status
    r1_ok = r1[1] is Status.PROVED_IMPOSSIBLE and all(r1[c] is Status.NOT_FOUND for c in (2, 3, 4))
    realizable = (any(s is Status.FOUND for s in r1.values()), r2_ok)
    cands = order_parameter_candidates(p1, p2, realizable=realizable)
    cand_ok = set(cands) == {(PLUS, PLUS), (MINUS, MINUS)}
    statuses = ", ".join(f"chi={c}: {s.value}" for c, s in r1.items())
    labels = [tuple((1, 0, -1)[i] for i in pair) for pair in cands]
    return (
        pattern_ok and r2_ok and r1_ok and cand_ok,
        f"R2 free pairs ok={pattern_ok}, R2 chi=2 {found.status.value} (f={found.residual:.1e}); "
        f"R1 {statuses}; candidates {labels}",
    )


def _dense_ferro_density(jz):
    spec = ChainSpec(6, "open", xxz_d(jz, 0.0))
    vals, vecs = np.linalg.eigh(assemble(spec).toarray())
    p = vecs[:, vals - vals[0] <= 1e-8 * max(1.0, abs(vals[0]))]
    total = sum(bond_operator(spec, FERRO, b).toarray() for b in spec.bonds)
    return np.trace(p.conj().T @ total @ p).real / (p.shape[1] * spec.n_bonds), spec


def criterion_5():
    """Order parameter O_11 + O_-1-1: >= 0.999 at Jz = -2, <= 0.3 at Jz = 0 (N = 8, dense N = 6 first)."""
    oracle_ok, notes = True, []
    for jz in (-2.0, 0.0):
        dense, spec = _dense_ferro_density(jz)
        ours = measure(ground(spec), FERRO)
        oracle_ok &= abs(dense - ours) <= 1e-9
        notes.append(f"N=6 Jz={jz:g}: dense {dense:.4f} vs {ours:.4f}")
    ferro = measure(ground(ChainSpec(8, "open", xxz_d(-2.0, 0.0))), FERRO)
    para = measure(ground(ChainSpec(8, "open", xxz_d(0.0, 0.0))), FERRO)
    notes.append(f"N=8: {ferro:.6f} at Jz=-2, {para:.4f} at Jz=0")
    return oracle_ok and ferro >= 0.999 and para <= 0.3, "; ".join(notes)


def criterion_6():
    """AKLT crossing, degeneracy, h' = 2 P2, parent = P2, chain gap and correlation length."""
    (c,) = crossing_scan(AKLT.family(), {"beta": -1.0}, {"beta": 0.0}, samples=11)
    beta = c.params["beta"]
    sd = analyze(aklt(-1 / 3))
    p2 = spin2_projector()
    shifted_err = np.abs(sd.shifted - 2 * p2).max()
    m = TIMPS(aklt_matrices())
    parent_err = np.abs(parent_hamiltonian(m).matrix - p2).max()
    gap = ground(ChainSpec(8, "periodic", aklt(-1 / 3))).gap_above_bound
    xi = correlation_length(transfer_matrix(m))
    ok = (
        abs(beta + 1 / 3) <= 1e-8
        and c.g_at_crossing == 4
        and sd.g == 4
        and shifted_err <= 1e-9
        and parent_err <= 1e-9
        and abs(gap) <= 1e-8
        and abs(xi - 1 / math.log(3)) <= 1e-8
    )
    return ok, (
        f"beta*={beta:.10f}, g={c.g_at_crossing}, |h'-2P2|={shifted_err:.1e}, |parent-P2|={parent_err:.1e}, "
        f"gap(N=8 ring)={gap:.1e}, xi={xi:.9f}"
    )


def criterion_7():
    """H - N_b alpha >= 0 at every tested point; Found TIMPS have zero energy and zero chain gap."""
    rng = np.random.default_rng(7)
    points = [xxz_d(jz, d) for jz, d in [(-2, 0), (0, 0), (-1, 0), (1, 0), (0.5, 1.5), (-3, 1)]]
    points += [xxz_d(*rng.uniform(-3, 3, 2)) for _ in range(6)]
    points += [aklt(b) for b in (-1 / 3, 0.0, 0.5)]
    worst = math.inf
    for h in points:
        alpha = analyze(h).alpha
        for n, boundary in ((5, "open"), (6, "open"), (5, "periodic"), (6, "periodic")):
            spec = ChainSpec(n, boundary, h)
            lo = np.linalg.eigvalsh(assemble(spec).toarray())[0] - spec.n_bonds * alpha
            worst = min(worst, lo / max(1.0, abs(spec.n_bonds * alpha)))
    found_pts = [xxz_d(-2.0, 0.0), xxz_d(-3.0, 1.0), aklt(-1 / 3)]
    e_worst, g_worst, found = 0.0, 0.0, 0
    for h in found_pts:
        res = factorize(build_constraints(analyze(h)), 2)
        if res.status is not Status.FOUND:
            continue
        found += 1
        m = TIMPS(res.A)
        shifted = LocalHamiltonian(3, 2, analyze(h).shifted)
        for n in range(4, 9):
            e_worst = max(e_worst, abs(energy(m, shifted, n)))
            g_worst = max(g_worst, abs(ground(ChainSpec(n, "open", h)).gap_above_bound))
    ok = worst >= -1e-8 and found == len(found_pts) and e_worst <= 1e-9 and g_worst <= 1e-8
    return ok, (
        f"min scaled eig(H - N_b alpha) = {worst:.1e} over {len(points)} blocks; "
        f"{found}/{len(found_pts)} Found, max |E| = {e_worst:.1e}, max gap = {g_worst:.1e}"
    )


def _batch_reconstruction(rng):
    fails = 0
    for _ in range(100):
        n = int(rng.integers(1, 30))
        m = random_hermitian(rng, n)
        dec = eigh(m)
        rebuilt = (dec.vectors * dec.values) @ dec.vectors.conj().T
        fails += not np.linalg.norm(rebuilt - m) <= 1e-9 * np.linalg.norm(m)
    return fails


def _batch_lanczos(rng):
    fails = 0
    for case in range(100):
        n = int(rng.integers(5, 1001)) if case % 10 == 0 else int(rng.integers(5, 200))
        m = sps.random(n, n, density=min(1.0, 8 / n), random_state=int(rng.integers(1 << 31)), dtype=complex)
        m = m + m.getH()
        k = int(rng.integers(1, 4))
        values, _ = lanczos_ground(m, k, seed=case)
        fails += not np.allclose(values, np.linalg.eigvalsh(m.toarray())[:k], atol=1e-8)
    return fails


def _random_timps(rng, chi=2):
    return TIMPS(rng.standard_normal((3, chi, chi)) + 1j * rng.standard_normal((3, chi, chi)))


def _batch_gauge(rng):
    fails = 0
    h = xxz_d(0.4, -0.3)
    sz = np.diag([1.0, 0.0, -1.0])
    for _ in range(100):
        m = _random_timps(rng)
        g = m.gauge(well_conditioned(rng, 2))
        pairs = [
            (energy(m, h, 6), energy(g, h, 6)),
            (local_expectation(m, FERRO), local_expectation(g, FERRO)),
            (two_point(m, sz, sz, 2), two_point(g, sz, sz, 2)),
            (correlation_length(transfer_matrix(m)), correlation_length(transfer_matrix(g))),
        ]
        fails += not all(abs(a - b) <= 1e-8 * max(1.0, abs(a)) for a, b in pairs)
    return fails


def _batch_identities(rng):
    fails = 0
    for jz, d in rng.uniform(-5, 5, size=(100, 2)):
        e = xxz_d_spectrum(jz, d)
        ref = closed_form(jz, d)
        fails += not (abs(e.e2 * e.e3 + 2) <= 1e-10 and abs(e.e5 * e.e6 + 1) <= 1e-10)
        fails += not abs(e.e3 - ref["e3"]) <= 1e-12
    return fails


def _batch_rho(rng):
    fails = 0
    for case in range(100):
        m = _random_timps(rng, chi=int(rng.integers(1, 4)))
        k = int(rng.integers(1, 4))
        rho = reduced_density(m, k, "thermodynamic" if case % 2 else int(rng.integers(k + 1, 12)))
        fails += not (abs(np.trace(rho) - 1) <= 1e-12 and np.linalg.eigvalsh(rho).min() >= -1e-10)
    return fails


def criterion_8():
    """Randomized property batches of 100 cases each, zero failures allowed."""
    rng = np.random.default_rng(20240607)
    batches = {
        "reconstruction": _batch_reconstruction,
        "lanczos-vs-dense": _batch_lanczos,
        "gauge invariance": _batch_gauge,
        "e2*e3=-2, e5*e6=-1": _batch_identities,
        "rho trace/positivity": _batch_rho,
    }
    fails = {name: fn(rng) for name, fn in batches.items()}
    return sum(fails.values()) == 0, ", ".join(f"{k}: {v} failures" for k, v in fails.items())


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


def _line(index, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {index}: {detail}"


@pytest.mark.parametrize("index", range(1, len(CRITERIA) + 1))
def test_criterion(index, capsys):
    ok, detail = CRITERIA[index - 1]()
    with capsys.disabled():
        print("\n" + _line(index, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failed += not ok
        print(_line(i, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
