"""Command-line front end.

Subcommands::

    timps-qpt spectrum     two-site spectrum, alpha, g and ground vectors
    timps-qpt boundary     scanned ferromagnetic boundary vs the closed form
    timps-qpt gap          E_g - N_b alpha along a parameter segment
    timps-qpt constraints  equations, M pattern, factorization, candidates
    timps-qpt mps          transfer spectrum, xi, energies, parent Hamiltonian

Every report starts with a ``#``-prefixed metadata block followed by one or
more tables.  Output goes to stdout or, with ``--out``, is written atomically.
Exit status is 0 on success, 1 on usage or input errors and 2 on numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .chain import TooLarge, gap_scan
from .constraints import (
    Status,
    build_constraints,
    factorize,
    order_parameter_candidates,
    solve_linearized,
)
from .localham import LocalHamiltonian, analyze, crossing_scan, spin_operators
from .models import ModelSpec, ParseError, boundary_line, load_model
from .mps import (
    EmptyNullSpace,
    NonInjectiveWarning,
    THERMODYNAMIC,
    XiStatus,
    ZeroNorm,
    ZeroState,
    correlation_length,
    energy,
    load_timps,
    parent_hamiltonian,
    reduced_density,
    transfer_matrix,
)
from .numerics import NoConvergence

TOOL = "timps-qpt"
THREADS_ENV = "TIMPS_QPT_THREADS"
_BUNDLED_TIMPS = {"aklt": "aklt_mps.json", "ghz": "ghz_mps.json"}


class UsageError(ValueError):
    pass


@dataclass
class Section:
    name: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)


@dataclass
class Report:
    meta: dict[str, Any]
    sections: list[Section] = field(default_factory=list)
    status: int = 0


# -- argument parsing ---------------------------------------------------------


def _number(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{what}: {text!r} is not a number") from None


def parse_assignment(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"expected key=value, got {text!r}")
    return key.strip(), _number(value, key)


def parse_range(text: str) -> tuple[str, float, float, int]:
    """``key=lo:hi:steps`` with ``steps >= 1`` sample points."""
    key, sep, spec = text.partition("=")
    parts = spec.split(":")
    if not sep or not key or len(parts) != 3:
        raise UsageError(f"expected key=lo:hi:steps, got {text!r}")
    lo, hi = _number(parts[0], key), _number(parts[1], key)
    try:
        steps = int(parts[2])
    except ValueError:
        raise UsageError(f"{key}: steps must be an integer, got {parts[2]!r}") from None
    if steps < 1:
        raise UsageError(f"{key}: steps must be >= 1")
    return key.strip(), lo, hi, steps


def parse_int_list(text: str, what: str, minimum: int) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected a comma-separated list of integers, got {text!r}") from None
    if not values:
        raise UsageError(f"{what}: empty list")
    bad = [v for v in values if v < minimum]
    if bad:
        raise UsageError(f"{what}: values must be >= {minimum}, got {bad}")
    return values


def _threads(value: int | None) -> int:
    if value is not None:
        n = value
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("threads must be >= 1")
    return n


def _model(args) -> tuple[ModelSpec, dict[str, float]]:
    spec = load_model(args.model or "xxz_d")
    params = dict(spec.params)
    for text in args.set or []:
        key, value = parse_assignment(text)
        if key not in params:
            raise UsageError(f"model {spec.name!r} has no parameter {key!r} (known: {sorted(params)})")
        params[key] = value
    return spec, params


def _label(m: float) -> str:
    return format(m, "g")


def _pair_label(labels: Sequence[float], flat: int) -> str:
    d = len(labels)
    return f"{_label(labels[flat // d])} {_label(labels[flat % d])}"


# -- commands -----------------------------------------------------------------


def cmd_spectrum(args) -> Report:
    spec, params = _model(args)
    h = spec.local(params, args.onsite_split)
    sd = analyze(h, args.tol if args.tol is not None else 1e-9)
    labels = spin_operators(spec.spin).labels
    rep = Report(_meta(args, params=params))
    summary = Section("summary", ["quantity", "value"])
    summary.rows += [["alpha", sd.alpha], ["g", sd.g], ["dim", h.matrix.shape[0]]]
    values = Section("spectrum", ["index", "value"])
    values.rows += [[i, float(v)] for i, v in enumerate(sd.decomposition.values)]
    ground = Section("ground", ["vector", "state", "re", "im"])
    for j in range(sd.g):
        vec = sd.ground[:, j]
        for flat in np.flatnonzero(np.abs(vec) > 1e-14):
            state = _pair_label(labels, flat) if h.k == 2 else str(flat)
            ground.rows.append([j, state, float(vec[flat].real), float(vec[flat].imag)])
    rep.sections += [summary, values, ground]
    return rep


def cmd_boundary(args) -> Report:
    spec, params = _model(args)
    if not {"Jz", "D"} <= set(params):
        raise UsageError("boundary needs a model with parameters Jz and D")
    key, lo, hi, steps = parse_range(args.range or "D=0:3:7")
    if key != "D":
        raise UsageError("boundary scans over D")
    wkey, wlo, whi, wsteps = parse_range(args.window)
    if wkey != "Jz" or wsteps < 2:
        raise UsageError("--window must be Jz=lo:hi:samples with samples >= 2")
    tol = args.tol if args.tol is not None else 1e-6
    family = spec.family(args.onsite_split)
    table = Section("boundary", ["D", "Jz_analytic", "Jz_scanned", "abs_diff", "g"])
    rep = Report(_meta(args, params=params))
    for d in np.linspace(lo, hi, steps) if steps > 1 else [lo]:
        d = float(d)
        fixed = {**params, "D": d}
        found = crossing_scan(family, {**fixed, "Jz": wlo}, {**fixed, "Jz": whi}, samples=wsteps, tol=tol)
        exact = boundary_line(d)
        if not found:
            table.rows.append([d, exact, math.nan, math.nan, 0])
            rep.status = 2
            continue
        # the ferromagnetic boundary is the first crossing met coming from low Jz
        first = min(found, key=lambda c: c.params["Jz"])
        jz = first.params["Jz"]
        table.rows.append([d, exact, jz, abs(jz - exact), first.g_at_crossing])
    rep.sections.append(table)
    if args.gnuplot:
        _write_gnuplot(args.gnuplot, args.out, "boundary", "D", ["Jz_analytic", "Jz_scanned"])
    return rep


def cmd_gap(args) -> Report:
    spec, params = _model(args)
    ranges = [parse_range(r) for r in (args.range or [])]
    if not ranges:
        raise UsageError("gap needs at least one --range key=lo:hi:steps")
    if len({r[3] for r in ranges}) != 1:
        raise UsageError("all --range entries must share the same number of steps")
    for key, *_ in ranges:
        if key not in params:
            raise UsageError(f"model {spec.name!r} has no parameter {key!r}")
    n_list = parse_int_list(args.N or "8", "--N", 3)
    start = {**params, **{k: lo for k, lo, _, _ in ranges}}
    end = {**params, **{k: hi for k, _, hi, _ in ranges}}
    rows = gap_scan(
        spec.family(args.onsite_split),
        start,
        end,
        samples=ranges[0][3],
        N_list=n_list,
        boundary=args.boundary,
        threads=_threads(args.threads),
        seed=args.seed,
        tol=args.tol if args.tol is not None else 1e-8,
    )
    keys = [k for k, *_ in ranges]
    table = Section("gap", keys + ["N", "E_g", "bound", "gap"])
    for row in rows:
        table.rows.append([row.params[k] for k in keys] + [row.N, row.E_g, row.bound, row.gap])
    rep = Report(_meta(args, params=params))
    rep.sections.append(table)
    if args.gnuplot:
        _write_gnuplot(args.gnuplot, args.out, "gap", keys[0], ["gap"], group="N")
    return rep


def _factorizations(c, chis, args) -> list:
    return [factorize(c, chi, starts=args.starts, seed=args.seed, max_iter=args.max_iter) for chi in chis]


def cmd_constraints(args) -> Report:
    spec, params = _model(args)
    chis = parse_int_list(args.chi, "--chi", 1)
    tol = args.tol if args.tol is not None else 1e-9
    sd = analyze(spec.local(params, args.onsite_split), tol)
    c = build_constraints(sd)
    pattern = solve_linearized(c)
    labels = c.labels

    rep = Report(_meta(args, params=params))
    summary = Section("summary", ["quantity", "value"])
    summary.rows += [
        ["alpha", sd.alpha],
        ["g", sd.g],
        ["rows", c.rows.shape[0]],
        ["free_dim", pattern.free_dim],
        ["symmetric_consistent", int(pattern.symmetric_consistent)],
    ]
    eqs = Section("equations", ["row", "equation"])
    eqs.rows += [[i, text] for i, text in enumerate(c.equations())]
    pat = Section("pattern", ["a", "b", "forced_zero"])
    for a in range(c.d):
        for b in range(c.d):
            pat.rows.append([_label(labels[a]), _label(labels[b]), int((a, b) in pattern.forced_zero)])
    fac = Section("factorization", ["chi", "status", "residual", "starts_used"])
    results = _factorizations(c, chis, args)
    fac.rows += [[r.chi, r.status.value, r.residual, r.starts_used] for r in results]
    rep.sections += [summary, eqs, pat, fac]

    if args.compare:
        other = dict(params)
        for text in args.compare:
            key, value = parse_assignment(text)
            if key not in other:
                raise UsageError(f"model {spec.name!r} has no parameter {key!r}")
            other[key] = value
        c2 = build_constraints(analyze(spec.local(other, args.onsite_split), tol))
        pattern2 = solve_linearized(c2)
        results2 = _factorizations(c2, chis, args)
        realizable = (
            any(r.status is Status.FOUND for r in results),
            any(r.status is Status.FOUND for r in results2),
        )
        rep.meta["compare"] = other
        cmp_fac = Section("compare_factorization", ["chi", "status", "residual", "starts_used"])
        cmp_fac.rows += [[r.chi, r.status.value, r.residual, r.starts_used] for r in results2]
        cand = Section("candidates", ["a", "b", "zero_at"])
        for a, b in order_parameter_candidates(pattern, pattern2, realizable):
            zero_at = "primary" if (a, b) in pattern.forced_zero else "compare"
            cand.rows.append([_label(labels[a]), _label(labels[b]), zero_at])
        rep.sections += [cmp_fac, cand]
    return rep


def _load_timps_arg(source: str):
    if source in _BUNDLED_TIMPS and not Path(source).exists():
        return load_timps(resources.files("timps_qpt.data").joinpath(_BUNDLED_TIMPS[source]).read_text())
    path = Path(source)
    if not path.exists():
        raise UsageError(f"no TIMPS file or bundled state named {source!r}")
    return load_timps(path.read_text())


def cmd_mps(args) -> Report:
    if not args.timps:
        raise UsageError("mps needs --timps <path|aklt|ghz>")
    m = _load_timps_arg(args.timps)
    if args.N is not None and args.N < 3:
        raise UsageError("--N must be >= 3")
    n = args.N if args.N is not None else 8
    rep = Report(_meta(args))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonInjectiveWarning)
        t = transfer_matrix(m)
        xi = correlation_length(t)
        rho = reduced_density(m, 2, THERMODYNAMIC)
        try:
            parent = parent_hamiltonian(m, 2)
        except EmptyNullSpace:
            parent = None
        summary = Section("summary", ["quantity", "value"])
        summary.rows += [
            ["d", m.d],
            ["chi", m.chi],
            ["xi", xi.value if isinstance(xi, XiStatus) else xi],
            ["injective", int(t.injective)],
            ["N", n],
        ]
        if args.model or args.set:
            spec, params = _model(args)
            h = spec.local(params, args.onsite_split)
            sd = analyze(h)
            shifted = LocalHamiltonian(h.d, h.k, sd.shifted, dict(params))
            rep.meta["params"] = params
            summary.rows += [["energy_h", energy(m, h, n)], ["energy_shifted", energy(m, shifted, n)]]
        if parent is not None:
            summary.rows.append(["energy_parent", energy(m, parent, n)])
    non_injective = any(issubclass(w.category, NonInjectiveWarning) for w in caught)
    summary.rows.append(["non_injective", int(non_injective)])

    spectrum = Section("transfer", ["index", "re", "im", "modulus"])
    spectrum.rows += [[i, float(v.real), float(v.imag), float(abs(v))] for i, v in enumerate(t.spectrum)]
    labels = spin_operators((m.d - 1) / 2).labels
    bonds = Section("bond_populations", ["state", "value"])
    bonds.rows += [[_pair_label(labels, i), float(rho[i, i].real)] for i in range(m.d * m.d)]
    rep.sections += [summary, spectrum, bonds]
    if parent is not None:
        ph = Section("parent", ["row", "col", "re", "im"])
        for i, j in zip(*np.nonzero(np.abs(parent.matrix) > 1e-14)):
            z = parent.matrix[i, j]
            ph.rows.append([int(i), int(j), float(z.real), float(z.imag)])
        rep.sections.append(ph)
    return rep


# -- output -------------------------------------------------------------------


def _meta(args, **extra) -> dict[str, Any]:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "gnuplot", "threads")}
    return {"tool": TOOL, "version": __version__, "seed": args.seed, "config": config, **extra}


def _csv_value(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render(rep: Report, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "meta": _json_value(rep.meta),
            "sections": {
                s.name: {"columns": s.columns, "rows": [_json_value(r) for r in s.rows]} for s in rep.sections
            },
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    for key, value in rep.meta.items():
        buf.write(f"# {key}: {json.dumps(_json_value(value), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for s in rep.sections:
        buf.write(f"# [{s.name}]\n")
        writer.writerow(s.columns)
        writer.writerows([_csv_value(v) for v in row] for row in s.rows)
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_gnuplot(script: str, data: str | None, section: str, x: str, ys: list[str], group: str | None = None) -> None:
    """Emit a gnuplot script that plots columns of a CSV report."""
    if not data:
        raise UsageError("--gnuplot needs --out with --format csv")
    lines = [
        f"# generated by {TOOL} {__version__}",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        f"set xlabel '{x}'",
        f"set title '{section}'",
    ]
    if group:
        lines.append(
            f"plot '{data}' using (column('{x}')):(column('{ys[0]}')):(column('{group}')) "
            "with linespoints lc variable"
        )
    else:
        lines.append("plot " + ", ".join(f"'{data}' using (column('{x}')):(column('{y}')) with linespoints" for y in ys))
    write_atomic(script, "\n".join(lines) + "\n")


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="built-in model name or path to a model JSON document (default xxz_d)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a model parameter (repeatable)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--tol", type=float, default=None, help="command-specific tolerance")
    common.add_argument("--threads", type=int, default=None, help=f"worker threads (fallback: ${THREADS_ENV})")
    common.add_argument("--onsite-split", choices=("left", "symmetric"), default="left")

    parser = argparse.ArgumentParser(prog=TOOL, description="Level-crossing analysis of translationally invariant spin chains.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="two-site spectrum and ground space")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("boundary", parents=[common], help="scanned vs analytic ferromagnetic boundary")
    p.add_argument("--range", help="D=lo:hi:steps (default D=0:3:7)")
    p.add_argument("--window", default="Jz=-6:2:81", help="Jz segment scanned per D value")
    p.add_argument("--gnuplot", metavar="PATH", help="also write a gnuplot script")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("gap", parents=[common], help="E_g - N_b alpha along a segment")
    p.add_argument("--range", action="append", metavar="KEY=LO:HI:STEPS")
    p.add_argument("--N", help="comma-separated chain lengths (default 8)")
    p.add_argument("--boundary", choices=("open", "periodic"), default="open")
    p.add_argument("--gnuplot", metavar="PATH", help="also write a gnuplot script")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("constraints", parents=[common], help="constraint equations and factorization")
    p.add_argument("--chi", default="1,2", help="comma-separated bond dimensions")
    p.add_argument("--compare", action="append", metavar="KEY=VALUE", help="second parameter point")
    p.add_argument("--starts", type=int, default=32)
    p.add_argument("--max-iter", type=int, default=5000)
    p.set_defaults(func=cmd_constraints)

    p = sub.add_parser("mps", parents=[common], help="analyze a TIMPS")
    p.add_argument("--timps", help="TIMPS JSON path or bundled name (aklt, ghz)")
    p.add_argument("--N", type=int, default=None, help="ring length for energies (default 8)")
    p.set_defaults(func=cmd_mps)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        rep = args.func(args)
        text = render(rep, args.format)
        if args.out:
            write_atomic(args.out, text)
        else:
            sys.stdout.write(text)
        return rep.status
    except (UsageError, ParseError, TooLarge, OSError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 1
    except (NoConvergence, ZeroState, ZeroNorm, EmptyNullSpace, np.linalg.LinAlgError) as exc:
        print(f"{TOOL}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 1
