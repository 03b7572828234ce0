"""Built-in models and the JSON model-document parser.

Two families are provided: the spin-1 XXZ chain with single-ion anisotropy
``D``, for which the two-site spectrum and the ferromagnetic phase boundary
are known in closed form, and the bilinear-biquadratic family
``S.S - beta (S.S)^2`` that contains the AKLT point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, NamedTuple


from .localham import TOKENS, LocalHamiltonian, NonHermitianSpec, Term, build_local

__all__ = [
    "ParseError",
    "ModelSpec",
    "XXZDEigenvalues",
    "XXZ_D",
    "AKLT",
    "XXZ_D_TERMS",
    "AKLT_TERMS",
    "xxz_d",
    "xxz_d_spectrum",
    "boundary_line",
    "aklt",
    "parse_model",
    "load_model",
    "builtin_names",
]


class ParseError(ValueError):
    """Malformed model or MPS document; ``location`` points at the culprit."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


XXZ_D_TERMS = (
    Term(1.0, ("Sx", "Sx")),
    Term(1.0, ("Sy", "Sy")),
    Term(("Jz", 1.0), ("Sz", "Sz")),
    Term(("D", 1.0), ("Sz2", "I")),
)

_COMPONENTS = ("Sx", "Sy", "Sz")
# (S.S)^2 = sum_ab S^a S^b (x) S^a S^b
AKLT_TERMS = tuple(Term(1.0, (a, a)) for a in _COMPONENTS) + tuple(
    Term(("beta", -1.0), (f"{a}*{b}", f"{a}*{b}")) for a in _COMPONENTS for b in _COMPONENTS
)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    spin: float
    terms: tuple[Term, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    k: int = 2

    def local(self, params: Mapping[str, float] | None = None, onsite_split: str = "left") -> LocalHamiltonian:
        merged = {**self.params, **(params or {})}
        return build_local(self.terms, merged, spin=self.spin, k=self.k, onsite_split=onsite_split)

    def family(self, onsite_split: str = "left"):
        """Callable mapping parameter overrides to a local Hamiltonian."""
        return lambda params: self.local(params, onsite_split)


XXZ_D = ModelSpec("xxz_d", 1.0, XXZ_D_TERMS, {"Jz": 1.0, "D": 0.0})
AKLT = ModelSpec("aklt", 1.0, AKLT_TERMS, {"beta": -1.0 / 3.0})


def xxz_d(Jz: float, D: float, onsite_split: str = "left") -> LocalHamiltonian:
    """Two-site block ``SxSx + SySy + Jz SzSz + D (Sz^2 (x) 1)``."""
    return XXZ_D.local({"Jz": Jz, "D": D}, onsite_split)


class XXZDEigenvalues(NamedTuple):
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    e6: float

    def multiset(self) -> list[float]:
        """All nine eigenvalues with multiplicities, sorted."""
        return sorted([self.e1, self.e1, self.e2, self.e3, self.e4, self.e5, self.e5, self.e6, self.e6])


def xxz_d_spectrum(Jz: float, D: float) -> XXZDEigenvalues:
    root = math.sqrt(Jz * Jz - 2 * Jz * D + D * D + 8)
    root_d = math.sqrt(D * D + 4)
    return XXZDEigenvalues(
        e1=Jz + D,
        e2=(-Jz + D + root) / 2,
        e3=(-Jz + D - root) / 2,
        e4=-Jz + D,
        e5=(D + root_d) / 2,
        e6=(D - root_d) / 2,
    )


def boundary_line(D: float) -> float:
    """``Jz`` on the ferromagnetic boundary; the other root of
    ``Jz^2 + Jz D - 1 = 0`` does not satisfy ``e1 = e3``."""
    return (-D - math.sqrt(D * D + 4)) / 2


def aklt(beta: float) -> LocalHamiltonian:
    return AKLT.local({"beta": beta})


_BUILTINS = {"xxz_d": "xxz_d.json", "aklt": "aklt.json"}


def builtin_names() -> tuple[str, ...]:
    return tuple(_BUILTINS)


def _parse_coeff(raw: Any, where: str) -> float | tuple[str, float]:
    if isinstance(raw, bool):
        raise ParseError("coefficient must be a number or a parameter reference", where)
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, dict):
        if "param" not in raw or not isinstance(raw["param"], str):
            raise ParseError("parameter reference needs a string 'param'", where)
        scale = raw.get("scale", 1.0)
        if isinstance(scale, bool) or not isinstance(scale, (int, float)):
            raise ParseError("'scale' must be a number", where + ".scale")
        return raw["param"], float(scale)
    raise ParseError("coefficient must be a number or a parameter reference", where)


def parse_model(document: Mapping[str, Any] | str) -> ModelSpec:
    """Validate a model document and return a :class:`ModelSpec`.

    ``document`` is either the decoded JSON object or its text.  The model is
    assembled once at its default parameters to check Hermiticity.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(document, dict):
        raise ParseError("model document must be a JSON object", "$")
    for key in ("name", "spin", "terms"):
        if key not in document:
            raise ParseError(f"missing key {key!r}", "$")
    name = document["name"]
    if not isinstance(name, str):
        raise ParseError("'name' must be a string", "$.name")
    spin = document["spin"]
    if isinstance(spin, bool) or not isinstance(spin, (int, float)):
        raise ParseError("'spin' must be a number", "$.spin")
    params = document.get("params", {})
    if not isinstance(params, dict) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()
    ):
        raise ParseError("'params' must map names to numbers", "$.params")
    raw_terms = document["terms"]
    if not isinstance(raw_terms, list):
        raise ParseError("'terms' must be a list", "$.terms")

    terms = []
    k = None
    for n, raw in enumerate(raw_terms):
        where = f"$.terms[{n}]"
        if not isinstance(raw, dict) or "ops" not in raw or "coeff" not in raw:
            raise ParseError("term needs 'coeff' and 'ops'", where)
        ops = raw["ops"]
        if not isinstance(ops, list) or not ops or not all(isinstance(o, str) for o in ops):
            raise ParseError("'ops' must be a non-empty list of tokens", where + ".ops")
        for m, op in enumerate(ops):
            for part in op.split("*"):
                if part.strip() not in TOKENS:
                    raise ParseError(f"unknown operator token {part.strip()!r}", f"{where}.ops[{m}]")
        if k is None:
            k = len(ops)
        elif len(ops) != k:
            raise ParseError(f"term acts on {len(ops)} sites, expected {k}", where + ".ops")
        coeff = _parse_coeff(raw["coeff"], where + ".coeff")
        if isinstance(coeff, tuple) and coeff[0] not in params:
            raise ParseError(f"parameter {coeff[0]!r} has no default in 'params'", where + ".coeff")
        terms.append(Term(coeff, tuple(o.replace(" ", "") for o in ops)))

    spec = ModelSpec(name, float(spin), tuple(terms), {k_: float(v) for k_, v in params.items()}, k or 2)
    try:
        spec.local()
    except (ParseError, NonHermitianSpec):
        raise
    except ValueError as exc:
        raise ParseError(str(exc), "$") from exc
    return spec


def load_model(source: str | Path) -> ModelSpec:
    """Load a built-in model by name or a model document from a path."""
    if str(source) in _BUILTINS:
        text = resources.files("timps_qpt.data").joinpath(_BUILTINS[str(source)]).read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise ParseError(f"no built-in model or file named {str(source)!r}")
        text = path.read_text()
    return parse_model(text)

