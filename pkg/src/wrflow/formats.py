"""File formats: matrix files, projection specs, subspace files and run reports.

All files are JSON.  A matrix file looks like::

    {"dim": 2, "entries": [5, 3, 3, 2], "kind": "psd"}

with ``entries`` in row-major order and ``kind`` one of ``psd``,
``projection`` or ``symmetric``.  A subspace file lists spanning vectors::

    {"dim": 3, "basis": [[1, 0, 0], [0, 1, 1]]}

Reports are JSON trees written with Python's shortest round-trip float
representation, so reading a report back gives the same floats bit for bit.
"""

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .errors import IoError, NotPsd, ParseError, ValidationError
from .psd import (
    CLIP_TOL,
    Projection,
    PsdOperator,
    Subspace,
    as_projection,
    orthonormal_span,
    spectral_decompose,
)

__all__ = [
    "KINDS",
    "RunReport",
    "matrix_from_tree",
    "parse_matrix_file",
    "load_psd",
    "resolve_projection",
    "parse_span",
    "resolve_subspace",
    "emit_report",
    "read_report",
    "dumps_report",
    "loads_report",
    "matrix_tree",
    "write_matrix_file",
]

KINDS = ("psd", "projection", "symmetric")
SYMMETRY_TOL = 1e-12
PROJECTION_TOL = 1e-10

Matrix = Union[PsdOperator, Projection, np.ndarray]


def _read_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _real(x, where) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: expected a real number, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise ParseError(f"{where}: non-finite entry {x!r}")
    return x


def _dim(tree, source) -> int:
    d = tree.get("dim")
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ParseError(f"{source}: field 'dim' must be a positive integer, got {d!r}")
    return d


def matrix_from_tree(tree, source: str = "<input>") -> Matrix:
    """Validate a decoded matrix file and build the object its kind calls for.

    Returns a :class:`PsdOperator` for ``psd``, a :class:`Projection` for
    ``projection`` and a read-only symmetric array for ``symmetric``.
    """
    if not isinstance(tree, dict):
        raise ParseError(f"{source}: expected an object with fields dim, entries, kind")
    missing = [k for k in ("dim", "entries", "kind") if k not in tree]
    if missing:
        raise ParseError(f"{source}: missing field(s) {', '.join(missing)}")
    d = _dim(tree, source)
    kind = tree["kind"]
    if kind not in KINDS:
        raise ParseError(f"{source}: kind must be one of {', '.join(KINDS)}, got {kind!r}")
    entries = tree["entries"]
    if not isinstance(entries, list):
        raise ParseError(f"{source}: field 'entries' must be a list")
    if len(entries) != d * d:
        raise ParseError(f"{source}: expected dim^2 = {d * d} entries, got {len(entries)}")
    m = np.array([_real(x, f"{source}: entries[{i}]") for i, x in enumerate(entries)]).reshape(d, d)

    asym = float(np.linalg.norm(m - m.T))
    if asym > SYMMETRY_TOL * (1.0 + np.linalg.norm(m)):
        raise ValidationError(f"{source}: kind {kind} requires a symmetric matrix, ||M - M^T||_F = {asym:.3g}")
    m = (m + m.T) / 2

    if kind == "psd":
        try:
            return spectral_decompose(m, CLIP_TOL)
        except NotPsd as exc:
            raise ValidationError(
                f"{source}: kind psd requires nonnegative eigenvalues, found eigenvalue {exc.min_eigenvalue:.17g}"
            ) from exc
    if kind == "projection":
        w = np.linalg.eigvalsh(m)
        off = np.minimum(np.abs(w), np.abs(w - 1.0))
        if off.max() > PROJECTION_TOL:
            bad = w[np.argmax(off)]
            raise ValidationError(
                f"{source}: kind projection requires eigenvalues in {{0, 1}}, found eigenvalue {bad:.17g}"
            )
        return as_projection(m, PROJECTION_TOL)
    m.setflags(write=False)
    return m


def parse_matrix_file(path) -> Matrix:
    """Read and validate a matrix file (see the module docstring for the format)."""
    return matrix_from_tree(_read_json(path), str(path))


def load_psd(path) -> PsdOperator:
    """A matrix file of any kind, validated as positive semidefinite."""
    m = parse_matrix_file(path)
    if isinstance(m, PsdOperator):
        return m
    try:
        return spectral_decompose(np.asarray(m), CLIP_TOL)
    except NotPsd as exc:
        raise ValidationError(
            f"{path}: operator must be positive semidefinite, found eigenvalue {exc.min_eigenvalue:.17g}"
        ) from exc


def parse_span(text: str, dim: int) -> np.ndarray:
    """Vectors of an inline ``span:`` spec, e.g. ``span:1,0,0;0,1,1``, as rows."""
    body = text[len("span:"):].strip() if text.startswith("span:") else text.strip()
    if not body:
        return np.zeros((0, dim))
    rows = []
    for i, chunk in enumerate(body.split(";")):
        try:
            v = [float(x) for x in chunk.split(",")]
        except ValueError as exc:
            raise ValidationError(f"span vector {i + 1} ({chunk.strip()!r}) is not a list of reals") from exc
        if len(v) != dim:
            raise ValidationError(f"span vector {i + 1} has {len(v)} components, expected {dim}")
        if not all(math.isfinite(x) for x in v):
            raise ValidationError(f"span vector {i + 1} has non-finite components")
        rows.append(v)
    return np.array(rows)


def resolve_projection(spec, dim: int) -> Projection:
    """Turn a projection spec into a :class:`Projection` of dimension ``dim``.

    ``spec`` is ``"zero"``, ``"identity"``, an inline ``"span:..."`` list,
    a path to a matrix file, a list of vectors, or a :class:`Projection`.
    """
    if isinstance(spec, Projection):
        if spec.dim != dim:
            raise ValidationError(f"projection has dimension {spec.dim}, expected {dim}")
        return spec
    if isinstance(spec, (list, tuple, np.ndarray)):
        vectors = np.asarray(spec, dtype=float).reshape(-1, dim) if len(spec) else np.zeros((0, dim))
        return orthonormal_span(vectors, dim).projection()
    spec = str(spec)
    if spec == "zero":
        return Projection.zero(dim)
    if spec == "identity":
        return Projection.identity(dim)
    if spec.startswith("span:"):
        return orthonormal_span(parse_span(spec, dim), dim).projection()
    m = parse_matrix_file(spec)
    if isinstance(m, PsdOperator):
        m = m.matrix
    if isinstance(m, np.ndarray):
        w = np.linalg.eigvalsh(m)
        off = np.minimum(np.abs(w), np.abs(w - 1.0))
        if off.max() > PROJECTION_TOL:
            raise ValidationError(
                f"{spec}: not an orthogonal projection, found eigenvalue {w[np.argmax(off)]:.17g}"
            )
        m = as_projection(m, PROJECTION_TOL)
    if m.dim != dim:
        raise ValidationError(f"{spec}: projection has dimension {m.dim}, expected {dim}")
    return m


def resolve_subspace(spec, dim: int) -> Subspace:
    """A subspace from an inline ``span:`` list or a subspace file ``{dim, basis}``."""
    spec = str(spec)
    if spec.startswith("span:"):
        return orthonormal_span(parse_span(spec, dim), dim)
    tree = _read_json(spec)
    if not isinstance(tree, dict) or "basis" not in tree:
        raise ParseError(f"{spec}: expected an object with fields dim and basis")
    d = _dim(tree, spec)
    if d != dim:
        raise ValidationError(f"{spec}: subspace lives in dimension {d}, expected {dim}")
    basis = tree["basis"]
    if not isinstance(basis, list) or not all(isinstance(v, list) for v in basis):
        raise ParseError(f"{spec}: field 'basis' must be a list of vectors")
    rows = []
    for i, v in enumerate(basis):
        if len(v) != dim:
            raise ValidationError(f"{spec}: basis vector {i + 1} has {len(v)} components, expected {dim}")
        rows.append([_real(x, f"{spec}: basis[{i}]") for x in v])
    return orthonormal_span(np.array(rows).reshape(-1, dim), dim)


@dataclass
class RunReport:
    """Structured result of one CLI command.

    ``inputs`` digests the operands, ``tolerances`` records every threshold
    in force, ``results`` holds the command's outputs (matrices as nested
    lists) and ``timings`` the wall-clock seconds per phase.  All values are
    plain JSON types, so equality after a round trip is exact.
    """

    command: str
    inputs: Dict[str, Any] = field(default_factory=dict)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def to_tree(self, include_timings: bool = True) -> Dict[str, Any]:
        tree = {
            "command": self.command,
            "inputs": self.inputs,
            "tolerances": self.tolerances,
            "results": self.results,
        }
        if include_timings:
            tree["timings"] = self.timings
        return tree

    @classmethod
    def from_tree(cls, tree, source: str = "<report>") -> "RunReport":
        if not isinstance(tree, dict) or not isinstance(tree.get("command"), str):
            raise ParseError(f"{source}: not a run report (missing 'command')")
        sections = {}
        for name in ("inputs", "tolerances", "results", "timings"):
            value = tree.get(name, {})
            if not isinstance(value, dict):
                raise ParseError(f"{source}: section '{name}' must be an object")
            sections[name] = value
        return cls(command=tree["command"], **sections)


def dumps_report(report: RunReport, include_timings: bool = True) -> str:
    # allow_nan=False keeps the output strict JSON; reports never carry NaN
    return json.dumps(report.to_tree(include_timings), indent=2, allow_nan=False) + "\n"


def loads_report(text: str, source: str = "<report>") -> RunReport:
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return RunReport.from_tree(tree, source)


def emit_report(report: RunReport, path, include_timings: bool = True) -> None:
    """Write ``report`` to ``path``; ``"-"`` writes to standard output."""
    text = dumps_report(report, include_timings)
    if str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def read_report(path) -> RunReport:
    return RunReport.from_tree(_read_json(path), str(path))


def matrix_tree(m, kind: str = "symmetric") -> Dict[str, Any]:
    """Matrix-file tree for ``m``, the inverse of :func:`matrix_from_tree`."""
    a = np.asarray(m.matrix if hasattr(m, "matrix") else m, dtype=float)
    return {"dim": int(a.shape[0]), "entries": a.ravel().tolist(), "kind": kind}


def write_matrix_file(path, m, kind: str = "symmetric") -> None:
    try:
        Path(path).write_text(json.dumps(matrix_tree(m, kind)) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write matrix to {path}: {exc.strerror or exc}") from exc

