"""On-disk formats: JSON-lines circuit files, shot records and result tables.

Every float is written as decimal text with 17 significant digits, which
round-trips 64-bit floats exactly, and every file carries a format version.
Nothing time- or host-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .gates import GateInstance, GateKind, Layer
from .protocol import VerificationSequence

FORMAT_VERSION = 1
SHOT_COLUMNS = ("sequence_id", "x0", "shot_index", "outcome")


class FormatError(ValueError):
    """A file does not follow the expected format; the message names the line."""


def fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return format(float(x), ".17g")


def dumps(obj) -> str:
    """Compact JSON with sorted keys and 17-digit floats."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _gate_obj(g: GateInstance) -> dict:
    return {"kind": g.kind.value, "targets": list(g.targets), "theta": g.theta, "phi": g.phi}


def serialize_sequence(seq: VerificationSequence, sequence_id: str) -> str:
    header = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "sequence_id": sequence_id,
        "kind": seq.kind,
        "n_qubits": seq.n_qubits,
        "m0": seq.m0,
        "m_inv": seq.m_inv,
        "epsilon": seq.epsilon,
        "seed": seq.seed,
    }
    lines = [dumps(header)]
    lines += [dumps({"gates": [_gate_obj(g) for g in layer]}) for layer in seq.layers]
    return "\n".join(lines) + "\n"


def _parse_gate(obj, n: int) -> GateInstance:
    try:
        kind = GateKind(obj["kind"])
    except ValueError:
        raise FormatError(f"unknown gate kind {obj['kind']!r}") from None
    targets = tuple(obj["targets"])
    if any(not isinstance(t, int) or not 0 <= t < n for t in targets):
        raise FormatError(f"gate targets {list(targets)} out of range for {n} qubits")
    return GateInstance(kind, targets, float(obj["theta"]), float(obj.get("phi", 0.0)))


def parse_sequence(text: str, source: str = "<circuit>") -> tuple[str, VerificationSequence]:
    """Inverse of :func:`serialize_sequence`; returns ``(sequence_id, sequence)``.

    Raises:
        FormatError: malformed content, reported as ``source:line: reason``.
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise FormatError(f"{source}:1: missing header")
    lineno = 1
    try:
        header = json.loads(lines[0])
        if header.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"unsupported format_version {header.get('format_version')!r}")
        n = int(header["n_qubits"])
        layers = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            obj = json.loads(line)
            layers.append(Layer(tuple(_parse_gate(g, n) for g in obj["gates"])))
        lineno = 1
        seq = VerificationSequence(
            header["kind"], n, tuple(layers), header.get("seed"),
            header.get("m0"), header.get("m_inv"), header.get("epsilon"),
        )
    except FormatError as exc:
        raise FormatError(f"{source}:{lineno}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{source}:{lineno}: {type(exc).__name__}: {exc}") from None
    return str(header["sequence_id"]), seq


def write_sequence(path: Path, seq: VerificationSequence, sequence_id: str) -> None:
    Path(path).write_text(serialize_sequence(seq, sequence_id))


def read_sequence(path: Path) -> tuple[str, VerificationSequence]:
    path = Path(path)
    return parse_sequence(path.read_text(), path.name)


@dataclass(frozen=True)
class IndexEntry:
    pair: int
    sequence_id: str
    kind: str
    m0: int
    m: int | None
    epsilon: float | None
    seed: int
    status: str
    file: str


INDEX_COLUMNS = ("pair", "sequence_id", "kind", "m0", "m", "epsilon", "seed", "status", "file")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    """Tab-separated table with a header row and an optional leading ``#`` line."""
    out = []
    if comment is not None:
        out.append(f"# {comment}")
    out.append("\t".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        out.append("\t".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n")


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows of a table written by :func:`write_table`."""
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        cells = line.split("\t")
        if header is None:
            header = cells
        else:
            rows.append(cells)
    if header is None:
        raise FormatError(f"{Path(path).name}: no header row")
    return header, rows


def _version_comment(what: str) -> str:
    return f"ravkit {what} format_version={FORMAT_VERSION} tool_version={__version__}"


def write_index(path: Path, entries: Sequence[IndexEntry]) -> None:
    rows = [[getattr(e, c) for c in INDEX_COLUMNS] for e in entries]
    write_table(path, INDEX_COLUMNS, rows, _version_comment("index"))


def read_index(path: Path) -> list[IndexEntry]:
    header, rows = read_table(path)
    if tuple(header) != INDEX_COLUMNS:
        raise FormatError(f"{Path(path).name}: unexpected index columns {header}")
    out = []
    for r in rows:
        d = dict(zip(header, r))
        out.append(
            IndexEntry(
                int(d["pair"]), d["sequence_id"], d["kind"], int(d["m0"]),
                int(d["m"]) if d["m"] else None,
                float(d["epsilon"]) if d["epsilon"] else None,
                int(d["seed"]), d["status"], d["file"],
            )
        )
    return out


@dataclass
class ShotRecord:
    """Every shot of one sequence, in recorded order."""

    sequence_id: str
    x0: np.ndarray
    outcomes: np.ndarray


def write_shots(path: Path, records: Iterable[ShotRecord]) -> None:
    out = [f"# {_version_comment('shots')}", "\t".join(SHOT_COLUMNS)]
    for rec in records:
        for i, (x0, o) in enumerate(zip(rec.x0, rec.outcomes)):
            out.append(f"{rec.sequence_id}\t{int(x0)}\t{i}\t{int(o)}")
    Path(path).write_text("\n".join(out) + "\n")


def read_shots(path: Path) -> dict[str, ShotRecord]:
    """Load a shot table; rows may come in any order but indices must be contiguous from 0.

    Raises:
        FormatError: wrong columns, non-integer cells, or gaps in shot indices.
    """
    path = Path(path)
    name = path.name
    data: dict[str, list[tuple[int, int, int]]] = {}
    header = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        cells = line.split("\t")
        if header is None:
            header = cells
            if tuple(cells) != SHOT_COLUMNS:
                raise FormatError(f"{name}:{lineno}: expected columns {list(SHOT_COLUMNS)}, got {cells}")
            continue
        if len(cells) != 4:
            raise FormatError(f"{name}:{lineno}: expected 4 cells, got {len(cells)}")
        try:
            x0, idx, outcome = int(cells[1]), int(cells[2]), int(cells[3])
        except ValueError:
            raise FormatError(f"{name}:{lineno}: non-integer cell in {cells}") from None
        if x0 < 0 or outcome < 0:
            raise FormatError(f"{name}:{lineno}: negative basis index")
        data.setdefault(cells[0], []).append((idx, x0, outcome))
    if header is None:
        raise FormatError(f"{name}: no header row")
    out = {}
    for sid, rows in data.items():
        rows.sort()
        idx = np.array([r[0] for r in rows])
        if not np.array_equal(idx, np.arange(idx.size)):
            raise FormatError(f"{name}: shot indices of {sid} are not contiguous from 0")
        out[sid] = ShotRecord(sid, np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
    return out

