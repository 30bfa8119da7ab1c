"""Versioned result files: CSV with a schema header, JSON mirror, sidecar.

Every result file opens with a ``#schema=<name>/<version>`` comment line
naming the fixed column set it was written with, so files are
self-describing and re-parse into typed records without guessing.  Floats
are written with ``repr`` (shortest round-trip form); re-reading a file
reproduces the in-memory rows exactly.  Data files carry no timestamps,
so identical runs produce byte-identical files; wall-clock and host
details live in the ``.meta.json`` sidecar.
"""

from __future__ import annotations

import json
import platform
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Sequence

SCHEMA_PREFIX = "#schema="
TRUNCATION_MARKER = "#truncated"

_RECALL_COLUMNS = (
    ("kernel", str),
    ("n_pairs", int),
    ("d_h", int),
    ("geometry", str),
    ("seed", int),
    ("total_len", int),
    ("accuracy", float),
    ("per_query_margin", float),
)

SCHEMAS: dict[str, tuple[str, tuple[tuple[str, type], ...]]] = {
    "recall": ("v1", _RECALL_COLUMNS),
    "longctx": ("v1", _RECALL_COLUMNS),
    "stability": (
        "v1",
        (
            ("kernel", str),
            ("seed", int),
            ("t", int),
            ("s_norm", float),
            ("a_norm", float),
            ("residual", float),
            ("alignment", float),
            ("delta", float),
        ),
    ),
    "jacobian": (
        "v1",
        (
            ("alignment", float),
            ("sigma_closed_form", float),
            ("sigma_numeric", float),
            ("abs_error", float),
        ),
    ),
    "bench": (
        "v1",
        (
            ("kernel", str),
            ("backend", str),
            ("T", int),
            ("reps", int),
            ("median_ms", float),
            ("p10_ms", float),
            ("p90_ms", float),
            ("tokens_per_s", float),
        ),
    ),
    "scan-check": (
        "v1",
        (
            ("T", int),
            ("workers", int),
            ("max_rel_deviation", float),
            ("ok", int),
        ),
    ),
    "summary": (
        "v1",
        (
            ("kernel", str),
            ("n_pairs", int),
            ("mean_accuracy", float),
            ("std_accuracy", float),
            ("cells", int),
        ),
    ),
}


class SchemaError(ValueError):
    """Unknown schema name or a file whose header does not match it."""


def schema_columns(schema: str) -> tuple[tuple[str, type], ...]:
    if schema not in SCHEMAS:
        raise SchemaError(f"unknown schema {schema!r}, expected one of {sorted(SCHEMAS)}")
    return SCHEMAS[schema][1]


def schema_tag(schema: str) -> str:
    schema_columns(schema)
    return f"{schema}/{SCHEMAS[schema][0]}"


def _row_dict(row) -> dict:
    if is_dataclass(row) and not isinstance(row, type):
        return asdict(row)
    return dict(row)


def _format_cell(value, typ: type) -> str:
    if typ is float:
        return repr(float(value))
    if typ is int:
        return str(int(value))
    return str(value)


def _normalise_rows(schema: str, rows: Sequence) -> list[dict]:
    cols = schema_columns(schema)
    out = []
    for row in rows:
        d = _row_dict(row)
        missing = [name for name, _ in cols if name not in d]
        if missing:
            raise SchemaError(f"row is missing columns {missing} for schema {schema!r}")
        out.append({name: typ(d[name]) for name, typ in cols})
    return out


def write_csv(path, schema: str, rows: Sequence, truncated: bool = False) -> Path:
    """Write rows under the schema's fixed column order; returns the path."""
    path = Path(path)
    cols = schema_columns(schema)
    typed = _normalise_rows(schema, rows)
    lines = [SCHEMA_PREFIX + schema_tag(schema)]
    lines.append(",".join(name for name, _ in cols))
    for row in typed:
        lines.append(",".join(_format_cell(row[name], typ) for name, typ in cols))
    if truncated:
        lines.append(TRUNCATION_MARKER)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[str, list[dict], bool]:
    """Parse a schema-tagged CSV; returns (schema, rows, truncated)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise SchemaError(f"{path} does not start with a {SCHEMA_PREFIX} line")
    tag = lines[0][len(SCHEMA_PREFIX):]
    schema, _, version = tag.partition("/")
    cols = schema_columns(schema)
    if schema_tag(schema) != tag:
        raise SchemaError(f"unsupported schema version {tag!r}")
    if len(lines) < 2 or lines[1] != ",".join(name for name, _ in cols):
        raise SchemaError(f"{path} header row does not match schema {tag!r}")
    truncated = False
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        if line.startswith(TRUNCATION_MARKER):
            truncated = True
            continue
        cells = line.split(",")
        if len(cells) != len(cols):
            raise SchemaError(f"{path}: row has {len(cells)} cells, expected {len(cols)}")
        rows.append({name: typ(cell) for (name, typ), cell in zip(cols, cells)})
    return schema, rows, truncated


def write_json(path, schema: str, rows: Sequence, truncated: bool = False) -> Path:
    """JSON mirror of the CSV contents: schema tag plus typed row objects."""
    path = Path(path)
    payload = {
        "schema": schema_tag(schema),
        "rows": _normalise_rows(schema, rows),
    }
    if truncated:
        payload["truncated"] = True
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> tuple[str, list[dict], bool]:
    path = Path(path)
    payload = json.loads(path.read_text())
    tag = payload.get("schema", "")
    schema, _, _ = tag.partition("/")
    cols = schema_columns(schema)
    if schema_tag(schema) != tag:
        raise SchemaError(f"unsupported schema version {tag!r}")
    rows = [{name: typ(row[name]) for name, typ in cols} for row in payload["rows"]]
    return schema, rows, bool(payload.get("truncated", False))


def write_result(
    out_path,
    schema: str,
    rows: Sequence,
    fmt: str = "csv",
    truncated: bool = False,
) -> list[Path]:
    """Write the primary result file plus its JSON mirror.

    ``fmt="csv"`` writes ``<out>`` as CSV and ``<out stem>.json`` as the
    mirror; ``fmt="json"`` writes JSON only.  Returns the written paths.
    """
    out_path = Path(out_path)
    if fmt not in ("csv", "json"):
        raise SchemaError(f"unknown output format {fmt!r}, expected csv or json")
    written = []
    if fmt == "csv":
        written.append(write_csv(out_path, schema, rows, truncated=truncated))
        written.append(
            write_json(out_path.with_suffix(".json"), schema, rows, truncated=truncated)
        )
    else:
        written.append(write_json(out_path, schema, rows, truncated=truncated))
    return written


def write_sidecar(
    out_path,
    subcommand: str,
    config: dict,
    seeds: Sequence[int],
    duration_s: float,
    truncated: bool = False,
) -> Path:
    """Provenance sidecar: resolved config, seeds, version, host, timing.

    Timing and host details are quarantined here so the data files stay
    deterministic.
    """
    from . import __version__

    out_path = Path(out_path)
    sidecar = out_path.with_suffix(out_path.suffix + ".meta.json")
    payload = {
        "subcommand": subcommand,
        "config": dict(config),
        "seeds": [int(s) for s in seeds],
        "version": f"vlamem-{__version__}",
        "python": platform.python_version(),
        "platform": platform.platform(),
        "machine": platform.machine(),
        "duration_s": float(duration_s),
        "truncated": bool(truncated),
    }
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return sidecar
