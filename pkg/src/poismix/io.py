"""Readers and writers for datasets, parameters and plot-ready tables.

CSV files start with a ``# poismix-<kind> v<version>`` comment line. Dataset
files may omit it (so externally produced recordings load directly), but a
comment naming another kind or version is rejected.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .cmp import CmpParams, SpikeDataset
from .errors import SchemaError

CSV_VERSION = 1
PARAMS_SCHEMA = "poismix-params"
PARAMS_VERSION = 1


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _header_line(kind):
    return f"# poismix-{kind} v{CSV_VERSION}"


def write_table(path, kind, columns, rows):
    """Write a versioned CSV table; floats are written with round-trip precision."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header_line(kind) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _check_version(line, kind, path, required):
    if not line.startswith("#"):
        if required:
            raise SchemaError(f"{path}: missing '{_header_line(kind)}' header line")
        return False
    if line.strip() != _header_line(kind):
        raise SchemaError(
            f"{path}: header {line.strip()!r} does not match expected {_header_line(kind)!r}"
        )
    return True


def read_table(path, kind):
    """Read a table written by :func:`write_table`; returns ``(columns, rows)`` of strings."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        _check_version(first, kind, path, required=True)
        reader = csv.reader(fh)
        columns = next(reader)
        return columns, [row for row in reader]


def write_dataset(path, d: SpikeDataset):
    columns = ["stimulus"] + [f"n_{k + 1}" for k in range(d.n_neurons)]
    rows = ([float(z)] + [int(c) for c in n] for z, n in zip(d.stimuli, d.counts))
    return write_table(path, "dataset", columns, rows)


def read_dataset(path) -> SpikeDataset:
    """Load ``stimulus,n_1,...,n_m`` rows; errors name the offending line and column.

    Raises
    ------
    SchemaError
        On a bad header, wrong field count, or a malformed value.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: file is empty")
    offset = 1 if _check_version(lines[0], "dataset", path, required=False) else 0
    rows = list(csv.reader(lines[offset:]))
    if not rows:
        raise SchemaError(f"{path}: missing column header")
    header = [h.strip() for h in rows[0]]
    expected = ["stimulus"] + [f"n_{k + 1}" for k in range(len(header) - 1)]
    if len(header) < 2 or header != expected:
        raise SchemaError(
            f"{path}:{offset + 1}: header must be 'stimulus,n_1,...,n_m', got {','.join(header)!r}"
        )
    stimuli, counts = [], []
    for i, row in enumerate(rows[1:], start=offset + 2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        try:
            z = float(row[0])
        except ValueError:
            raise SchemaError(f"{path}:{i}: column 'stimulus': not a number: {row[0]!r}") from None
        if not np.isfinite(z):
            raise SchemaError(f"{path}:{i}: column 'stimulus': not finite")
        vals = []
        for name, cell in zip(header[1:], row[1:]):
            try:
                v = int(cell)
            except ValueError:
                raise SchemaError(
                    f"{path}:{i}: column {name!r}: expected a nonnegative integer, got {cell!r}"
                ) from None
            if v < 0:
                raise SchemaError(f"{path}:{i}: column {name!r}: negative count {v}")
            vals.append(v)
        stimuli.append(z)
        counts.append(vals)
    if not counts:
        raise SchemaError(f"{path}: no data rows")
    return SpikeDataset(np.array(counts, dtype=np.int64), np.array(stimuli))


def params_to_dict(p: CmpParams):
    h = p.harmonium
    return {
        "schema": PARAMS_SCHEMA,
        "version": PARAMS_VERSION,
        "n_neurons": p.n_neurons,
        "n_components": p.n_components,
        "bias": h.bias.tolist(),
        "cat_bias": h.cat_bias.tolist(),
        "interaction": h.interaction.tolist(),
        "link": p.link.tolist(),
    }


def params_from_dict(data, source="<params>") -> CmpParams:
    if data.get("schema") != PARAMS_SCHEMA or data.get("version") != PARAMS_VERSION:
        raise SchemaError(
            f"{source}: expected schema {PARAMS_SCHEMA!r} version {PARAMS_VERSION}, "
            f"got {data.get('schema')!r} version {data.get('version')!r}"
        )
    try:
        m_n = int(data["n_neurons"])
        interaction = np.array(data["interaction"], dtype=float).reshape(-1, m_n)
        return CmpParams.from_arrays(data["bias"], data["cat_bias"], interaction, data["link"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{source}: malformed parameters: {exc}") from None


def write_json(path, obj):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def write_params(path, p: CmpParams):
    return write_json(path, params_to_dict(p))


def read_params(path) -> CmpParams:
    """Load parameters from a params file or from the ``params`` entry of a fit report."""
    data = read_json(path)
    if "params" in data and isinstance(data["params"], dict):
        data = data["params"]
    return params_from_dict(data, str(path))
