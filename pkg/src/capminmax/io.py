"""Flat records, CSV tables and OBJ meshes.

Every number is written with 12 significant digits so that two runs can
be compared byte for byte.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

DIGITS = 12


def format_value(v):
    """Deterministic text for a scalar, string or flat sequence."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0.0:
            return "0"
        return f"{v:.{DIGITS}g}"
    if v is None:
        return "none"
    if isinstance(v, str):
        if "\n" in v:
            raise ValueError("record values must be single-line")
        return v
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(format_value(x) for x in np.asarray(v, dtype=object).ravel())
    raise TypeError(f"cannot format {type(v).__name__}")


def record_text(record):
    lines = []
    for key, value in record.items():
        if "=" in key or " " in key:
            raise ValueError(f"bad record key {key!r}")
        lines.append(f"{key}={format_value(value)}")
    return "\n".join(lines) + "\n"


def write_record(path, record):
    Path(path).write_text(record_text(record))


def read_record(path):
    """Record file back into a dict of strings (order preserved)."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(x) for x in row])


def read_csv(path):
    """Header and rows of floats."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(x) for x in row] for row in r]
    return header, rows


def write_obj(path, pair, name="pair"):
    """Vertices plus named objects ``sigma``, ``gamma`` and ``contact``.

    The contact line is stored as ``l`` records, closed if the pair's
    contact polyline is closed.
    """
    lines = [f"# {name}"]
    for v in pair.vertices:
        lines.append("v " + " ".join(format_value(float(x)) for x in v))
    for label, tris in (("sigma", pair.sigma_triangles), ("gamma", pair.gamma_triangles)):
        lines.append(f"o {label}")
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in tris]
    c = [int(i) + 1 for i in pair.contact_polyline]
    if c:
        if pair.contact_closed:
            c.append(c[0])
        lines.append("o contact")
        lines.append("l " + " ".join(str(i) for i in c))
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path):
    """(vertices, {object: faces}, contact index list) with 0-based ids."""
    verts, faces, contact = [], {}, []
    current = None
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts or parts[0] == "#":
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "o":
            current = parts[1]
            faces.setdefault(current, [])
        elif parts[0] == "f":
            faces[current].append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
        elif parts[0] == "l":
            contact += [int(x) - 1 for x in parts[1:]]
    return (np.array(verts), {k: np.array(v, dtype=np.int64).reshape(-1, 3) for k, v in faces.items()},
            contact)
