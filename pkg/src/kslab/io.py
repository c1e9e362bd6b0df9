"""CSV and checkpoint formats.

CSV files start with one ``# schema: <name> v<version>; columns=...`` comment
line, then a header row and comma-separated data rows with LF endings.
Floats are printed with 17 significant digits so they round-trip exactly.

Checkpoints are little-endian binary: ``b"KSS1"``, ``uint32`` dim,
``dim`` x ``uint32`` axis sizes, ``float64`` time, then the arrays n, c,
u_1..u_dim as contiguous ``float64`` in row-major order.
"""

import math
import struct
from pathlib import Path

import numpy as np

from .errors import StructuralError

CHECKPOINT_MAGIC = b"KSS1"
SCHEMA_VERSION = 1


def format_value(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    if x is None:
        return ""
    return str(x)


def write_csv(path, schema, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# schema: {schema} v{SCHEMA_VERSION}; columns={';'.join(columns)}", ",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise StructuralError(f"row has {len(row)} entries, expected {len(columns)}")
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return ``(schema_line, columns, rows)`` with values left as strings."""
    with open(path) as fh:
        text = fh.read().splitlines()
    schema = text[0] if text and text[0].startswith("#") else ""
    body = text[1:] if schema else text
    columns = body[0].split(",")
    rows = [line.split(",") for line in body[1:] if line]
    return schema, columns, rows


def write_checkpoint(path, t, n, c, u):
    n = np.ascontiguousarray(n, dtype="<f8")
    c = np.ascontiguousarray(c, dtype="<f8")
    u = np.ascontiguousarray(u, dtype="<f8")
    dim = n.ndim
    if c.shape != n.shape or u.shape != (dim,) + n.shape:
        raise StructuralError("checkpoint arrays have inconsistent shapes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", dim))
        fh.write(struct.pack(f"<{dim}I", *n.shape))
        fh.write(struct.pack("<d", float(t)))
        fh.write(n.tobytes(order="C"))
        fh.write(c.tobytes(order="C"))
        fh.write(u.tobytes(order="C"))
    return path


def read_checkpoint(path):
    """Return ``(t, n, c, u)`` as native float64 arrays."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise StructuralError(f"{path}: not a KSS1 checkpoint")
    (dim,) = struct.unpack_from("<I", data, 4)
    offset = 8
    shape = struct.unpack_from(f"<{dim}I", data, offset)
    offset += 4 * dim
    (t,) = struct.unpack_from("<d", data, offset)
    offset += 8
    size = int(np.prod(shape))
    expected = offset + 8 * size * (2 + dim)
    if len(data) != expected:
        raise StructuralError(f"{path}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    n = flat[:size].reshape(shape)
    c = flat[size : 2 * size].reshape(shape)
    u = flat[2 * size :].reshape((dim,) + tuple(shape))
    return t, n, c, u
