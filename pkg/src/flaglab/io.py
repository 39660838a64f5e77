"""File formats: binary operator matrices, JSON reports, CSV series, run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .group import Backend
from .harmonics import BASIS_ORDER_VERSION, FunctionCoefficients, labels
from .transfer import OperatorMatrix

__all__ = [
    "MATRIX_MAGIC",
    "MatrixFormatError",
    "encode_matrix",
    "decode_matrix",
    "write_operator",
    "read_operator",
    "dumps_json",
    "write_json",
    "write_text",
    "coefficients_csv",
    "read_coefficients_csv",
    "sha256_file",
]

MATRIX_MAGIC = b"FSLMAT01"
_HEADER = struct.Struct("<8sIIBB2s")


class MatrixFormatError(ValueError):
    pass


def encode_matrix(m: np.ndarray, adjoint: bool) -> bytes:
    m = np.asarray(m)
    if m.ndim != 2:
        raise MatrixFormatError("expected a 2-d array")
    is_complex = np.iscomplexobj(m)
    rows, cols = m.shape
    head = _HEADER.pack(MATRIX_MAGIC, rows, cols, int(is_complex), int(adjoint), b"\0\0")
    dtype = "<c16" if is_complex else "<f8"
    return head + np.ascontiguousarray(m, dtype=dtype).tobytes()


def decode_matrix(blob: bytes) -> tuple[np.ndarray, bool]:
    if len(blob) < _HEADER.size:
        raise MatrixFormatError("truncated header")
    magic, rows, cols, cflag, aflag, _ = _HEADER.unpack_from(blob)
    if magic != MATRIX_MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}")
    if cflag not in (0, 1) or aflag not in (0, 1):
        raise MatrixFormatError("bad flag byte")
    dtype = "<c16" if cflag else "<f8"
    body = blob[_HEADER.size:]
    expected = rows * cols * np.dtype(dtype).itemsize
    if len(body) != expected:
        raise MatrixFormatError(f"payload has {len(body)} bytes, expected {expected}")
    m = np.frombuffer(body, dtype=dtype).reshape(rows, cols).astype(complex if cflag else float)
    return m, bool(aflag)


def _nan_to_none(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _nan_to_none(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_nan_to_none(v) for v in x]
    if isinstance(x, np.generic):
        return _nan_to_none(x.item())
    if isinstance(x, np.ndarray):
        return _nan_to_none(x.tolist())
    return x


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, non-finite floats as null."""
    return json.dumps(_nan_to_none(obj), sort_keys=True, indent=2) + "\n"


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_json(path: Path, obj) -> Path:
    return write_text(path, dumps_json(obj))


def operator_sidecar(op: OperatorMatrix) -> dict:
    return {
        "backend": op.backend.value,
        "cutoff": op.cutoff,
        "basis_order_version": BASIS_ORDER_VERSION,
        "measure_hash": op.measure_hash,
        "quadrature_order": op.band_limit,
        "adjoint": op.adjoint,
        "self_check_error": op.self_check_error,
    }


def write_operator(path: Path, op: OperatorMatrix) -> tuple[Path, Path]:
    """Write the matrix file and its ``.json`` sidecar; returns both paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_matrix(op.matrix, op.adjoint))
    side = path.with_suffix(path.suffix + ".json")
    write_json(side, operator_sidecar(op))
    return path, side


def read_operator(path: Path) -> OperatorMatrix:
    path = Path(path)
    m, adjoint = decode_matrix(path.read_bytes())
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if side.get("basis_order_version") != BASIS_ORDER_VERSION:
        raise MatrixFormatError(f"basis order {side.get('basis_order_version')!r} is not supported")
    if bool(side["adjoint"]) != adjoint:
        raise MatrixFormatError("adjoint flag disagrees with the sidecar")
    return OperatorMatrix(Backend(side["backend"]), side["cutoff"], m, adjoint, side["quadrature_order"],
                          side["measure_hash"], side.get("self_check_error"))


def coefficients_csv(u: FunctionCoefficients) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "tau", "inner", "real", "imag"])
    for lab, c in zip(labels(u.backend, u.cutoff), u.values):
        c = complex(c)
        w.writerow([f"{lab.tau}:{lab.inner_index}", lab.tau, lab.inner_index,
                    repr(c.real), repr(c.imag)])
    return buf.getvalue()


def read_coefficients_csv(text: str, backend) -> FunctionCoefficients:
    rows = list(csv.DictReader(io.StringIO(text)))
    vals = np.array([complex(float(r["real"]), float(r["imag"])) for r in rows])
    cutoff = max(int(r["tau"]) for r in rows)
    u = FunctionCoefficients.zeros(backend, cutoff)
    if len(vals) != len(u.values):
        raise MatrixFormatError("coefficient table does not fill a whole cutoff")
    if not np.iscomplexobj(u.values):
        vals = vals.real
    return FunctionCoefficients(backend, cutoff, vals)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
