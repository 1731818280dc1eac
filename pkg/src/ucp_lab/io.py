"""File formats: Matrix Market operators, grid masks and spectral results.

All three are documented byte-for-byte in ``docs/formats.md``.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.io
import scipy.sparse as sp

from .discretize import GridDiscretization
from .errors import ConfigError
from .spectral import SpectralResult

MASK_MAGIC = "UCPMASK 1"


def write_matrix_market(path, A, comment=None):
    """Write the lower triangle of a symmetric matrix in coordinate format.

    Values use Python's shortest round-trip repr, so reading them back gives
    the same doubles.
    """
    A = A.matrix if hasattr(A, "matrix") else A
    L = sp.tril(sp.csr_matrix(A)).tocoo()
    order = np.lexsort((L.row, L.col))  # column-major, like most MM writers
    rows, cols, vals = L.row[order], L.col[order], L.data[order]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{i + 1} {j + 1} {v!r}\n")


def read_matrix_market(path):
    """Read a Matrix Market file into CSR (symmetric storage is expanded)."""
    try:
        M = scipy.io.mmread(str(path))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read Matrix Market file {path}: {exc}", field="path") from exc
    return sp.csr_matrix(M)


def write_mask(path, grid: GridDiscretization):
    """Text header (one key per line, closed by ``end``) then uint8 labels in C order."""
    header = [
        MASK_MAGIC,
        f"dim {grid.dim}",
        "shape " + " ".join(str(int(n)) for n in grid.shape),
        f"h {float(grid.h)!r}",
        "origin " + " ".join(repr(float(x)) for x in grid.origin),
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(grid.labels, dtype=np.uint8).tobytes(order="C"))


def read_mask(path):
    """Returns ``(labels, h, origin)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    meta = {}
    pos = 0
    first = True
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ConfigError(f"grid mask header is not terminated: {path}")
        line = raw[pos:nl].decode("ascii")
        pos = nl + 1
        if first:
            if line != MASK_MAGIC:
                raise ConfigError(f"not a grid mask file: {path}")
            first = False
            continue
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        meta[key] = rest
    shape = tuple(int(x) for x in meta["shape"].split())
    labels = np.frombuffer(raw[pos:], dtype=np.uint8)
    if labels.size != int(np.prod(shape)):
        raise ConfigError(f"mask payload has {labels.size} bytes, header says {int(np.prod(shape))}")
    origin = np.array([float(x) for x in meta["origin"].split()])
    return labels.reshape(shape).copy(), float(meta["h"]), origin


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)  # "inf", "-inf", "nan": JSON has no literal for these
    return x


def dumps(obj):
    """Canonical JSON: sorted keys, two-space indent, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_spectral_result(path, res: SpectralResult):
    """One JSON header line, then the k x n float64 little-endian eigenvector block."""
    vecs = np.ascontiguousarray(res.eigenvectors.T, dtype="<f8")
    head = json.dumps(_jsonable(res.header()), sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(head.encode("utf-8") + b"\n")
        fh.write(vecs.tobytes(order="C"))


def read_spectral_result(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.index(b"\n")
    head = json.loads(raw[:nl].decode("utf-8"))
    k, n = head["k"], head["n"]
    block = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    if block.size != k * n:
        raise ConfigError(f"eigenvector block has {block.size} values, expected {k * n}")
    return SpectralResult(
        eigenvalues=np.array(head["eigenvalues"], dtype=float),
        eigenvectors=block.reshape(k, n).T.copy(),
        residuals=np.array(head["residuals"], dtype=float),
        iterations=head["iterations"],
        converged=head["converged"],
        tol=head["tol"],
        method=head["method"],
        meta=head.get("meta", {}),
    )
