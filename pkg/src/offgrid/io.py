"""Binary and text file formats.

TPOLY / CGRID: ``<TAG> kmin_x kmin_y dims_x dims_y\\n`` followed by row-major
(k_y then k_x) little-endian float64 ``(re, im)`` pairs.
FGRID: ``FGRID dims_x dims_y\\n`` then row-major little-endian float64.
ASUB: ``ASUB kmin_x kmin_y dims_x dims_y R\\n``, R filters in CGRID payload
layout, then the singular values as float64.
"""

from __future__ import annotations

import os

import numpy as np

from .annihilation import AnnihilatingSubspace
from .edgemap import EdgeWeightGrid
from .phantom import CoefficientGrid
from .trigpoly import IndexRect, TrigPolynomial

__all__ = [
    "FormatError",
    "write_tpoly",
    "read_tpoly",
    "write_cgrid",
    "read_cgrid",
    "write_fgrid",
    "read_fgrid",
    "write_asub",
    "read_asub",
    "write_pgm",
    "read_pgm",
    "write_residuals",
    "read_residuals",
]

_C128 = np.dtype("<c16")
_F64 = np.dtype("<f8")


class FormatError(ValueError):
    pass


def _split(data: bytes, tag: str, nfields: int):
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(f"missing {tag} header")
    parts = data[:nl].decode("ascii").split()
    if not parts or parts[0] != tag or len(parts) != nfields + 1:
        raise FormatError(f"bad {tag} header: {data[:nl]!r}")
    try:
        fields = [int(p) for p in parts[1:]]
    except ValueError as exc:
        raise FormatError(f"bad {tag} header: {data[:nl]!r}") from exc
    return fields, data[nl + 1:]


def _write(path, header: str, payload: bytes):
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n" + payload)


def _rect_header(tag: str, rect: IndexRect) -> str:
    return f"{tag} {rect.k_min[0]} {rect.k_min[1]} {rect.dims[0]} {rect.dims[1]}"


def _complex_payload(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype=_C128).tobytes()


def _read_rect(path, tag: str):
    with open(path, "rb") as fh:
        data = fh.read()
    (kx, ky, dx, dy), body = _split(data, tag, 4)
    rect = IndexRect((kx, ky), (dx, dy))
    if len(body) != rect.size * 16:
        raise FormatError(f"{tag} payload has {len(body)} bytes, expected {rect.size * 16}")
    return rect, np.frombuffer(body, dtype=_C128).astype(complex).reshape(rect.shape)


def write_tpoly(path, mu: TrigPolynomial):
    _write(path, _rect_header("TPOLY", mu.support), _complex_payload(mu.coeffs))


def read_tpoly(path) -> TrigPolynomial:
    return TrigPolynomial(*_read_rect(path, "TPOLY"))


def write_cgrid(path, g: CoefficientGrid):
    _write(path, _rect_header("CGRID", g.support), _complex_payload(g.values))


def read_cgrid(path) -> CoefficientGrid:
    return CoefficientGrid(*_read_rect(path, "CGRID"))


def write_fgrid(path, grid):
    vals = grid.values if isinstance(grid, EdgeWeightGrid) else np.asarray(grid, dtype=float)
    gy, gx = vals.shape
    _write(path, f"FGRID {gx} {gy}", np.ascontiguousarray(vals, dtype=_F64).tobytes())


def read_fgrid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    (gx, gy), body = _split(data, "FGRID", 2)
    if len(body) != gx * gy * 8:
        raise FormatError(f"FGRID payload has {len(body)} bytes, expected {gx * gy * 8}")
    return np.frombuffer(body, dtype=_F64).astype(float).reshape(gy, gx)


def write_asub(path, D: AnnihilatingSubspace):
    header = _rect_header("ASUB", D.lam) + f" {D.rank}"
    payload = _complex_payload(D.basis.T) + np.ascontiguousarray(D.singular_values, dtype=_F64).tobytes()
    _write(path, header, payload)


def read_asub(path) -> AnnihilatingSubspace:
    with open(path, "rb") as fh:
        data = fh.read()
    (kx, ky, dx, dy, R), body = _split(data, "ASUB", 5)
    lam = IndexRect((kx, ky), (dx, dy))
    nb = R * lam.size * 16
    if len(body) < nb or (len(body) - nb) % 8:
        raise FormatError("truncated ASUB payload")
    basis = np.frombuffer(body[:nb], dtype=_C128).astype(complex).reshape(R, lam.size).T
    sv = np.frombuffer(body[nb:], dtype=_F64).astype(float)
    return AnnihilatingSubspace(lam, basis, sv)


def write_pgm(path, img, lo=None, hi=None):
    """16-bit binary PGM of ``|img|`` scaled linearly from ``[lo, hi]``."""
    a = np.abs(np.asarray(img)).astype(float)
    lo = a.min() if lo is None else lo
    hi = a.max() if hi is None else hi
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    q = np.clip(np.round((a - lo) * scale), 0, 65535).astype(">u2")
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise FormatError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dt = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data[pos + 1:], dtype=dt).reshape(h, w).astype(np.int64)


def write_residuals(path, residuals):
    with open(path, "w", newline="") as fh:
        fh.write("iter,residual\n")
        for i, r in enumerate(residuals):
            fh.write(f"{i},{float(r)!r}\n")


def read_residuals(path) -> list[float]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "iter,residual":
        raise FormatError(f"{os.fspath(path)}: missing residual CSV header")
    return [float(line.split(",")[1]) for line in lines[1:] if line]
