import numpy as np
import pytest

from conftest import random_coeffs
from offgrid.annihilation import AnnihilatingSubspace
from offgrid.edgemap import EdgeWeightGrid
from offgrid.io import (
    FormatError,
    read_asub,
    read_cgrid,
    read_fgrid,
    read_pgm,
    read_residuals,
    read_tpoly,
    write_asub,
    write_cgrid,
    write_fgrid,
    write_pgm,
    write_residuals,
    write_tpoly,
)
from offgrid.phantom import CoefficientGrid
from offgrid.trigpoly import IndexRect, TrigPolynomial


def test_tpoly_roundtrip(tmp_path, rng):
    mu = TrigPolynomial(IndexRect((-2, 1), (5, 3)), random_coeffs(rng, (3, 5)))
    write_tpoly(tmp_path / "a.tpoly", mu)
    back = read_tpoly(tmp_path / "a.tpoly")
    assert back.support == mu.support
    assert back.coeffs.tobytes() == mu.coeffs.astype(complex).tobytes()
    head = (tmp_path / "a.tpoly").read_bytes().split(b"\n")[0]
    assert head == b"TPOLY -2 1 5 3"


def test_cgrid_roundtrip(tmp_path, rng):
    g = CoefficientGrid(IndexRect.centered((7, 4)), random_coeffs(rng, (4, 7)))
    write_cgrid(tmp_path / "g.cgrid", g)
    back = read_cgrid(tmp_path / "g.cgrid")
    assert back.support == g.support and back.values.tobytes() == g.values.tobytes()
    assert (tmp_path / "g.cgrid").stat().st_size == len(b"CGRID -3 -2 7 4\n") + 28 * 16


def test_fgrid_roundtrip(tmp_path, rng):
    w = rng.random((6, 9))
    write_fgrid(tmp_path / "w.fgrid", EdgeWeightGrid(w))
    assert read_fgrid(tmp_path / "w.fgrid").tobytes() == w.tobytes()
    write_fgrid(tmp_path / "v.fgrid", w)
    assert read_fgrid(tmp_path / "v.fgrid").shape == (6, 9)


def test_asub_roundtrip(tmp_path, rng):
    lam = IndexRect.centered((3, 5))
    q, _ = np.linalg.qr(random_coeffs(rng, (15, 4)))
    D = AnnihilatingSubspace(lam, q, np.sort(rng.random(15))[::-1])
    write_asub(tmp_path / "d.asub", D)
    back = read_asub(tmp_path / "d.asub")
    assert back.lam == lam and back.rank == 4
    assert back.basis.tobytes() == D.basis.tobytes()
    assert back.singular_values.tobytes() == D.singular_values.tobytes()


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12, dtype=float).reshape(3, 4)
    write_pgm(tmp_path / "p.pgm", img)
    q = read_pgm(tmp_path / "p.pgm")
    assert q.shape == (3, 4) and q.min() == 0 and q.max() == 65535
    np.testing.assert_array_equal(q, np.round(img * 65535 / 11))
    write_pgm(tmp_path / "c.pgm", np.full((2, 2), 3.0))
    assert not read_pgm(tmp_path / "c.pgm").any()


def test_residuals_roundtrip(tmp_path):
    vals = [1.0, 0.1, 1 / 3, 1e-300]
    write_residuals(tmp_path / "r.csv", vals)
    assert read_residuals(tmp_path / "r.csv") == vals


def test_format_errors(tmp_path, rng):
    bad = tmp_path / "bad"
    bad.write_bytes(b"CGRID 0 0 2 2\n" + b"\0" * 10)
    with pytest.raises(FormatError):
        read_cgrid(bad)
    bad.write_bytes(b"FGRID 2 2\n" + b"\0" * 32)
    with pytest.raises(FormatError):
        read_cgrid(bad)
    bad.write_bytes(b"no header")
    with pytest.raises(FormatError):
        read_fgrid(bad)
    bad.write_bytes(b"CGRID a b c d\n")
    with pytest.raises(FormatError):
        read_cgrid(bad)
    bad.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        read_pgm(bad)
    bad.write_text("x,y\n0,1\n")
    with pytest.raises(FormatError):
        read_residuals(bad)
