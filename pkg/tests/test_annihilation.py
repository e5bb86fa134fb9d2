import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import convolve2d

from conftest import bundled, bundled_samples, hermitian, random_coeffs
from offgrid.annihilation import (
    RankTooLarge,
    annihilation_adjoint,
    build_annihilation_matrix,
    default_model_order,
    estimate_nullspace,
    gram_diagonal,
    minimal_square_grid,
    satisfies_necessary_count,
    shifted_filters,
    structured_lowrank_denoise,
)
from offgrid.phantom import CoefficientGrid, TrigCurvePhantom, add_noise, derivative_weight, make_rng, trig_phantom_samples
from offgrid.recipes import _match_error, _unit
from offgrid.trigpoly import EmptyContraction, IndexRect, TrigPolynomial, contract, divide, rasterize_regions


def random_grid(r, rect):
    return CoefficientGrid(rect, random_coeffs(r, rect.shape))


def test_matrix_shapes():
    lam = IndexRect.centered((7, 7))
    b = CoefficientGrid(IndexRect.centered((11, 11)), np.ones((11, 11)))
    assert build_annihilation_matrix(b, lam).shape == (50, 49)
    # the 128 x 128 / 64 x 64 configuration, by the row count formula
    n = contract(IndexRect.centered((128, 128)), IndexRect.centered((64, 64))).size
    assert (2 * n, 64 * 64) == (8450, 4096)
    zero = CoefficientGrid(IndexRect.centered((9, 9)), np.zeros((9, 9)))
    assert not build_annihilation_matrix(zero, IndexRect.centered((3, 3))).entries.any()
    with pytest.raises(EmptyContraction):
        build_annihilation_matrix(zero, IndexRect.centered((11, 3)))


def test_matrix_product_is_valid_convolution(rng):
    gamma = IndexRect((-4, -3), (10, 8))
    lam = IndexRect((-1, -2), (4, 3))
    b = random_grid(rng, gamma)
    c = random_coeffs(rng, lam.shape)
    T = build_annihilation_matrix(b, lam)
    gx, gy = derivative_weight(b)
    want = np.r_[convolve2d(gx.values, c, mode="valid").ravel(), convolve2d(gy.values, c, mode="valid").ravel()]
    np.testing.assert_allclose(T @ c.ravel(), want, atol=1e-10)


def test_row_layout(rng):
    # row l of the x-block is (j 2 pi (l-k)_x f[l-k] : k in lam), k flattened row-major
    gamma = IndexRect.centered((7, 6))
    lam = IndexRect.centered((3, 2))
    b = random_grid(rng, gamma)
    T = build_annihilation_matrix(b, lam)
    shifts = contract(gamma, lam)
    SX, SY = shifts.frequencies()
    KX, KY = lam.frequencies()
    for row, (lx, ly) in enumerate(zip(SX.ravel(), SY.ravel())):
        expect = [2j * np.pi * (lx - kx) * b[(lx - kx, ly - ky)] for kx, ky in zip(KX.ravel(), KY.ravel())]
        np.testing.assert_allclose(T.entries[row], expect, atol=1e-12)
        expect = [2j * np.pi * (ly - ky) * b[(lx - kx, ly - ky)] for kx, ky in zip(KX.ravel(), KY.ravel())]
        np.testing.assert_allclose(T.entries[shifts.size + row], expect, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 12), st.integers(3, 12), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_adjoint_identity(gx, gy, lx, ly, seed):
    r = np.random.default_rng(seed)
    gamma = IndexRect.centered((gx, gy))
    lam = IndexRect.centered((lx, ly))
    x = random_grid(r, gamma)
    T = build_annihilation_matrix(x, lam).entries
    Y = random_coeffs(r, T.shape)
    lhs = np.vdot(Y, T)
    rhs = np.vdot(annihilation_adjoint(Y, gamma, lam).values, x.values)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_gram_is_diagonal():
    gamma = IndexRect.centered((9, 8))
    lam = IndexRect.centered((4, 3))
    diag = gram_diagonal(gamma, lam)
    for idx in [(0, 0), (3, 4), (7, 8), (2, 5)]:
        e = CoefficientGrid(gamma, np.zeros(gamma.shape))
        e.values[idx] = 1.0
        out = annihilation_adjoint(build_annihilation_matrix(e, lam).entries, gamma, lam).values
        expect = np.zeros(gamma.shape)
        expect[idx] = diag[idx]
        np.testing.assert_allclose(out, expect, atol=1e-9)
    assert diag[gamma.shape[0] // 2, gamma.shape[1] // 2] == 0


def test_nullspace_matches_minimal_polynomial():
    for name in ("curve4", "curve8"):
        mu, _ = bundled(name)
        T = build_annihilation_matrix(bundled_samples(name, 11), mu.support)
        D = estimate_nullspace(T, rel_tol=1e-4)
        assert D.rank == 1
        assert _match_error(D.basis[:, 0], _unit(mu)) <= 1e-5
        np.testing.assert_allclose(D.basis.conj().T @ D.basis, np.eye(1), atol=1e-10)
        assert np.linalg.norm(T @ D.basis[:, 0]) <= 1e-4 * np.linalg.norm(T.entries, 2)


def test_rank_modes(rng):
    A = random_coeffs(rng, (30, 12))
    lam = IndexRect.centered((4, 3))
    assert estimate_nullspace(A, rank=12, lam=lam).rank == 0
    full = estimate_nullspace(A, rank=0, lam=lam)
    assert full.rank == 12 and full.singular_values.size == 12
    np.testing.assert_allclose(full.basis.conj().T @ full.basis, np.eye(12), atol=1e-10)
    with pytest.raises(RankTooLarge):
        estimate_nullspace(A, rank=13, lam=lam)
    with pytest.raises(ValueError):
        estimate_nullspace(A, rank=2, rel_tol=0.1, lam=lam)
    # wide matrices report zeros for the missing singular values
    wide = estimate_nullspace(A[:5], rel_tol=1e-6, lam=lam)
    assert wide.singular_values.size == 12 and wide.rank == 7


def test_enlarged_support_rank():
    mu, _ = bundled("curve4")
    lam = IndexRect.centered((9, 9))
    T = build_annihilation_matrix(bundled_samples("curve4", 21), lam)
    D = estimate_nullspace(T, rel_tol=1e-4)
    assert D.rank == 9
    # every shift of the minimal filter that fits in the enlarged support annihilates
    S = shifted_filters(mu, lam)
    assert S.shape == (81, 9)
    scale = np.linalg.norm(T.entries, 2)
    for c in S.T:
        assert np.linalg.norm(T @ c) <= 1e-4 * scale * np.linalg.norm(c)
    # divisibility: each nullspace filter is the minimal polynomial times a cofactor
    for d in D.basis.T:
        _, res = divide(TrigPolynomial.from_vector(lam, d), mu)
        assert res <= 1e-4


def test_default_model_order():
    assert default_model_order((100, 100)) == ((50, 50), 1250)
    assert default_model_order((128, 128)) == ((64, 64), 2048)
    assert default_model_order((4, 4)) == ((2, 2), 2)


def test_necessary_count():
    assert minimal_square_grid((6, 6)) == 11
    assert satisfies_necessary_count((6, 6), (11, 11))
    assert not satisfies_necessary_count((6, 6), (10, 10))
    assert 2 * 5 * 5 == 50 >= 49 - 1


def _random_phantom(seed):
    r = make_rng(seed)
    c = hermitian(random_coeffs(r, (3, 3)))
    c[1, 1] = 0.3 * r.standard_normal()
    mu = TrigPolynomial(IndexRect.centered((3, 3)), c)
    n = rasterize_regions(mu, (1024, 1024), zero_band=0.0, periodic=True).component_count
    return mu, TrigCurvePhantom(mu, list(np.linspace(-1, 1, n) + 0.3), raster_dims=(1024, 1024))


@pytest.mark.parametrize("seed", range(5))
def test_exact_recovery_at_necessary_count(seed):
    mu, p = _random_phantom(seed)
    n = minimal_square_grid(mu.degree)
    T = build_annihilation_matrix(trig_phantom_samples(p, IndexRect.centered((n, n))), mu.support)
    D = estimate_nullspace(T, rel_tol=1e-4)
    sv = D.singular_values
    assert D.rank == 1
    assert sv[-1] / sv[-2] <= 1e-4 and sv[-2] / sv[0] > 1e-3
    assert _match_error(D.basis[:, 0], _unit(mu)) <= 1e-5


def test_denoise_fixed_point(rng):
    b = random_grid(rng, IndexRect.centered((9, 9)))
    lam = IndexRect.centered((3, 3))
    # rank equal to the number of columns: nothing to truncate
    g, hist = structured_lowrank_denoise(b, lam, 9, 1.0, 5)
    np.testing.assert_allclose(g.values, b.values, atol=1e-10)
    assert max(hist) <= 1e-10 * b.norm() ** 2
    with pytest.raises(ValueError):
        structured_lowrank_denoise(b, lam, 0, 1.0, 5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0, 10.0]), st.integers(1, 8))
def test_denoise_cost_non_increasing(seed, reg, rank):
    r = np.random.default_rng(seed)
    b = random_grid(r, IndexRect.centered((11, 9)))
    _, hist = structured_lowrank_denoise(b, IndexRect.centered((4, 4)), rank, reg, 10)
    assert len(hist) == 10
    assert all(later <= earlier * (1 + 1e-10) for earlier, later in zip(hist, hist[1:]))


def test_denoise_improves_edge_estimate():
    # 30 dB noise, enlarged 9x9 support with its known rank of 72
    lam = IndexRect.centered((9, 9))
    for name in ("curve4", "curve8"):
        mu, _ = bundled(name)
        b = bundled_samples(name, 21)
        before, after = [], []
        for seed in range(10):
            noisy = add_noise(b, 30.0, seed)
            g, _ = structured_lowrank_denoise(noisy, lam, 72, 1.0, 10)
            for src, out in ((noisy, before), (g, after)):
                D = estimate_nullspace(build_annihilation_matrix(src, mu.support), rank=mu.support.size - 1)
                out.append(_match_error(D.basis[:, 0], _unit(mu)))
        assert np.mean(after) < np.mean(before)
        assert sum(a < b for a, b in zip(after, before)) >= 9
