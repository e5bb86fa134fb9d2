import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.fft import next_fast_len

from conftest import bundled, bundled_samples, random_coeffs
from offgrid.annihilation import AnnihilatingSubspace, build_annihilation_matrix, estimate_nullspace
from offgrid.edgemap import EdgeWeightGrid, sos_grid
from offgrid.phantom import CoefficientGrid, trig_phantom_samples
from offgrid.recipes import _unit
from offgrid.recovery import (
    CgDiverged,
    LslpExactOperator,
    LslpFastOperator,
    SolverParams,
    StepSizeViolation,
    WeightGridTooSmall,
    conjugate_gradient,
    default_delta,
    div,
    grad,
    lslp_exact,
    lslp_fast,
    tv_baseline,
    wtv,
)
from offgrid.trigpoly import IndexRect, grid_evaluate, rasterize_regions


def minimal_filter(name):
    mu, _ = bundled(name)
    return AnnihilatingSubspace(mu.support, _unit(mu)[:, None], np.zeros(0))


@functools.lru_cache(maxsize=None)
def enlarged_subspace():
    lam = IndexRect.centered((9, 9))
    return estimate_nullspace(build_annihilation_matrix(bundled_samples("curve4", 21), lam), rel_tol=1e-4)


def fast_weights(D, delta):
    n = next_fast_len(max(delta.dims) + 2 * max(D.lam.dims))
    return sos_grid(D, (n, n))


@functools.lru_cache(maxsize=None)
def extrapolation_81():
    mu, p = bundled("curve4")
    delta = IndexRect.centered((81, 81))
    truth = trig_phantom_samples(p, delta)
    b = truth.restrict(IndexRect.centered((7, 7)))
    res = lslp_exact(b, minimal_filter("curve4"), delta, SolverParams(reg=1.0, solver="direct", ridge=1e-12))
    return mu, b, truth, res.g_hat


def test_solver_params_validation():
    for bad in (dict(reg=0.0), dict(cg_tol=1.0), dict(max_iter=0), dict(solver="lu"), dict(ridge=-1.0)):
        with pytest.raises(ValueError):
            SolverParams(**bad)
    with pytest.raises(StepSizeViolation):
        SolverParams(pd_steps=(0.5, 0.5)).steps()
    tau, sigma = SolverParams().steps()
    assert tau * sigma * 8 <= 1


def test_default_delta():
    assert default_delta(IndexRect.centered((11, 11))).dims == (45, 45)
    assert default_delta(IndexRect.centered((65, 49))).dims == (261, 197)


def test_conjugate_gradient_matches_solve(rng):
    A = random_coeffs(rng, (30, 30))
    A = A.conj().T @ A + np.eye(30)
    rhs = random_coeffs(rng, 30)
    x, hist = conjugate_gradient(lambda v: A @ v, rhs, np.zeros(30, complex), tol=1e-12, max_iter=200)
    np.testing.assert_allclose(x, np.linalg.solve(A, rhs), rtol=1e-9)
    assert hist[-1] <= 1e-12
    assert np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs) <= 1e-12
    with pytest.raises(CgDiverged):
        conjugate_gradient(lambda v: A @ v, rhs, np.zeros(30, complex), tol=1e-12, max_iter=2)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(9, 20), st.integers(9, 20), st.integers(0, 2**32 - 1))
def test_exact_operator_adjoint(rank, nx, ny, seed):
    r = np.random.default_rng(seed)
    lam = IndexRect.centered((3, 4))
    q, _ = np.linalg.qr(random_coeffs(r, (lam.size, rank)))
    op = LslpExactOperator(AnnihilatingSubspace(lam, q, np.zeros(0)), IndexRect.centered((nx, ny)))
    x = random_coeffs(r, (ny, nx))
    y = random_coeffs(r, op.forward(x).shape)
    lhs = np.vdot(y, op.forward(x))
    rhs = np.vdot(op.adjoint(y), x)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_exact_operator_sparse_and_diagonal(rng):
    lam = IndexRect.centered((3, 3))
    q, _ = np.linalg.qr(random_coeffs(rng, (9, 2)))
    op = LslpExactOperator(AnnihilatingSubspace(lam, q, np.zeros(0)), IndexRect.centered((11, 9)))
    x = random_coeffs(rng, (9, 11))
    Q = op.sparse()
    np.testing.assert_allclose(Q @ x.ravel(), op.forward(x).ravel(), atol=1e-10)
    np.testing.assert_allclose(op.diagonal().ravel(), (Q.conj().T @ Q).diagonal().real, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fast_operator_hermitian_psd(seed):
    r = np.random.default_rng(seed)
    delta = IndexRect.centered((13, 11))
    op = LslpFastOperator(EdgeWeightGrid(r.random((24, 24))), delta)
    x, y = random_coeffs(r, delta.shape), random_coeffs(r, delta.shape)
    a, b = np.vdot(y, op.gram(x)), np.vdot(op.gram(y), x)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
    assert np.vdot(x, op.gram(x)).real >= -1e-10


def test_fast_operator_rejects_small_grid():
    with pytest.raises(WeightGridTooSmall):
        LslpFastOperator(EdgeWeightGrid(np.ones((16, 16))), IndexRect.centered((17, 17)))
    with pytest.raises(WeightGridTooSmall):
        LslpFastOperator(EdgeWeightGrid(np.ones((20, 20)), IndexRect.centered((7, 7))), IndexRect.centered((17, 17)))


def test_fast_and_exact_operators_agree():
    # for coefficients supported on Gamma inside Delta = 4 x Gamma the full and
    # valid convolutions coincide, so P*P = I holds exactly there
    D = AnnihilatingSubspace(enlarged_subspace().lam, enlarged_subspace().basis[:, :8], np.zeros(0))
    gamma = IndexRect.centered((11, 11))
    delta = default_delta(gamma)
    exact = LslpExactOperator(D, delta)
    fast = LslpFastOperator(fast_weights(D, delta), delta)
    r = np.random.default_rng(7)
    for x in (bundled_samples("curve4", 11), CoefficientGrid(gamma, random_coeffs(r, gamma.shape))):
        g = x.pad(delta).values
        a, b = exact.gram(g), fast.gram(g)
        assert np.linalg.norm(a - b) / np.linalg.norm(a) <= 1e-2


def test_lslp_exact_passthrough():
    b = bundled_samples("curve4", 11)
    res = lslp_exact(b, minimal_filter("curve4"), b.support, SolverParams(reg=1e8, max_iter=2000, cg_tol=1e-12))
    assert np.linalg.norm(res.g_hat.values - b.values) / b.norm() <= 1e-6
    assert res.residuals[-1] <= 1e-12


def test_lslp_fast_zero_weights_passthrough():
    b = bundled_samples("curve4", 11)
    delta = IndexRect.centered((31, 31))
    res = lslp_fast(b, EdgeWeightGrid(np.zeros((40, 40))), delta, SolverParams(reg=1.0))
    np.testing.assert_allclose(res.g_hat.values, b.pad(delta).values, atol=1e-12)


def _solution_gap():
    D = AnnihilatingSubspace(enlarged_subspace().lam, enlarged_subspace().basis[:, :8], np.zeros(0))
    b = bundled_samples("curve4", 21)
    delta = default_delta(b.support)
    params = SolverParams(reg=1e8, solver="direct", ridge=1e-12)
    ex = lslp_exact(b, D, delta, params).g_hat.values
    # the fast problem is solved on a doubled rectangle and cut back to delta
    big = IndexRect.centered(tuple(2 * d - 1 for d in delta.dims))
    fa = lslp_fast(b, fast_weights(D, big), big, SolverParams(reg=1e8, max_iter=20000, cg_tol=1e-10, jacobi=True))
    return np.linalg.norm(fa.g_hat.restrict(delta).values - ex) / np.linalg.norm(ex)


@functools.lru_cache(maxsize=None)
def solution_gap():
    return _solution_gap()


def test_fast_and_exact_solutions_close():
    # the fast operator also penalizes the boundary rows of the full convolution,
    # which pulls its extrapolation towards zero near the edge of delta
    assert solution_gap() <= 1e-1


@pytest.mark.xfail(strict=True, reason="the recovered coefficients differ by about 5e-2, not 1e-2")
def test_fast_and_exact_solutions_within_1e2():
    assert solution_gap() <= 1e-2


def test_heldout_extrapolation():
    _, b, truth, g = extrapolation_81()
    delta = truth.support
    # held-out samples well inside delta; the outer rim is biased by the finite window
    held = np.zeros(delta.shape, bool)
    held[IndexRect.centered((41, 41)).slice_in(delta)] = True
    held[b.support.slice_in(delta)] = False
    err = np.linalg.norm((g.values - truth.values)[held]) / np.linalg.norm(truth.values[held])
    assert err <= 1e-3


def test_output_is_piecewise_constant():
    mu, _, truth, g = extrapolation_81()
    n = 256
    lab = rasterize_regions(mu, (n, n), zero_band=0.0, periodic=True)
    keep = np.abs(grid_evaluate(mu, (n, n)).real)
    keep = keep > 0.2 * keep.max()
    # a Hann taper removes the Gibbs ringing of the truncated series
    KX, KY = g.support.frequencies()
    half = g.support.dims[0] // 2 + 1
    taper = np.cos(np.pi * KX / (2 * half)) ** 2 * np.cos(np.pi * KY / (2 * half)) ** 2
    img = CoefficientGrid(g.support, g.values * taper).to_image((n, n)).real
    span = img.max() - img.min()
    worst = max(img[(lab.labels == i) & keep].std() for i in range(1, lab.component_count + 1))
    assert worst <= 1e-2 * span


def test_grad_div_adjoint(rng):
    u = rng.standard_normal((12, 15))
    q = rng.standard_normal((2, 12, 15))
    assert np.vdot(grad(u), q) == pytest.approx(-np.vdot(u, div(q)), abs=1e-10)


def test_wtv_zero_weights_is_data_fit():
    b = bundled_samples("curve4", 11)
    res = wtv(b, 0.0, (32, 32), SolverParams(reg=1.0, max_iter=50))
    np.testing.assert_allclose(res.image, b.to_image((32, 32)), atol=1e-10)


def test_wtv_unit_weights_is_tv():
    b = bundled_samples("curve8", 11)
    params = SolverParams(reg=100.0, max_iter=100)
    a = wtv(b, np.ones((32, 32)), (32, 32), params).image
    t = tv_baseline(b, (32, 32), params).image
    np.testing.assert_allclose(a, t, atol=1e-6)


def test_tv_large_lambda_matches_data():
    b = bundled_samples("curve4", 11)
    res = tv_baseline(b, (32, 32), SolverParams(reg=1e8, max_iter=300))
    coef = np.fft.fft2(res.image) / res.image.size
    KX, KY = b.support.frequencies()
    got = coef[KY % 32, KX % 32]
    assert np.linalg.norm(got - b.values) / b.norm() <= 1e-4


def test_tv_stripe_image_is_separable():
    # a box in x, constant in y: only the k_y = 0 row is nonzero
    gamma = IndexRect.centered((21, 21))
    KX, KY = gamma.frequencies()
    box = np.where(KX == 0, 0.4, np.sin(np.pi * 0.4 * KX) / (np.pi * np.where(KX == 0, 1, KX)))
    b = CoefficientGrid(gamma, np.where(KY == 0, box, 0.0).astype(complex))
    u = tv_baseline(b, (64, 64), SolverParams(reg=1e7, max_iter=300)).image
    x = np.arange(64) / 64
    truth = np.where(np.abs((x + 0.5) % 1 - 0.5) < 0.2, 1.0, 0.0)
    err = np.abs(u - truth[None, :])
    assert np.ptp(err, axis=0).max() <= 1e-10
    # the error sits at the two jumps
    prof = err[0]
    d = np.minimum(np.abs(x - 0.2), np.abs(x - 0.8))
    assert prof[d < 3 / 64].mean() > 3 * prof[d >= 6 / 64].mean()


def test_wtv_energy_decreases():
    b = bundled_samples("curve4", 11)
    w = sos_grid(minimal_filter("curve4"), (48, 48), normalize=True).values ** 0.5
    e = np.array(wtv(b, w, (48, 48), SolverParams(reg=1e3, max_iter=200), track_energy=True).residuals)
    avg = np.convolve(e[20:], np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(avg) <= 1e-8 * abs(avg[0]))
