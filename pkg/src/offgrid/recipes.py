"""Bundled phantoms and the scripted experiments behind the acceptance suite."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.fft import next_fast_len
from scipy.signal import fftconvolve

from .annihilation import (
    AnnihilatingSubspace,
    build_annihilation_matrix,
    default_model_order,
    estimate_nullspace,
    structured_lowrank_denoise,
)
from .edgemap import edge_weights, sos_grid
from .metrics import nrmse, snr_db
from .phantom import (
    CoefficientGrid,
    Ellipse,
    EllipsePhantom,
    TrigCurvePhantom,
    add_noise,
    ellipse_phantom_samples,
    image_to_coefficients,
    make_rng,
    phase_correct,
    shepp_logan,
    trig_phantom_samples,
)
from .recovery import SolverParams, lslp_exact_batch, lslp_fast, tv_baseline, wtv
from .trigpoly import IndexRect, TrigPolynomial, difference_set, dilate

__all__ = [
    "trig_phantom_names",
    "load_trig_phantom",
    "brain_phantom",
    "phase_modulated_samples",
    "center_mask",
    "fig2",
    "rank_bound",
    "fig3",
    "fig5",
    "mri_substitute",
    "Fig5Result",
]


def _trig_table() -> dict:
    return json.loads(resources.files("offgrid.data").joinpath("trig_phantoms.json").read_text())


def trig_phantom_names() -> list[str]:
    return sorted(_trig_table())


def load_trig_phantom(name: str) -> tuple[TrigPolynomial, TrigCurvePhantom]:
    """Minimal polynomial and phantom for a bundled trigonometric-curve phantom."""
    table = _trig_table()
    if name not in table:
        raise KeyError(f"unknown phantom {name!r}; have {sorted(table)}")
    e = table[name]
    rect = IndexRect(tuple(e["k_min"]), tuple(e["dims"]))
    mu = TrigPolynomial(rect, np.array(e["coeffs_re"]) + 1j * np.array(e["coeffs_im"]))
    p = TrigCurvePhantom(mu, e["amplitudes"], raster_dims=tuple(e["raster_dims"]), periodic=e["periodic"])
    return mu, p


def _unit(mu: TrigPolynomial) -> np.ndarray:
    c = mu.coeffs.ravel()
    return c / np.linalg.norm(c)


def _match_error(v: np.ndarray, c: np.ndarray) -> float:
    """Distance between unit vectors after the best unit-modulus rescaling of ``v``."""
    ph = np.vdot(v, c)
    if ph == 0:
        return float(np.linalg.norm(v - c))
    return float(np.linalg.norm(v * ph / abs(ph) - c))


# ---------------------------------------------------------------------------
# edge set recovery


def fig2(sizes=(11, 9), rel_tol: float = 1e-4) -> list[dict]:
    """Nullspace of the annihilation system for each bundled phantom and sample size."""
    rows = []
    for name in trig_phantom_names():
        mu, p = load_trig_phantom(name)
        # smaller centered grids are restrictions of the largest one
        full = trig_phantom_samples(p, IndexRect.centered((max(sizes),) * 2))
        for n in sizes:
            b = full.restrict(IndexRect.centered((n, n)))
            T = build_annihilation_matrix(b, mu.support)
            D = estimate_nullspace(T, rel_tol=rel_tol)
            sv = D.singular_values
            gap = sv[-1] / sv[-2] if sv[-2] > 0 else math.inf
            best = estimate_nullspace(T, rank=T.shape[1] - 1)
            rows.append(dict(phantom=name, samples=n, dim=D.rank, gap=float(gap),
                             error=_match_error(best.basis[:, 0], _unit(mu))))
    return rows


def rank_bound(name: str, outer=(9, 9), samples=(21, 21)) -> dict:
    """Numerical rank of ``T`` with the enlarged filter support ``outer``."""
    mu, p = load_trig_phantom(name)
    lam = IndexRect.centered(outer)
    b = trig_phantom_samples(p, IndexRect.centered(samples))
    T = build_annihilation_matrix(b, lam)
    sv = estimate_nullspace(T, rank=0).singular_values
    K, L = mu.support.dims
    expect = lam.size - (lam.dims[0] - K + 1) * (lam.dims[1] - L + 1)
    return dict(phantom=name, expected=expect, gap=float(sv[expect - 1] / sv[expect]),
                singular_values=sv)


# ---------------------------------------------------------------------------
# amplitude recovery from few samples


def center_mask(n_samples: int, trial: int, size: int = 7) -> np.ndarray:
    """DC plus ``n_samples - 1`` random other positions of the ``size x size`` center."""
    total = size * size
    dc = total // 2
    rng = make_rng(1000 * n_samples + trial)
    others = np.r_[0:dc, dc + 1:total]
    idx = np.r_[dc, rng.choice(others, n_samples - 1, replace=False)]
    m = np.zeros(total, dtype=bool)
    m[idx] = True
    return m.reshape(size, size)


def fig3(name: str, counts=None, trials: int = 10, delta_size: int = 81, ridge: float = 1e-12) -> dict:
    """Mean NRMSE of LSLP with the minimal filter given, versus the number of samples."""
    mu, p = load_trig_phantom(name)
    n = len(p.amplitudes)
    counts = list(range(1, n + 1)) if counts is None else list(counts)
    delta = IndexRect.centered((delta_size, delta_size))
    truth = trig_phantom_samples(p, delta)
    b = truth.restrict(mu.support)
    D = AnnihilatingSubspace(mu.support, _unit(mu)[:, None], np.zeros(0))
    masks = [center_mask(N, t, mu.support.dims[0]) for N in counts for t in range(trials)]
    params = SolverParams(reg=1.0, ridge=ridge, solver="direct")
    res = lslp_exact_batch(b, D, delta, params, masks)
    err = np.array([nrmse(r.g_hat.values, truth.values) for r in res]).reshape(len(counts), trials)
    return dict(phantom=name, regions=n, counts=counts, nrmse=err.mean(axis=1), trials=err)


# ---------------------------------------------------------------------------
# super-resolution of analytic phantoms


@dataclass
class Fig5Result:
    snr: dict = field(default_factory=dict)
    best_reg: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    rank: int = 0


def _solve_delta(out: IndexRect) -> IndexRect:
    # extrapolate well past the output band so the wrap-around error of the
    # fast operator lands in coefficients that are discarded
    return IndexRect.centered(tuple(2 * d - 1 for d in out.dims))


def _weight_grid(delta: IndexRect, lam: IndexRect) -> tuple[int, int]:
    sup = difference_set(lam)
    return (next_fast_len(delta.dims[0] + sup.dims[0] - 1), next_fast_len(delta.dims[1] + sup.dims[1] - 1))


def _best(runs):
    return max(runs, key=lambda r: r[0])


def fig5(samples=(65, 49), filt=(33, 25), grid: int = 257, rel_tol: float = 1e-4,
         lslp_regs=(1e6, 1e7), wtv_regs=(1e6, 1e8), tv_regs=(1e7, 1e8),
         lslp_iter: int = 3000, pd_iter: int = 1000) -> Fig5Result:
    """Shepp-Logan super-resolution with IFFT, TV, WTV and LSLP on a ``grid``-square image."""
    out = IndexRect.centered((grid, grid))
    p = shepp_logan(modified=True)
    truth = ellipse_phantom_samples(p, out)
    x0 = truth.to_image((grid, grid))
    gamma = IndexRect.centered(samples)
    b = truth.restrict(gamma)
    lam = IndexRect.centered(filt)
    res = Fig5Result()

    t0 = time.perf_counter()
    D = estimate_nullspace(build_annihilation_matrix(b, lam), rel_tol=rel_tol)
    res.rank = lam.size - D.rank
    res.seconds["subspace"] = time.perf_counter() - t0

    img = b.pad(out).to_image((grid, grid))
    res.snr["ifft"] = snr_db(img, x0)
    res.images["ifft"] = img

    t0 = time.perf_counter()
    delta = _solve_delta(out)
    w2 = sos_grid(D, _weight_grid(delta, lam), normalize=True)
    runs = []
    for reg in lslp_regs:
        r = lslp_fast(b, w2, delta, SolverParams(reg=reg, max_iter=lslp_iter, cg_tol=1e-8, jacobi=True))
        img = r.g_hat.restrict(out).to_image((grid, grid))
        runs.append((snr_db(img, x0), reg, img))
    res.snr["lslp"], res.best_reg["lslp"], res.images["lslp"] = _best(runs)
    res.seconds["lslp"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    w1 = edge_weights(D, (grid, grid), power=1)
    runs = []
    for reg in wtv_regs:
        r = wtv(b, w1, (grid, grid), SolverParams(reg=reg, max_iter=pd_iter, cg_tol=1e-6))
        runs.append((snr_db(r.image, x0), reg, r.image))
    res.snr["wtv"], res.best_reg["wtv"], res.images["wtv"] = _best(runs)
    res.seconds["wtv"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    runs = []
    for reg in tv_regs:
        r = tv_baseline(b, (grid, grid), SolverParams(reg=reg, max_iter=pd_iter, cg_tol=1e-6))
        runs.append((snr_db(r.image, x0), reg, r.image))
    res.snr["tv"], res.best_reg["tv"], res.images["tv"] = _best(runs)
    res.seconds["tv"] = time.perf_counter() - t0
    res.images["truth"] = x0
    return res


# ---------------------------------------------------------------------------
# complex-valued brain-like phantom standing in for measured MR data


def brain_phantom() -> EllipsePhantom:
    """Skull, cortex, ventricles and a few small structures on ``[0,1]^2``."""
    rows = [
        ((0.50, 0.50), (0.40, 0.46), 0, 1.0),
        ((0.50, 0.50), (0.37, 0.43), 0, -0.7),
        ((0.50, 0.52), (0.33, 0.39), 0, 0.2),
        ((0.42, 0.47), (0.05, 0.14), -15, -0.25),
        ((0.58, 0.47), (0.05, 0.14), 15, -0.25),
        ((0.50, 0.72), (0.09, 0.05), 0, 0.15),
        ((0.36, 0.30), (0.04, 0.04), 0, 0.3),
        ((0.66, 0.33), (0.03, 0.05), 30, -0.15),
        ((0.50, 0.30), (0.12, 0.04), 0, 0.1),
    ]
    return EllipsePhantom([Ellipse(c, ax, math.radians(a), amp) for c, ax, a, amp in rows])


def _phase_coefficients(rect: IndexRect, n: int = 64) -> np.ndarray:
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x)
    phase = 0.8 * np.cos(2 * np.pi * X) + 0.5 * np.sin(2 * np.pi * (Y + 0.2)) + 0.3
    return image_to_coefficients(np.exp(1j * phase), rect).values


def phase_modulated_samples(p: EllipsePhantom, gamma: IndexRect) -> CoefficientGrid:
    """Samples of ``f(r) exp(j phi(r))`` for a smooth phase ``phi``.

    The product becomes a convolution of the exact phantom coefficients with
    the (rapidly decaying, truncated) coefficients of ``exp(j phi)``.
    """
    h = IndexRect.centered((21, 21))
    f = ellipse_phantom_samples(p, dilate(gamma, h)).values
    return CoefficientGrid(gamma, fftconvolve(f, _phase_coefficients(h), mode="valid"))


def mri_substitute(samples: int = 65, snr: float = 30.0, seed: int = 7, denoise_reg: float = 1e-4,
                   lslp_reg: float = 1e4, tv_reg: float = 1e6) -> dict:
    """Phase correction, default model order, denoising and LSLP against TV."""
    gamma = IndexRect.centered((samples, samples))
    grid = 4 * samples - 3
    out = IndexRect.centered((grid, grid))
    p = brain_phantom()
    x0 = ellipse_phantom_samples(p, out).to_image((grid, grid))
    b = add_noise(phase_modulated_samples(p, gamma), snr, seed)
    bc = phase_correct(b, (4 * samples, 4 * samples))
    dims, rank = default_model_order(gamma.dims)
    lam = IndexRect.centered(dims)
    bd, history = structured_lowrank_denoise(bc, lam, rank, reg=denoise_reg, iters=10)
    D = estimate_nullspace(build_annihilation_matrix(bd, lam), rank=rank)
    delta = _solve_delta(out)
    w = sos_grid(D, _weight_grid(delta, lam), normalize=True)
    r = lslp_fast(bd, w, delta, SolverParams(reg=lslp_reg, max_iter=3000, cg_tol=1e-8, jacobi=True))
    lslp_img = r.g_hat.restrict(out).to_image((grid, grid))
    tv_img = tv_baseline(bc, (grid, grid), SolverParams(reg=tv_reg, max_iter=1000, cg_tol=1e-6)).image
    return dict(
        ifft=snr_db(bc.pad(out).to_image((grid, grid)), x0),
        lslp=snr_db(lslp_img, x0),
        tv=snr_db(tv_img, x0),
        denoise_cost=history,
        filter=dims,
        rank=rank,
    )
