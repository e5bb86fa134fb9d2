"""Edge-aware recovery: Fourier extrapolation (LSLP) and weighted TV.

LSLP works on coefficients indexed by an extrapolation rectangle ``delta``;
WTV and TV work on spatial samples at ``r = (m/gx, n/gy)`` whose Fourier
coefficients are the normalized DFT ``fft2(u) / (gx gy)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .annihilation import AnnihilatingSubspace
from .edgemap import EdgeWeightGrid
from .phantom import CoefficientGrid
from .trigpoly import IndexRect, _pair

__all__ = [
    "SolverParams",
    "RecoveryResult",
    "CgDiverged",
    "WeightGridTooSmall",
    "StepSizeViolation",
    "conjugate_gradient",
    "LslpExactOperator",
    "LslpFastOperator",
    "lslp_exact",
    "lslp_exact_batch",
    "lslp_fast",
    "wtv",
    "tv_baseline",
    "wtv_energy",
    "grad",
    "div",
    "default_delta",
    "lambda_grid",
]


class CgDiverged(RuntimeError):
    pass


class WeightGridTooSmall(ValueError):
    pass


class StepSizeViolation(ValueError):
    pass


GRAD_NORM_SQ = 8.0


@dataclass
class SolverParams:
    reg: float = 1.0
    max_iter: int = 500
    cg_tol: float = 1e-8
    pd_steps: tuple[float, float] | None = None
    jacobi: bool = False
    solver: str = "cg"
    ridge: float = 0.0

    def __post_init__(self):
        if not self.reg > 0:
            raise ValueError(f"reg must be positive, got {self.reg}")
        if not 0 < self.cg_tol < 1:
            raise ValueError(f"cg_tol must be in (0, 1), got {self.cg_tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.solver not in ("cg", "direct"):
            raise ValueError(f"solver must be 'cg' or 'direct', got {self.solver!r}")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")

    def steps(self) -> tuple[float, float]:
        if self.pd_steps is None:
            t = 0.99 / math.sqrt(GRAD_NORM_SQ)
            return t, t
        tau, sigma = self.pd_steps
        if tau <= 0 or sigma <= 0 or tau * sigma * GRAD_NORM_SQ > 1 + 1e-12:
            raise StepSizeViolation(f"tau*sigma*8 = {tau * sigma * GRAD_NORM_SQ:.4g} > 1")
        return tau, sigma


@dataclass
class RecoveryResult:
    g_hat: CoefficientGrid | None = None
    image: np.ndarray | None = None
    residuals: list = field(default_factory=list)
    iterations_used: int = 0


def default_delta(gamma: IndexRect) -> IndexRect:
    """Four times the sample extents, rounded up to odd."""
    return IndexRect.centered(tuple(4 * d + (1 - (4 * d) % 2) for d in gamma.dims))


def lambda_grid(lo: float, hi: float, steps: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), int(steps))


# ---------------------------------------------------------------------------
# conjugate gradient


def _dot(a, b) -> complex:
    return np.vdot(a.ravel(), b.ravel())


def conjugate_gradient(apply, rhs, x0, tol=1e-8, max_iter=500, precond=None, strict=True):
    """CG for a Hermitian positive semidefinite ``apply``; returns ``(x, history)``.

    ``history`` holds ``||A x - rhs|| / ||rhs||`` per iteration.
    """
    x = x0.copy()
    r = rhs - apply(x)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return np.zeros_like(rhs), [0.0]
    z = r if precond is None else precond * r
    p = z.copy()
    rz = _dot(r, z).real
    history = [np.linalg.norm(r) / bnorm]
    for _ in range(max_iter):
        if history[-1] <= tol:
            break
        Ap = apply(p)
        pAp = _dot(p, Ap).real
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        history.append(np.linalg.norm(r) / bnorm)
        z = r if precond is None else precond * r
        rz_new = _dot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    if history[-1] > tol:
        # the recursive residual may drift; confirm with the true one
        history[-1] = np.linalg.norm(rhs - apply(x)) / bnorm
        if strict and history[-1] > tol:
            raise CgDiverged(f"residual {history[-1]:.3g} > {tol:.3g} after {len(history) - 1} iterations")
    return x, history


def _sample_mask(b: CoefficientGrid, delta: IndexRect, mask) -> np.ndarray:
    if not delta.contains(b.support):
        raise ValueError(f"delta {delta} does not contain the samples {b.support}")
    m = np.zeros(delta.shape, dtype=bool)
    inner = np.ones(b.support.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    m[b.support.slice_in(delta)] = inner
    return m


# ---------------------------------------------------------------------------
# LSLP


class LslpExactOperator:
    """``Q`` maps coefficients on ``delta`` to the valid convolutions of every
    filter with both derivative-weighted copies, on ``contract(delta, lam)``."""

    def __init__(self, D: AnnihilatingSubspace, delta: IndexRect):
        self.delta = delta
        self.lam = D.lam
        dy, dx = D.lam.shape
        ny, nx = delta.shape
        if ny < dy or nx < dx:
            raise ValueError(f"delta {delta} smaller than filter support {D.lam}")
        self.pad = (ny + dy - 1, nx + dx - 1)
        filt = D.basis.T.reshape(D.rank, dy, dx)
        self.spec = np.fft.fft2(filt, s=self.pad)
        KX, KY = delta.frequencies()
        self.weights = (2j * np.pi * KX, 2j * np.pi * KY)
        self.valid = (slice(dy - 1, ny), slice(dx - 1, nx))

    def forward(self, g: np.ndarray) -> np.ndarray:
        """Shape ``(2, R, sy, sx)``."""
        out = []
        for w in self.weights:
            full = np.fft.ifft2(self.spec * np.fft.fft2(w * g, s=self.pad))
            out.append(full[:, self.valid[0], self.valid[1]])
        return np.stack(out)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        ny, nx = self.delta.shape
        acc = np.zeros(self.delta.shape, dtype=complex)
        for w, yw in zip(self.weights, y):
            buf = np.zeros((yw.shape[0],) + self.pad, dtype=complex)
            buf[:, self.valid[0], self.valid[1]] = yw
            back = np.fft.ifft2(np.sum(np.conj(self.spec) * np.fft.fft2(buf), axis=0))
            acc += np.conj(w) * back[:ny, :nx]
        return acc

    def gram(self, g: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(g))

    def diagonal(self) -> np.ndarray:
        """Diagonal of ``Q*Q``: weight squared times the filter energy seen by each coefficient."""
        dy, dx = self.lam.shape
        ny, nx = self.delta.shape
        energy = np.sum(np.abs(np.fft.ifft2(self.spec)[:, :dy, :dx]) ** 2, axis=0)
        # coefficient j meets filter tap (a, c) when j - (a, c) lies in the valid window
        hits = np.zeros(self.delta.shape)
        for a in range(dy):
            for c in range(dx):
                hits[a:a + ny - dy + 1, c:c + nx - dx + 1] += energy[dy - 1 - a, dx - 1 - c]
        return hits * np.abs(self.weights[0]) ** 2 + hits * np.abs(self.weights[1]) ** 2

    def sparse(self) -> sp.csr_matrix:
        """``Q`` as a sparse matrix acting on ``g.ravel()``; rows follow :meth:`forward`."""
        dy, dx = self.lam.shape
        ny, nx = self.delta.shape
        sy, sx = ny - dy + 1, nx - dx + 1
        ly, lx = np.divmod(np.arange(sy * sx), sx)
        filt = np.fft.ifft2(self.spec)[:, :dy, :dx]
        rows, cols, vals = [], [], []
        r0 = 0
        for w in self.weights:
            wflat = w.ravel()
            for d in filt:
                for a in range(dy):
                    for c in range(dx):
                        col = (ly + dy - 1 - a) * nx + (lx + dx - 1 - c)
                        rows.append(r0 + ly * sx + lx)
                        cols.append(col)
                        vals.append(d[a, c] * wflat[col])
                r0 += sy * sx
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r0, ny * nx)
        )


class LslpFastOperator:
    """``sum_w conj(w) F (R (F^-1 (w g)))``: the gram of full (not valid) convolutions.

    ``F^-1`` places coefficients at ``k mod grid`` and evaluates the trigonometric
    polynomial on the weight grid; ``F`` is its adjoint scaled by ``1/|grid|``.
    Each application costs four 2-D FFTs.
    """

    def __init__(self, weights: EdgeWeightGrid, delta: IndexRect):
        gx, gy = weights.dims
        if gx < delta.dims[0] or gy < delta.dims[1]:
            raise WeightGridTooSmall(f"weight grid {gx}x{gy} smaller than {delta}")
        if weights.support is not None:
            need = (delta.dims[0] + weights.support.dims[0] - 1, delta.dims[1] + weights.support.dims[1] - 1)
            if gx < need[0] or gy < need[1]:
                raise WeightGridTooSmall(f"weight grid {gx}x{gy} smaller than {need[0]}x{need[1]}")
        self.delta = delta
        self.R = weights.values
        self.grid = (gy, gx)
        KX, KY = delta.frequencies()
        self.rows = KY % gy
        self.cols = KX % gx
        self.weights = (2j * np.pi * KX, 2j * np.pi * KY)

    def diagonal(self) -> np.ndarray:
        """Diagonal of the weighted gram: mean weight times squared derivative weight."""
        return self.R.mean() * (np.abs(self.weights[0]) ** 2 + np.abs(self.weights[1]) ** 2)

    def to_space(self, g: np.ndarray) -> np.ndarray:
        buf = np.zeros(self.grid, dtype=complex)
        buf[self.rows, self.cols] = g
        return np.fft.ifft2(buf) * buf.size

    def to_coeffs(self, img: np.ndarray) -> np.ndarray:
        return (np.fft.fft2(img) / img.size)[self.rows, self.cols]

    def gram(self, g: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.delta.shape, dtype=complex)
        for w in self.weights:
            acc += np.conj(w) * self.to_coeffs(self.R * self.to_space(w * g))
        return acc


def _ridge_gram(op: LslpExactOperator, ridge: float) -> sp.csc_matrix:
    Q = op.sparse()
    A = (Q.conj().T @ Q).tocsc()
    eps = ridge * op.diagonal().max()
    return (A + eps * sp.identity(A.shape[0], format="csc")).tocsc(), eps


def _solve_lslp(op, b: CoefficientGrid, delta: IndexRect, params: SolverParams, mask):
    m = _sample_mask(b, delta, mask)
    b0 = b.pad(delta).values * m
    lam = params.reg
    if params.solver == "direct":
        if not isinstance(op, LslpExactOperator):
            raise ValueError("the direct solver is only available for the exact operator")
        A, _ = _ridge_gram(op, params.ridge)
        A = (A + sp.diags(lam * m.ravel().astype(float))).tocsc()
        g = spl.spsolve(A, lam * b0.ravel()).reshape(delta.shape)
        res = np.linalg.norm(A @ g.ravel() - lam * b0.ravel()) / max(np.linalg.norm(lam * b0), 1e-300)
        return RecoveryResult(g_hat=CoefficientGrid(delta, g), residuals=[float(res)], iterations_used=1)
    eps = params.ridge * op.diagonal().max()

    def apply(g):
        return op.gram(g) + lam * m * g + eps * g

    precond = None
    if params.jacobi:
        diag = op.diagonal() + lam * m + eps
        precond = 1.0 / np.maximum(diag, 1e-12 * diag.max())
    g, hist = conjugate_gradient(apply, lam * b0, b0, params.cg_tol, params.max_iter, precond)
    return RecoveryResult(g_hat=CoefficientGrid(delta, g), residuals=hist, iterations_used=len(hist) - 1)


def lslp_exact(b: CoefficientGrid, D: AnnihilatingSubspace, delta: IndexRect, params: SolverParams,
               mask=None) -> RecoveryResult:
    """Solve ``(Q*Q + reg P*P) g = reg P* b`` with valid convolutions on ``delta``.

    ``mask`` (shape of ``b.support``) selects which entries of ``b`` are known.
    """
    op = LslpExactOperator(D, delta)
    return _solve_lslp(op, b, delta, params, mask)


def lslp_exact_batch(b: CoefficientGrid, D: AnnihilatingSubspace, delta: IndexRect, params: SolverParams,
                     masks) -> list[RecoveryResult]:
    """Direct LSLP for many sample masks from a single factorization.

    ``A0 = Q*Q + eps I`` is factored once; each mask ``S`` then needs only the
    small system of Woodbury's identity: ``g = Z (I/reg + S^T Z)^{-1} b_S`` with
    ``Z = A0^{-1} S``. Requires ``params.ridge > 0`` so that ``A0`` is invertible.
    """
    if params.ridge <= 0:
        raise ValueError("lslp_exact_batch needs a positive ridge")
    op = LslpExactOperator(D, delta)
    A0, _ = _ridge_gram(op, params.ridge)
    lu = spl.splu(A0)
    full = _sample_mask(b, delta, None)
    pos = np.flatnonzero(full.ravel())
    E = np.zeros((delta.size, pos.size), dtype=complex)
    E[pos, np.arange(pos.size)] = 1.0
    Z_all = lu.solve(E)
    out = []
    for mask in masks:
        sel = np.asarray(mask, dtype=bool).ravel()
        Z = Z_all[:, sel]
        G = Z[pos[sel]]
        coef = np.linalg.solve(np.eye(sel.sum()) / params.reg + G, b.values.ravel()[sel])
        g = (Z @ coef).reshape(delta.shape)
        m = _sample_mask(b, delta, mask)
        A = A0 + sp.diags(params.reg * m.ravel().astype(float))
        rhs = params.reg * (b.pad(delta).values * m).ravel()
        res = np.linalg.norm(A @ g.ravel() - rhs) / max(np.linalg.norm(rhs), 1e-300)
        out.append(RecoveryResult(g_hat=CoefficientGrid(delta, g), residuals=[float(res)], iterations_used=1))
    return out


def lslp_fast(b: CoefficientGrid, weights: EdgeWeightGrid, delta: IndexRect, params: SolverParams,
              mask=None) -> RecoveryResult:
    """LSLP with the sum-of-squares weights ``weights`` (samples of ``mu_bar^2``)."""
    op = LslpFastOperator(weights, delta)
    return _solve_lslp(op, b, delta, params, mask)


# ---------------------------------------------------------------------------
# weighted total variation


def grad(u: np.ndarray) -> np.ndarray:
    """Forward differences with a zero last difference (Neumann); shape ``(2, gy, gx)``."""
    g = np.zeros((2,) + u.shape, dtype=u.dtype)
    g[0, :, :-1] = u[:, 1:] - u[:, :-1]
    g[1, :-1, :] = u[1:, :] - u[:-1, :]
    return g


def div(q: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`grad`."""
    px, py = q
    d = np.zeros(px.shape, dtype=q.dtype)
    d[:, 0] += px[:, 0]
    d[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
    d[:, -1] -= px[:, -2]
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] -= py[-2, :]
    return d


def _dft_index(b: CoefficientGrid, dims, mask):
    gx, gy = dims
    KX, KY = b.support.frequencies()
    sel = np.ones(b.support.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return KY[sel] % gy, KX[sel] % gx, b.values[sel]


def wtv_energy(u, weights, b: CoefficientGrid, reg, mask=None) -> float:
    gy, gx = u.shape
    rows, cols, vals = _dft_index(b, (gx, gy), mask)
    coef = np.fft.fft2(u)[rows, cols] / u.size
    g = grad(u)
    tv = np.sum(weights * np.sqrt(np.sum(np.abs(g) ** 2, axis=0)))
    return float(tv + reg * np.sum(np.abs(coef - vals) ** 2))


def wtv(b: CoefficientGrid, weights, grid_dims, params: SolverParams, mask=None,
        track_energy: bool = False) -> RecoveryResult:
    """Primal-dual minimization of ``sum w |grad u| + reg ||P DFT(u) - b||^2``.

    ``weights`` is an :class:`EdgeWeightGrid`, an array, or a scalar. The data
    proximal step is exact in the unitary Fourier basis. ``residuals`` holds the
    relative change of ``u`` per iteration, or the energy when ``track_energy``.
    """
    gx, gy = _pair(grid_dims)
    if gx < b.support.dims[0] or gy < b.support.dims[1]:
        raise ValueError(f"grid {gx}x{gy} smaller than samples {b.support}")
    tau, sigma = params.steps()
    w = weights.values if isinstance(weights, EdgeWeightGrid) else weights
    w = np.broadcast_to(np.asarray(w, dtype=float), (gy, gx))
    rows, cols, vals = _dft_index(b, (gx, gy), mask)
    n = math.sqrt(gx * gy)
    lam = params.reg

    buf = np.zeros((gy, gx), dtype=complex)
    buf[rows, cols] = vals
    u = np.fft.ifft2(buf) * (gx * gy)
    ubar = u.copy()
    q = np.zeros((2, gy, gx), dtype=complex)
    shrink = 1.0 + 2 * tau * lam / n**2
    history = []
    it = 0
    for it in range(1, params.max_iter + 1):
        q += sigma * grad(ubar)
        mag = np.sqrt(np.sum(np.abs(q) ** 2, axis=0))
        q *= np.minimum(1.0, w / np.maximum(mag, 1e-300))
        v = u + tau * div(q)
        vt = np.fft.fft2(v) / n
        vt[rows, cols] = (vt[rows, cols] + 2 * tau * lam * vals / n) / shrink
        u_new = np.fft.ifft2(vt) * n
        ubar = 2 * u_new - u
        change = np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), 1e-300)
        u = u_new
        history.append(wtv_energy(u, w, b, lam, mask) if track_energy else float(change))
        if not track_energy and change < params.cg_tol:
            break
    return RecoveryResult(image=u, residuals=history, iterations_used=it)


def tv_baseline(b: CoefficientGrid, grid_dims, params: SolverParams, mask=None,
                track_energy: bool = False) -> RecoveryResult:
    """Unweighted total variation recovery."""
    return wtv(b, 1.0, grid_dims, params, mask, track_energy)
