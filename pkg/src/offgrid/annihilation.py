"""Annihilation matrix, annihilating subspace, and structured low-rank denoising.

Filters on ``lam`` are vectors of length ``lam.size`` flattened row-major in
k_y then k_x (the layout of ``TrigPolynomial.coeffs``). Rows of each block are
the shifts of ``contract(gamma, lam)`` enumerated the same way; the x-block
comes first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .phantom import CoefficientGrid
from .trigpoly import IndexRect, TrigPolynomial, _pair, contract

__all__ = [
    "AnnihilationMatrix",
    "AnnihilatingSubspace",
    "RankTooLarge",
    "build_annihilation_matrix",
    "annihilation_adjoint",
    "gram_diagonal",
    "estimate_nullspace",
    "default_model_order",
    "satisfies_necessary_count",
    "minimal_square_grid",
    "shifted_filters",
    "structured_lowrank_denoise",
]


class RankTooLarge(ValueError):
    pass


@dataclass
class AnnihilationMatrix:
    entries: np.ndarray
    gamma: IndexRect
    lam: IndexRect

    @property
    def shifts(self) -> IndexRect:
        return contract(self.gamma, self.lam)

    @property
    def n_shifts(self) -> int:
        return self.shifts.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __matmul__(self, c):
        return self.entries @ np.asarray(c)


@dataclass
class AnnihilatingSubspace:
    """Orthonormal filters (columns of ``basis``) spanning a nullspace."""

    lam: IndexRect
    basis: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=complex).reshape(self.lam.size, -1)
        self.singular_values = np.asarray(self.singular_values, dtype=float)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def filters(self) -> list[TrigPolynomial]:
        return [TrigPolynomial.from_vector(self.lam, d) for d in self.basis.T]


def _weighted(f_hat: CoefficientGrid):
    KX, KY = f_hat.support.frequencies()
    return 2j * np.pi * KX * f_hat.values, 2j * np.pi * KY * f_hat.values


def _toeplitz_block(w: np.ndarray, lam: IndexRect) -> np.ndarray:
    dy, dx = lam.shape
    win = sliding_window_view(w, (dy, dx))[:, :, ::-1, ::-1]
    return win.reshape(-1, dy * dx)


def build_annihilation_matrix(f_hat: CoefficientGrid, lam: IndexRect) -> AnnihilationMatrix:
    """Stack the x- and y-derivative convolution matrices ``T = [T_x; T_y]``.

    Entry ``(l, k)`` of each block is ``j 2 pi k_x f[l - k]`` (resp. ``k_y``), so
    ``T @ c`` is the valid-region convolution of ``c`` with the weighted samples.
    """
    contract(f_hat.support, lam)
    wx, wy = _weighted(f_hat)
    T = np.vstack([_toeplitz_block(wx, lam), _toeplitz_block(wy, lam)])
    return AnnihilationMatrix(T, f_hat.support, lam)


def _scatter(block: np.ndarray, gamma: IndexRect, lam: IndexRect) -> np.ndarray:
    sy, sx = contract(gamma, lam).shape
    dy, dx = lam.shape
    patches = block.reshape(sy, sx, dy, dx)[:, :, ::-1, ::-1]
    out = np.zeros(gamma.shape, dtype=complex)
    for p in range(dy):
        for q in range(dx):
            out[p:p + sy, q:q + sx] += patches[:, :, p, q]
    return out


def annihilation_adjoint(Y: np.ndarray, gamma: IndexRect, lam: IndexRect) -> CoefficientGrid:
    """Adjoint of ``f_hat -> T(f_hat)`` with respect to the Frobenius inner product."""
    n = contract(gamma, lam).size
    KX, KY = gamma.frequencies()
    ax = _scatter(Y[:n], gamma, lam) * np.conj(2j * np.pi * KX)
    ay = _scatter(Y[n:], gamma, lam) * np.conj(2j * np.pi * KY)
    return CoefficientGrid(gamma, ax + ay)


def gram_diagonal(gamma: IndexRect, lam: IndexRect) -> np.ndarray:
    """Diagonal of ``T* T``: multiplicity times ``(2 pi)^2 (k_x^2 + k_y^2)``."""
    sy, sx = contract(gamma, lam).shape
    mult = _scatter(np.ones((sy * sx, lam.size)), gamma, lam).real
    KX, KY = gamma.frequencies()
    return mult * (2 * np.pi) ** 2 * (KX**2 + KY**2)


def _full_svd(A: np.ndarray):
    m, n = A.shape
    _, s, vh = np.linalg.svd(A, full_matrices=m < n)
    sv = np.zeros(n)
    sv[: s.size] = s
    return sv, vh


def estimate_nullspace(T: AnnihilationMatrix | np.ndarray, rank: int | None = None,
                       rel_tol: float | None = None, lam: IndexRect | None = None) -> AnnihilatingSubspace:
    """Right singular vectors of ``T`` beyond ``rank`` or below ``rel_tol * sigma_max``.

    The returned singular values always cover all ``M`` columns (zeros appended
    when ``T`` has fewer rows than columns).
    """
    if isinstance(T, AnnihilationMatrix):
        A, lam = T.entries, T.lam
    else:
        A = np.asarray(T)
        if lam is None:
            raise ValueError("lam is required for a bare matrix")
    M = A.shape[1]
    if (rank is None) == (rel_tol is None):
        raise ValueError("give exactly one of rank or rel_tol")
    sv, vh = _full_svd(A)
    if rank is not None:
        if rank < 0 or rank > M:
            raise RankTooLarge(f"rank {rank} for {M} columns")
        keep = np.arange(rank, M)
    else:
        if not 0 < rel_tol < 1:
            raise ValueError(f"rel_tol must be in (0, 1), got {rel_tol}")
        top = sv[0] if sv[0] > 0 else 1.0
        keep = np.flatnonzero(sv <= rel_tol * top)
    # rows of vh are conjugated right singular vectors
    basis = np.conj(vh[keep]).T
    return AnnihilatingSubspace(lam, basis, sv)


def default_model_order(gamma_dims) -> tuple[tuple[int, int], int]:
    """Filter support half the sample extents and rank half the filter size."""
    gx, gy = _pair(gamma_dims)
    lx, ly = gx // 2, gy // 2
    return (lx, ly), (lx * ly) // 2


def satisfies_necessary_count(degree, gamma_dims) -> bool:
    """``2 (K'-K+1)(L'-L+1) >= (K+1)(L+1) - 1`` with ``(K'+1, L'+1)`` the sample extents."""
    K, L = _pair(degree)
    gx, gy = _pair(gamma_dims)
    sx, sy = gx - K, gy - L
    if sx < 1 or sy < 1:
        return False
    return 2 * sx * sy >= (K + 1) * (L + 1) - 1


def minimal_square_grid(degree) -> int:
    K, L = _pair(degree)
    n = max(K, L) + 1
    while not satisfies_necessary_count((K, L), (n, n)):
        n += 1
    return n


def shifted_filters(mu: TrigPolynomial, outer: IndexRect) -> np.ndarray:
    """Columns are ``mu`` translated to every shift in ``contract(outer, mu.support)``."""
    shifts = contract(outer, mu.support)
    dy, dx = mu.support.shape
    sy, sx = shifts.shape
    cols = []
    for i in range(sy):
        for j in range(sx):
            c = np.zeros(outer.shape, dtype=complex)
            c[i:i + dy, j:j + dx] = mu.coeffs
            cols.append(c.ravel())
    return np.array(cols).T


def _truncate(A: np.ndarray, r: int) -> np.ndarray:
    u, s, vh = np.linalg.svd(A, full_matrices=False)
    return (u[:, :r] * s[:r]) @ vh[:r]


def structured_lowrank_denoise(b: CoefficientGrid, lam: IndexRect, rank: int, reg: float = 1.0,
                               iters: int = 10) -> tuple[CoefficientGrid, list[float]]:
    """Alternate a rank-``rank`` projection of ``T(g)`` with the exact update of ``g``.

    Minimizes ``||g - b||^2 + reg ||T(g) - X||^2`` over ``g`` and rank-limited
    ``X``. Because ``T* T`` is diagonal the ``g`` step is elementwise:
    ``g = (b + reg T*(X)) / (1 + reg diag(T* T))``.
    """
    if rank < 1 or reg <= 0 or iters < 1:
        raise ValueError("need rank >= 1, reg > 0, iters >= 1")
    gamma = b.support
    diag = gram_diagonal(gamma, lam)
    g = b.copy()
    history = []
    for _ in range(iters):
        X = _truncate(build_annihilation_matrix(g, lam).entries, rank)
        g = CoefficientGrid(gamma, (b.values + reg * annihilation_adjoint(X, gamma, lam).values)
                            / (1 + reg * diag))
        resid = build_annihilation_matrix(g, lam).entries - X
        history.append(float(np.linalg.norm(g.values - b.values) ** 2 + reg * np.linalg.norm(resid) ** 2))
    return g, history
