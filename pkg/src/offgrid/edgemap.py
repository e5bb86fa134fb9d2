"""Sum-of-squares edge polynomial of an annihilating subspace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annihilation import AnnihilatingSubspace
from .trigpoly import GridTooSmall, IndexRect, TrigPolynomial, _pair, difference_set, grid_evaluate

__all__ = [
    "EdgeWeightGrid",
    "EmptySubspace",
    "sos_coefficients",
    "sos_coefficients_direct",
    "sos_grid",
    "edge_weights",
    "music_projection",
    "edge_mask",
]


class EmptySubspace(ValueError):
    pass


@dataclass
class EdgeWeightGrid:
    """Nonnegative samples on a ``(gy, gx)`` grid at ``r = (m/gx, n/gy)``.

    ``support`` records the Fourier support of the sampled polynomial when known,
    so solvers can check the grid is large enough to avoid wrap-around.
    """

    values: np.ndarray
    support: IndexRect | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.values.shape[1], self.values.shape[0])


def sos_coefficients(D: AnnihilatingSubspace) -> TrigPolynomial:
    """Coefficients of ``sum_i |mu_i|^2`` on ``lam - lam`` via zero-padded FFTs."""
    if D.rank == 0:
        raise EmptySubspace("subspace has no filters")
    dy, dx = D.lam.shape
    s = (2 * dy - 1, 2 * dx - 1)
    filt = D.basis.T.reshape(D.rank, dy, dx)
    spec = np.fft.fft2(filt, s=s)
    acc = np.fft.ifft2(np.sum(np.abs(spec) ** 2, axis=0))
    # lag k sits at index k mod s; move lag -(d-1) to the front
    acc = np.roll(acc, (dy - 1, dx - 1), axis=(0, 1))
    acc = 0.5 * (acc + np.conj(acc[::-1, ::-1]))
    return TrigPolynomial(difference_set(D.lam), acc)


def sos_coefficients_direct(D: AnnihilatingSubspace) -> TrigPolynomial:
    """Same as :func:`sos_coefficients` by explicit lag sums (test oracle)."""
    if D.rank == 0:
        raise EmptySubspace("subspace has no filters")
    dy, dx = D.lam.shape
    out = np.zeros((2 * dy - 1, 2 * dx - 1), dtype=complex)
    for d in D.basis.T.reshape(D.rank, dy, dx):
        for py in range(-(dy - 1), dy):
            for px in range(-(dx - 1), dx):
                tot = 0j
                for my in range(dy):
                    for mx in range(dx):
                        ny, nx = my - py, mx - px
                        if 0 <= ny < dy and 0 <= nx < dx:
                            tot += d[my, mx] * np.conj(d[ny, nx])
                out[py + dy - 1, px + dx - 1] += tot
    return TrigPolynomial(difference_set(D.lam), out)


def sos_grid(D: AnnihilatingSubspace, grid_dims, normalize: bool = False) -> EdgeWeightGrid:
    """Samples of the sum-of-squares polynomial, clamped at zero."""
    gx, gy = _pair(grid_dims)
    sup = difference_set(D.lam)
    if gx < sup.dims[0] or gy < sup.dims[1]:
        raise GridTooSmall(f"grid {gx}x{gy} smaller than {sup}")
    vals = grid_evaluate(sos_coefficients(D), (gx, gy)).real
    vals = np.maximum(vals, 0.0)
    if normalize and vals.max() > 0:
        vals = vals / vals.max()
    return EdgeWeightGrid(vals, sup)


def edge_weights(D: AnnihilatingSubspace, grid_dims, power: int = 1, normalize: bool = True) -> EdgeWeightGrid:
    """``mu_bar`` (power 1) or ``mu_bar^2`` (power 2) for weighting the TV penalty."""
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    w = sos_grid(D, grid_dims, normalize=normalize)
    if power == 1:
        w = EdgeWeightGrid(np.sqrt(w.values), None)
    return w


def music_projection(D: AnnihilatingSubspace, r) -> np.ndarray | float:
    """Norm of the projection of ``e_r`` onto span(D), ``e_r[k] = exp(-j 2 pi k.r)``.

    With this sign the inner products ``d_i^H e_r`` are ``conj(mu_i(r))``, so the
    result equals ``sqrt(sum_i |mu_i(r)|^2)``.
    """
    x = np.asarray(r[0], dtype=float)
    y = np.asarray(r[1], dtype=float)
    x, y = np.broadcast_arrays(x, y)
    if D.rank == 0:
        return np.zeros(x.shape)[()]
    KX, KY = D.lam.frequencies()
    e = np.exp(-2j * np.pi * (np.multiply.outer(x, KX.ravel()) + np.multiply.outer(y, KY.ravel())))
    # ||D D^H e|| = ||D^H e|| for orthonormal D
    proj = e @ np.conj(D.basis)
    return np.linalg.norm(proj, axis=-1)[()]


def edge_mask(w: EdgeWeightGrid, threshold: float = 0.05) -> np.ndarray:
    """Boolean edge map from a normalized ``mu_bar`` grid (display only)."""
    return w.values < threshold
