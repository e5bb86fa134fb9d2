"""Index rectangles on the integer lattice and trigonometric polynomials.

All coefficient arrays in this package are stored with shape ``(dims_y, dims_x)``:
row index runs over ``k_y`` and column index over ``k_x``.  Flattening is
C-order, i.e. row-major in ``k_y`` then ``k_x``.  Spatial grids follow the same
layout, with pixel ``[n, m]`` at ``r = (m / grid_x, n / grid_y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import convolve2d

__all__ = [
    "EmptyContraction",
    "GridTooSmall",
    "NotRealValued",
    "IndexRect",
    "TrigPolynomial",
    "LabelGrid",
    "dilate",
    "contract",
    "evaluate",
    "grid_evaluate",
    "rasterize_regions",
    "multiply",
    "divide",
]


class EmptyContraction(ValueError):
    pass


class GridTooSmall(ValueError):
    pass


class NotRealValued(ValueError):
    pass


def _pair(v) -> tuple[int, int]:
    a, b = v
    return int(a), int(b)


@dataclass(frozen=True)
class IndexRect:
    """Rectangle ``{k_min + (i, j) : 0 <= i < dims_x, 0 <= j < dims_y}`` in Z^2."""

    k_min: tuple[int, int]
    dims: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "k_min", _pair(self.k_min))
        object.__setattr__(self, "dims", _pair(self.dims))
        if self.dims[0] < 1 or self.dims[1] < 1:
            raise ValueError(f"IndexRect dims must be positive, got {self.dims}")

    @classmethod
    def centered(cls, dims) -> "IndexRect":
        """Rectangle centred on the origin; even extents get ``k_min = -dims/2``."""
        dx, dy = _pair(dims)
        return cls((-(dx // 2), -(dy // 2)), (dx, dy))

    @property
    def k_max(self) -> tuple[int, int]:
        return (self.k_min[0] + self.dims[0] - 1, self.k_min[1] + self.dims[1] - 1)

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def shape(self) -> tuple[int, int]:
        """numpy shape of an array indexed by this rectangle."""
        return (self.dims[1], self.dims[0])

    def is_centered(self) -> bool:
        return self.k_min[0] + self.k_max[0] == 0 and self.k_min[1] + self.k_max[1] == 0

    def contains(self, other: "IndexRect") -> bool:
        return all(
            self.k_min[a] <= other.k_min[a] and other.k_max[a] <= self.k_max[a]
            for a in (0, 1)
        )

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(KX, KY)`` of shape :attr:`shape`."""
        kx = np.arange(self.k_min[0], self.k_max[0] + 1)
        ky = np.arange(self.k_min[1], self.k_max[1] + 1)
        KY, KX = np.meshgrid(ky, kx, indexing="ij")
        return KX, KY

    def slice_in(self, outer: "IndexRect") -> tuple[slice, slice]:
        """Array slices selecting this rectangle inside an array indexed by ``outer``."""
        if not outer.contains(self):
            raise ValueError(f"{self} is not contained in {outer}")
        ox = self.k_min[0] - outer.k_min[0]
        oy = self.k_min[1] - outer.k_min[1]
        return (slice(oy, oy + self.dims[1]), slice(ox, ox + self.dims[0]))

    def __str__(self):
        return f"{self.dims[0]}x{self.dims[1]}@({self.k_min[0]},{self.k_min[1]})"


def dilate(a: IndexRect, b: IndexRect) -> IndexRect:
    """Minkowski sum of two rectangles."""
    return IndexRect(
        (a.k_min[0] + b.k_min[0], a.k_min[1] + b.k_min[1]),
        (a.dims[0] + b.dims[0] - 1, a.dims[1] + b.dims[1] - 1),
    )


def contract(gamma: IndexRect, lam: IndexRect) -> IndexRect:
    """Shifts ``l`` with ``l - k`` in ``gamma`` for every ``k`` in ``lam``."""
    if gamma.dims[0] < lam.dims[0] or gamma.dims[1] < lam.dims[1]:
        raise EmptyContraction(f"cannot contract {gamma} by {lam}")
    return IndexRect(
        (gamma.k_min[0] + lam.k_max[0], gamma.k_min[1] + lam.k_max[1]),
        (gamma.dims[0] - lam.dims[0] + 1, gamma.dims[1] - lam.dims[1] + 1),
    )


def difference_set(lam: IndexRect) -> IndexRect:
    """``lam - lam``, the support of autocorrelations of filters on ``lam``."""
    return IndexRect(
        (lam.k_min[0] - lam.k_max[0], lam.k_min[1] - lam.k_max[1]),
        (2 * lam.dims[0] - 1, 2 * lam.dims[1] - 1),
    )


@dataclass
class TrigPolynomial:
    """``mu(r) = sum_k c[k] exp(j 2 pi k . r)`` with ``k`` ranging over ``support``."""

    support: IndexRect
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.support.shape:
            if self.coeffs.size != self.support.size:
                raise ValueError(
                    f"{self.coeffs.size} coefficients for support of size {self.support.size}"
                )
            self.coeffs = self.coeffs.reshape(self.support.shape)

    @classmethod
    def from_vector(cls, support: IndexRect, vec) -> "TrigPolynomial":
        return cls(support, np.asarray(vec, dtype=complex).reshape(support.shape))

    @property
    def degree(self) -> tuple[int, int]:
        nz = np.argwhere(np.abs(self.coeffs) > 0)
        if nz.size == 0:
            return (0, 0)
        ext = nz.max(axis=0) - nz.min(axis=0)
        return (int(ext[1]), int(ext[0]))

    def conj_reflect(self) -> "TrigPolynomial":
        """Coefficients of ``conj(mu)``: ``conj(c[-k])`` on the reflected support."""
        rect = IndexRect((-self.support.k_max[0], -self.support.k_max[1]), self.support.dims)
        return TrigPolynomial(rect, np.conj(self.coeffs[::-1, ::-1]))

    def hermitian_defect(self) -> float:
        """Max ``|c[k] - conj(c[-k])|`` relative to max ``|c|`` (0 for real-valued mu)."""
        a = self.embed(_symmetric_hull(self.support))
        scale = max(np.abs(a).max(), np.finfo(float).tiny)
        return float(np.abs(a - np.conj(a[::-1, ::-1])).max() / scale)

    def is_real(self, tol: float = 1e-10) -> bool:
        return self.hermitian_defect() <= tol

    def embed(self, outer: IndexRect) -> np.ndarray:
        """Coefficient array zero-extended to ``outer``."""
        out = np.zeros(outer.shape, dtype=complex)
        out[self.support.slice_in(outer)] = self.coeffs
        return out

    def derivative(self, axis: int) -> "TrigPolynomial":
        """Coefficients of ``d mu / dx`` (axis 0) or ``d mu / dy`` (axis 1)."""
        KX, KY = self.support.frequencies()
        k = KX if axis == 0 else KY
        return TrigPolynomial(self.support, 2j * np.pi * k * self.coeffs)

    def __call__(self, x, y):
        return evaluate(self, (x, y))


def _symmetric_hull(rect: IndexRect) -> IndexRect:
    m = (max(abs(rect.k_min[0]), abs(rect.k_max[0])), max(abs(rect.k_min[1]), abs(rect.k_max[1])))
    return IndexRect((-m[0], -m[1]), (2 * m[0] + 1, 2 * m[1] + 1))


def evaluate(mu: TrigPolynomial, r) -> np.ndarray | complex:
    """Evaluate ``mu`` at points ``r = (x, y)``; ``x`` and ``y`` may be arrays.

    Uses separable exponentials, so the cost is O(#points * |support|).
    """
    x = np.asarray(r[0], dtype=float)
    y = np.asarray(r[1], dtype=float)
    x, y = np.broadcast_arrays(x, y)
    kx = np.arange(mu.support.k_min[0], mu.support.k_max[0] + 1)
    ky = np.arange(mu.support.k_min[1], mu.support.k_max[1] + 1)
    flat_x = x.reshape(-1)
    flat_y = y.reshape(-1)
    out = np.empty(flat_x.shape, dtype=complex)
    step = 65536
    for s in range(0, flat_x.size, step):
        ex = np.exp(2j * np.pi * np.multiply.outer(flat_x[s : s + step], kx))
        ey = np.exp(2j * np.pi * np.multiply.outer(flat_y[s : s + step], ky))
        out[s : s + step] = np.einsum("pb,ba,pa->p", ey, mu.coeffs, ex, optimize=True)
    out = out.reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def grid_evaluate(mu: TrigPolynomial, grid_dims) -> np.ndarray:
    """Sample ``mu`` at ``r = (m / gx, n / gy)``; returns shape ``(gy, gx)``.

    Computed as an inverse DFT of the coefficients placed at ``k mod grid``.
    """
    gx, gy = _pair(grid_dims)
    if gx < mu.support.dims[0] or gy < mu.support.dims[1]:
        raise GridTooSmall(f"grid {gx}x{gy} smaller than support {mu.support}")
    buf = np.zeros((gy, gx), dtype=complex)
    KX, KY = mu.support.frequencies()
    buf[KY % gy, KX % gx] = mu.coeffs
    return np.fft.ifft2(buf) * (gx * gy)


@dataclass
class LabelGrid:
    labels: np.ndarray
    component_count: int
    signs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def dims(self) -> tuple[int, int]:
        return (self.labels.shape[1], self.labels.shape[0])


def _merge_periodic(lab: np.ndarray, n: int) -> tuple[np.ndarray, int]:
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for edge_a, edge_b in ((lab[0, :], lab[-1, :]), (lab[:, 0], lab[:, -1])):
        both = (edge_a > 0) & (edge_b > 0)
        for a, b in set(zip(edge_a[both].tolist(), edge_b[both].tolist())):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n + 1)])
    # relabel in order of first appearance so labels stay scan-ordered
    uniq = np.unique(roots[1:]) if n else np.array([], dtype=int)
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[uniq] = np.arange(1, uniq.size + 1)
    return remap[roots][lab], int(uniq.size)


def label_sign_regions(values: np.ndarray, band: float = 0.0, periodic: bool = False):
    """Label 4-connected regions of constant sign in ``values``.

    Pixels with ``|values| <= band`` get label 0.  Returns ``(labels, count, signs)``
    where ``signs[i-1]`` is the sign of component ``i``.  Components are numbered
    in raster-scan order of their first pixel.
    """
    values = np.asarray(values, dtype=float)
    keep = np.abs(values) > band
    out = np.zeros(values.shape, dtype=np.int64)
    signs = []
    parts = []
    for sgn, mask in ((-1, keep & (values < 0)), (1, keep & (values > 0))):
        lab, n = ndimage.label(mask)
        if periodic and n:
            lab, n = _merge_periodic(lab, n)
        parts.append((sgn, lab, n))
    # number components of both signs together, in scan order of first pixel
    firsts = []
    for part, (sgn, lab, n) in enumerate(parts):
        if n == 0:
            continue
        flat = lab.ravel()
        idx = np.flatnonzero(flat)
        first = np.full(n + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat[idx], idx)
        firsts.extend((first[i], part, i) for i in range(1, n + 1))
    firsts.sort()
    maps = [np.zeros(n + 1, dtype=np.int64) for _, _, n in parts]
    for new, (_, part, i) in enumerate(firsts, start=1):
        maps[part][i] = new
        signs.append(parts[part][0])
    for (sgn, lab, n), lut in zip(parts, maps):
        if n:
            out += lut[lab]
    count = len(firsts)
    return out, count, np.array(signs, dtype=int)


def rasterize_regions(
    mu: TrigPolynomial, grid_dims, zero_band: float = 1e-3, periodic: bool = False
) -> LabelGrid:
    """Connected components of ``{mu != 0}`` on a grid.

    Pixels with ``|mu| <= zero_band * max|mu|`` form the zero band (label 0).
    With ``periodic`` the grid wraps around as a torus.
    """
    if zero_band < 0:
        raise ValueError("zero_band must be nonnegative")
    if not mu.is_real(1e-10):
        raise NotRealValued(f"Hermitian defect {mu.hermitian_defect():.3g}")
    vals = grid_evaluate(mu, grid_dims).real
    band = zero_band * np.abs(vals).max()
    labels, count, signs = label_sign_regions(vals, band, periodic)
    return LabelGrid(labels, count, signs)


def multiply(mu: TrigPolynomial, nu: TrigPolynomial) -> TrigPolynomial:
    """Product polynomial, i.e. 2-D linear convolution of the coefficients."""
    return TrigPolynomial(dilate(mu.support, nu.support), convolve2d(mu.coeffs, nu.coeffs))


def divide(eta: TrigPolynomial, mu: TrigPolynomial):
    """Least-squares quotient ``gamma`` with ``mu * gamma ~= eta``.

    ``gamma`` is supported on ``contract(eta.support, mu.support)``.  Returns
    ``(gamma, relative_residual)``.
    """
    q_rect = contract(eta.support, mu.support)
    qy, qx = q_rect.shape
    cols = []
    for j in range(qy * qx):
        e = np.zeros(q_rect.size, dtype=complex)
        e[j] = 1
        prod = multiply(mu, TrigPolynomial(q_rect, e.reshape(qy, qx)))
        cols.append(prod.embed(eta.support).ravel())
    A = np.stack(cols, axis=1)
    rhs = eta.coeffs.ravel()
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    res = np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
    return TrigPolynomial(q_rect, sol.reshape(qy, qx)), float(res)
