"""Fourier samples of piecewise constant test images."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import ndimage, special

from .trigpoly import (
    IndexRect,
    TrigPolynomial,
    _pair,
    grid_evaluate,
    label_sign_regions,
)

__all__ = [
    "CoefficientGrid",
    "TrigCurvePhantom",
    "Ellipse",
    "EllipsePhantom",
    "UndersampledRaster",
    "AmplitudeCountMismatch",
    "trig_phantom_samples",
    "trig_phantom_image",
    "ellipse_phantom_samples",
    "ellipse_phantom_image",
    "add_noise",
    "derivative_weight",
    "phase_correct",
    "jinc",
    "shepp_logan",
    "make_rng",
]


class UndersampledRaster(ValueError):
    pass


class AmplitudeCountMismatch(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


@dataclass
class CoefficientGrid:
    """Complex values on an index rectangle; ``values`` has shape ``support.shape``."""

    support: IndexRect
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.support.shape:
            if self.values.size != self.support.size:
                raise ValueError(
                    f"{self.values.size} values for support of size {self.support.size}"
                )
            self.values = self.values.reshape(self.support.shape)

    def __getitem__(self, k) -> complex:
        kx, ky = k
        return complex(self.values[ky - self.support.k_min[1], kx - self.support.k_min[0]])

    def restrict(self, rect: IndexRect) -> "CoefficientGrid":
        return CoefficientGrid(rect, self.values[rect.slice_in(self.support)].copy())

    def pad(self, rect: IndexRect) -> "CoefficientGrid":
        """Zero-extend to a larger rectangle."""
        out = np.zeros(rect.shape, dtype=complex)
        out[self.support.slice_in(rect)] = self.values
        return CoefficientGrid(rect, out)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def copy(self) -> "CoefficientGrid":
        return CoefficientGrid(self.support, self.values.copy())

    def to_image(self, grid_dims) -> np.ndarray:
        """Inverse DFT onto a spatial grid (``g(r) = sum_k values[k] e^{j2pi k.r}``)."""
        return grid_evaluate(TrigPolynomial(self.support, self.values), grid_dims)


def image_to_coefficients(img: np.ndarray, rect: IndexRect) -> CoefficientGrid:
    """Riemann-sum Fourier coefficients ``(1/|grid|) sum_m img[m] e^{-j2pi k.r_m}`` on ``rect``."""
    gy, gx = img.shape
    KX, KY = rect.frequencies()
    kx = KX[0]
    ky = KY[:, 0]
    ex = np.exp(-2j * np.pi * np.outer(np.arange(gx), kx) / gx)
    ey = np.exp(-2j * np.pi * np.outer(ky, np.arange(gy)) / gy)
    return CoefficientGrid(rect, (ey @ img @ ex) / (gx * gy))


# ---------------------------------------------------------------------------
# antialiased rasterization


def _half_plane_cover(s, nx, ny):
    """Area of ``{q in [-1/2,1/2]^2 : n.q <= s}`` for unit normals ``n``."""
    a = np.maximum(np.abs(nx), np.abs(ny))
    b = np.maximum(np.minimum(np.abs(nx), np.abs(ny)), 1e-12)
    lo = 0.5 * (a + b)
    mid = 0.5 * (a - b)
    with np.errstate(over="ignore", invalid="ignore"):
        tri = (s + lo) ** 2 / (2 * a * b)
        out = np.where(
            s <= -lo,
            0.0,
            np.where(
                s < -mid,
                tri,
                np.where(s <= mid, 0.5 + s / a, np.where(s < lo, 1 - (lo - s) ** 2 / (2 * a * b), 1.0)),
            ),
        )
    return out


@dataclass
class _Boundary:
    """Pixels cut by the zero set of a level function, with local edge geometry."""

    rows: np.ndarray
    cols: np.ndarray
    frac_neg: np.ndarray  # fraction of the pixel where the level function is negative
    other_rows: np.ndarray  # a pixel on the opposite side of the edge
    other_cols: np.ndarray


def _boundary_pixels(values, grads, level_fn, dims, newton_steps=3) -> _Boundary:
    gx_dim, gy_dim = dims
    hx, hy = 1.0 / gx_dim, 1.0 / gy_dim
    h = max(hx, hy)
    gxv, gyv = grads
    gnorm = np.hypot(gxv, gyv)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist1 = np.abs(values) / gnorm
    rows, cols = np.nonzero(dist1 < 2.0 * h)
    x0 = cols * hx
    y0 = rows * hy
    fx, fy = x0.copy(), y0.copy()
    v, dx, dy = values[rows, cols], gxv[rows, cols], gyv[rows, cols]
    for _ in range(newton_steps):
        g2 = dx * dx + dy * dy
        fx = fx - v * dx / g2
        fy = fy - v * dy / g2
        v, dx, dy = level_fn(fx, fy)
    gn = np.hypot(dx, dy)
    nx, ny = dx / gn, dy / gn
    # signed distance of the pixel centre, positive on the positive side
    d = (x0 - fx) * nx + (y0 - fy) * ny
    foot = np.hypot(x0 - fx, y0 - fy)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = np.isfinite(d) & (foot < 1.5 * h) & (np.abs(v) / gn < 1e-3 * h)
    # pixel coordinates: the pixel is the unit square, the edge normal rescales
    px, py = nx * hx, ny * hy
    pn = np.hypot(px, py)
    s = d / pn
    ok &= np.abs(s) < 1.0
    rows, cols, fx, fy, nx, ny, px, py, pn, s, d = (
        a[ok] for a in (rows, cols, fx, fy, nx, ny, px, py, pn, s, d)
    )
    frac_neg = _half_plane_cover(-s, px / pn, py / pn)
    step = -np.sign(d) * 1.5 * h
    step[step == 0] = 1.5 * h
    ox = fx + step * nx
    oy = fy + step * ny
    other_cols = np.rint(ox * gx_dim).astype(np.int64) % gx_dim
    other_rows = np.rint(oy * gy_dim).astype(np.int64) % gy_dim
    return _Boundary(rows, cols, frac_neg, other_rows, other_cols)


def _sinc_correction(rect: IndexRect, dims) -> np.ndarray:
    KX, KY = rect.frequencies()
    return np.sinc(KX / dims[0]) * np.sinc(KY / dims[1])


# ---------------------------------------------------------------------------
# trigonometric-curve phantoms


@dataclass
class TrigCurvePhantom:
    """Piecewise constant image on the torus whose edge set is ``{mu = 0}``.

    ``amplitudes[i]`` is the value on region ``i + 1`` of the sign labelling of
    ``mu`` on ``raster_dims`` (periodic connectivity, scan order).
    """

    mu: TrigPolynomial
    amplitudes: list
    raster_dims: tuple[int, int] = (1024, 1024)
    antialias: bool = True
    periodic: bool = True

    def __post_init__(self):
        self.raster_dims = _pair(self.raster_dims)
        self.amplitudes = [complex(a) for a in self.amplitudes]


def _real_grid(mu: TrigPolynomial, dims) -> np.ndarray:
    return grid_evaluate(mu, dims).real


def _level_with_grad(mu: TrigPolynomial):
    kx = np.arange(mu.support.k_min[0], mu.support.k_max[0] + 1)
    ky = np.arange(mu.support.k_min[1], mu.support.k_max[1] + 1)
    stacked = np.stack([mu.coeffs, mu.coeffs * (2j * np.pi * kx)[None, :], mu.coeffs * (2j * np.pi * ky)[:, None]])

    def fn(x, y):
        ex = np.exp(2j * np.pi * np.multiply.outer(x, kx))
        ey = np.exp(2j * np.pi * np.multiply.outer(y, ky))
        out = np.einsum("pb,sba,pa->sp", ey, stacked, ex, optimize=True).real
        return out[0], out[1], out[2]

    return fn


def _trig_raster(p: TrigCurvePhantom, dims=None):
    dims = p.raster_dims if dims is None else _pair(dims)
    vals = _real_grid(p.mu, dims)
    labels, count, _ = label_sign_regions(vals, 0.0, p.periodic)
    if count != len(p.amplitudes):
        raise AmplitudeCountMismatch(
            f"{len(p.amplitudes)} amplitudes for {count} regions at raster {dims}"
        )
    if (labels == 0).any():
        # exact zeros of mu: take the nearest labelled pixel
        idx = ndimage.distance_transform_edt(labels == 0, return_distances=False, return_indices=True)
        labels = labels[tuple(idx)]
    amps = np.concatenate([[0.0], np.asarray(p.amplitudes, dtype=complex)])
    img = amps[labels]
    if p.antialias:
        grads = (_real_grid(p.mu.derivative(0), dims), _real_grid(p.mu.derivative(1), dims))
        b = _boundary_pixels(vals, grads, _level_with_grad(p.mu), dims)
        own = img[b.rows, b.cols]
        other = img[b.other_rows, b.other_cols]
        own_neg = vals[b.rows, b.cols] < 0
        a_neg = np.where(own_neg, own, other)
        a_pos = np.where(own_neg, other, own)
        img[b.rows, b.cols] = b.frac_neg * a_neg + (1 - b.frac_neg) * a_pos
    return img, labels


def trig_phantom_image(p: TrigCurvePhantom, dims=None) -> np.ndarray:
    """Rasterized image (pixel ``[n, m]`` at ``(m/gx, n/gy)``); area-averaged if antialiased."""
    return _trig_raster(p, dims)[0]


def trig_phantom_samples(p: TrigCurvePhantom, gamma: IndexRect) -> CoefficientGrid:
    """Fourier coefficients of the phantom on ``gamma`` from its rasterization.

    With ``antialias`` each boundary pixel holds its exact area fraction for a
    locally straight edge, and the pixel-box blur is divided out afterwards.
    """
    gx, gy = p.raster_dims
    if gx < 8 * gamma.dims[0] or gy < 8 * gamma.dims[1]:
        raise UndersampledRaster(f"raster {p.raster_dims} is not 8x the extents of {gamma}")
    img, _ = _trig_raster(p)
    out = image_to_coefficients(img, gamma)
    if p.antialias:
        out.values /= _sinc_correction(gamma, p.raster_dims)
    return out


# ---------------------------------------------------------------------------
# ellipse phantoms


@dataclass
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle_rad: float
    amplitude: complex

    def __post_init__(self):
        self.center = (float(self.center[0]), float(self.center[1]))
        self.semi_axes = (float(self.semi_axes[0]), float(self.semi_axes[1]))
        if min(self.semi_axes) <= 0:
            raise ValueError(f"semi-axes must be positive, got {self.semi_axes}")
        self.angle_rad = float(self.angle_rad)
        self.amplitude = complex(self.amplitude)


@dataclass
class EllipsePhantom:
    ellipses: list = field(default_factory=list)


def jinc(q):
    """``J1(2 pi q) / q`` with the limit ``pi`` at ``q = 0``."""
    q = np.asarray(q, dtype=float)
    out = np.full(q.shape, np.pi)
    nz = q != 0
    out[nz] = special.j1(2 * np.pi * q[nz]) / q[nz]
    return out


def ellipse_phantom_samples(p: EllipsePhantom, gamma: IndexRect) -> CoefficientGrid:
    """Exact Fourier coefficients of a sum of ellipse indicators."""
    KX, KY = gamma.frequencies()
    out = np.zeros(gamma.shape, dtype=complex)
    for e in p.ellipses:
        c, s = math.cos(e.angle_rad), math.sin(e.angle_rad)
        # frequency in the ellipse frame, scaled by the semi-axes
        u = (c * KX + s * KY) * e.semi_axes[0]
        v = (-s * KX + c * KY) * e.semi_axes[1]
        ab = e.semi_axes[0] * e.semi_axes[1]
        out += (
            e.amplitude
            * ab
            * jinc(np.hypot(u, v))
            * np.exp(-2j * np.pi * (KX * e.center[0] + KY * e.center[1]))
        )
    return CoefficientGrid(gamma, out)


def _ellipse_level(e: Ellipse):
    c, s = math.cos(e.angle_rad), math.sin(e.angle_rad)
    a, b = e.semi_axes

    def fn(x, y):
        dx = x - e.center[0]
        dy = y - e.center[1]
        u = (c * dx + s * dy) / a
        v = (-s * dx + c * dy) / b
        val = u * u + v * v - 1
        gu, gv = 2 * u / a, 2 * v / b
        return val, c * gu - s * gv, s * gu + c * gv

    return fn


def ellipse_phantom_image(p: EllipsePhantom, dims, antialias: bool = True) -> np.ndarray:
    """Raster of the phantom; antialiased pixels hold area fractions."""
    gx, gy = _pair(dims)
    X, Y = np.meshgrid(np.arange(gx) / gx, np.arange(gy) / gy)
    img = np.zeros((gy, gx), dtype=complex)
    for e in p.ellipses:
        fn = _ellipse_level(e)
        val, ddx, ddy = fn(X, Y)
        ind = (val < 0).astype(float)
        if antialias:
            b = _boundary_pixels(val, (ddx, ddy), fn, (gx, gy))
            ind[b.rows, b.cols] = b.frac_neg
        img += e.amplitude * ind
    return img


def ellipse_raster_samples(p: EllipsePhantom, gamma: IndexRect, raster_dims) -> CoefficientGrid:
    """Coefficients of the antialiased raster, box blur divided out."""
    img = ellipse_phantom_image(p, raster_dims, antialias=True)
    out = image_to_coefficients(img, gamma)
    out.values /= _sinc_correction(gamma, _pair(raster_dims))
    return out


def shepp_logan(modified: bool = True) -> EllipsePhantom:
    """The 10-ellipse Shepp-Logan head mapped from [-1,1]^2 onto [0,1]^2."""
    table = json.loads(resources.files("offgrid.data").joinpath("shepp_logan.json").read_text())
    key = "intensity_modified" if modified else "intensity"
    ellipses = [
        Ellipse(
            center=((row["x0"] + 1) / 2, (row["y0"] + 1) / 2),
            semi_axes=(row["a"] / 2, row["b"] / 2),
            angle_rad=math.radians(row["phi_deg"]),
            amplitude=row[key],
        )
        for row in table["ellipses"]
    ]
    return EllipsePhantom(ellipses)


# ---------------------------------------------------------------------------
# sample-domain operations


def add_noise(b: CoefficientGrid, snr_db: float, seed: int) -> CoefficientGrid:
    """Add circular complex Gaussian noise rescaled to hit ``snr_db`` exactly."""
    if math.isinf(snr_db) and snr_db > 0:
        return b.copy()
    rng = make_rng(seed)
    n = rng.standard_normal(b.values.shape) + 1j * rng.standard_normal(b.values.shape)
    target = b.norm() * 10 ** (-snr_db / 20)
    n *= target / np.linalg.norm(n)
    return CoefficientGrid(b.support, b.values + n)


def derivative_weight(f_hat: CoefficientGrid) -> tuple[CoefficientGrid, CoefficientGrid]:
    """Coefficients of the partial derivatives: ``j 2 pi k_x f[k]`` and ``j 2 pi k_y f[k]``."""
    KX, KY = f_hat.support.frequencies()
    return (
        CoefficientGrid(f_hat.support, 2j * np.pi * KX * f_hat.values),
        CoefficientGrid(f_hat.support, 2j * np.pi * KY * f_hat.values),
    )


def phase_correct(b: CoefficientGrid, pad_dims=None) -> CoefficientGrid:
    """Replace the zero-padded low-resolution image by its modulus and resample.

    ``pad_dims`` defaults to twice the sample extents.
    """
    if pad_dims is None:
        pad_dims = (2 * b.support.dims[0], 2 * b.support.dims[1])
    px, py = _pair(pad_dims)
    if px < b.support.dims[0] or py < b.support.dims[1]:
        raise ValueError(f"pad_dims {pad_dims} smaller than {b.support}")
    img = b.to_image((px, py))
    return image_to_coefficients(np.abs(img), b.support)
