"""Reconstruction quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["DimMismatch", "ZeroReference", "MetricReport", "snr_db", "nrmse", "ssim", "report", "csv_row"]


class DimMismatch(ValueError):
    pass


class ZeroReference(ValueError):
    pass


@dataclass
class MetricReport:
    snr_db: float
    nrmse: float
    ssim: float


def _pair_up(x, x0):
    x = np.asarray(x)
    x0 = np.asarray(x0)
    if x.shape != x0.shape:
        raise DimMismatch(f"{x.shape} vs {x0.shape}")
    if np.iscomplexobj(x) != np.iscomplexobj(x0):
        x, x0 = np.abs(x), np.abs(x0)
    return x, x0


def nrmse(x, x0) -> float:
    x, x0 = _pair_up(x, x0)
    ref = np.linalg.norm(x0)
    if ref == 0:
        raise ZeroReference("reference image is identically zero")
    return float(np.linalg.norm(x - x0) / ref)


def snr_db(x, x0) -> float:
    """``20 log10(||x0|| / ||x - x0||)``; ``inf`` for a perfect match."""
    e = nrmse(x, x0)
    return math.inf if e == 0 else -20 * math.log10(e)


def ssim(x, x0, window: int = 8) -> float:
    """Mean SSIM over all 8x8 windows (uniform weights, stride 1) of magnitude images."""
    x = np.abs(np.asarray(x)).astype(float)
    x0 = np.abs(np.asarray(x0)).astype(float)
    if x.shape != x0.shape:
        raise DimMismatch(f"{x.shape} vs {x0.shape}")
    L = x0.max() - x0.min()
    if L == 0:
        L = 1.0
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2

    def mean(a):
        return sliding_window_view(a, (window, window)).mean(axis=(-2, -1))

    mx, my = mean(x), mean(x0)
    n = window * window
    # unbiased covariance estimates as in the reference implementation
    k = n / (n - 1)
    vx = k * (mean(x * x) - mx * mx)
    vy = k * (mean(x0 * x0) - my * my)
    cxy = k * (mean(x * x0) - mx * my)
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(s.mean())


def report(x, x0) -> MetricReport:
    return MetricReport(snr_db(x, x0), nrmse(x, x0), ssim(x, x0))


def csv_row(name: str, r: MetricReport) -> str:
    return f"{name},{r.snr_db:.6f},{r.nrmse:.6e},{r.ssim:.6f}"
