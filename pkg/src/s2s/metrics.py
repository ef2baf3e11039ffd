"""Image and volume quality measures: PSNR and SSIM.

Images are [0,1] arrays (dynamic range L = 1). Identical inputs report the
99 dB sentinel instead of infinite PSNR so reports stay serializable. SSIM
follows the original formulation: Gaussian 11x11 window with sigma 1.5,
k1 = 0.01, k2 = 0.03, averaged over valid window positions only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) in dB; identical images return the 99 dB cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         window_size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean local SSIM over valid (un-padded) window positions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: {a.shape} vs {b.shape}")
    if min(a.shape) < window_size:
        raise ValueError(
            f"image {a.shape} smaller than the {window_size}x{window_size} window"
        )
    kernel = gaussian_window(window_size, sigma)
    wa = sliding_window_view(a, (window_size, window_size))
    wb = sliding_window_view(b, (window_size, window_size))
    mu_a = np.einsum("ijuv,uv->ij", wa, kernel)
    mu_b = np.einsum("ijuv,uv->ij", wb, kernel)
    e_aa = np.einsum("ijuv,uv->ij", wa * wa, kernel)
    e_bb = np.einsum("ijuv,uv->ij", wb * wb, kernel)
    e_ab = np.einsum("ijuv,uv->ij", wa * wb, kernel)
    var_a = e_aa - mu_a ** 2
    var_b = e_bb - mu_b ** 2
    cov = e_ab - mu_a * mu_b
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Per-slice PSNR/SSIM plus aggregates for one volume comparison."""

    psnr_per_slice: list[float] = field(default_factory=list)
    ssim_per_slice: list[float] = field(default_factory=list)
    psnr_mean: float = 0.0
    ssim_mean: float = 0.0
    capped_slices: int = 0
    count: int = 0

    def to_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for i, (p, s) in enumerate(zip(self.psnr_per_slice, self.ssim_per_slice)):
                f.write(json.dumps({"slice": i, "psnr": p, "ssim": s}) + "\n")
            f.write(json.dumps({
                "psnr_mean": self.psnr_mean,
                "ssim_mean": self.ssim_mean,
                "capped_slices": self.capped_slices,
                "count": self.count,
            }) + "\n")


def _volume_values(v) -> np.ndarray:
    values = getattr(v, "values", v)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected a 3D volume, got shape {arr.shape}")
    return arr


def evaluate_volume(pred, truth) -> MetricReport:
    """Slice-wise PSNR/SSIM along the stacking axis, then means.

    Slices at the PSNR cap (bit-identical planes) are excluded from the
    PSNR mean; their count is reported instead.
    """
    p = _volume_values(pred)
    t = _volume_values(truth)
    if p.shape != t.shape:
        raise ShapeError(f"volume dims differ: {p.shape} vs {t.shape}")
    report = MetricReport(count=p.shape[0])
    for k in range(p.shape[0]):
        report.psnr_per_slice.append(psnr(p[k], t[k]))
        report.ssim_per_slice.append(ssim(p[k], t[k]))
    uncapped = [v for v in report.psnr_per_slice if v < PSNR_CAP]
    report.capped_slices = report.count - len(uncapped)
    report.psnr_mean = float(np.mean(uncapped)) if uncapped else PSNR_CAP
    report.ssim_mean = float(np.mean(report.ssim_per_slice))
    return report


def format_metric_table(columns: dict[str, MetricReport]) -> str:
    """Aligned text table: metric rows by configuration columns."""
    names = list(columns)
    widths = [max(len(n), 8) for n in names]
    header = "Metric  " + "  ".join(n.rjust(w) for n, w in zip(names, widths))
    psnr_row = "PSNR    " + "  ".join(
        f"{columns[n].psnr_mean:.2f}".rjust(w) for n, w in zip(names, widths))
    ssim_row = "SSIM    " + "  ".join(
        f"{columns[n].ssim_mean:.3f}".rjust(w) for n, w in zip(names, widths))
    return "\n".join([header, psnr_row, ssim_row])
