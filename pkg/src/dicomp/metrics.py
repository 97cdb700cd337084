"""Quality and rate-comparison metrics: MS-SSIM, bpp, and BD-rate.

MS-SSIM follows the standard 5-scale construction (11x11 Gaussian window,
sigma 1.5, canonical per-scale weights), computed per channel and averaged at
the end. BD-rate fits cubic polynomials to (quality, log rate) and integrates
the gap over the overlapping quality interval; negative means the test curve
is cheaper than the reference at equal quality.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .codec import CompressedImage
from .errors import ShapeError
from .rdo import RatePoint

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


def _gaussian_window(dtype: torch.dtype) -> torch.Tensor:
    coords = torch.arange(_WINDOW_SIZE, dtype=dtype) - (_WINDOW_SIZE - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * _WINDOW_SIGMA ** 2))
    return g / g.sum()


def _blur(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    # separable valid-mode Gaussian; x is (C, 1, H, W)
    x = F.conv2d(x, win.reshape(1, 1, 1, -1))
    return F.conv2d(x, win.reshape(1, 1, -1, 1))


def _ssim_per_channel(x: torch.Tensor, y: torch.Tensor, win: torch.Tensor,
                      data_range: float) -> tuple[torch.Tensor, torch.Tensor]:
    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2
    mu_x = _blur(x, win)
    mu_y = _blur(y, win)
    sigma_xx = _blur(x * x, win) - mu_x * mu_x
    sigma_yy = _blur(y * y, win) - mu_y * mu_y
    sigma_xy = _blur(x * y, win) - mu_x * mu_y
    cs_map = (2.0 * sigma_xy + c2) / (sigma_xx + sigma_yy + c2)
    ssim_map = ((2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)) * cs_map
    return ssim_map.mean(dim=(1, 2, 3)), cs_map.mean(dim=(1, 2, 3))


def _halve(x: torch.Tensor) -> torch.Tensor:
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        x = F.pad(x, (0, w % 2, 0, h % 2), mode="replicate")
    return F.avg_pool2d(x, kernel_size=2)


def ms_ssim(x: torch.Tensor, y: torch.Tensor, data_range: float = 1.0,
            max_scales: int = 5) -> float:
    """Multi-scale structural similarity of two CHW images, in [0, 1]-ish.

    Identical images score exactly 1.0. Images whose smaller dimension is
    under 176 cannot support all 5 scales; the scale count is reduced (with a
    warning) and the weights renormalized.
    """
    if x.shape != y.shape:
        raise ShapeError(f"image shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.ndim != 3:
        raise ShapeError(f"expected CHW images, got shape {tuple(x.shape)}")
    min_dim = min(x.shape[-2:])
    scales = min(max_scales, len(MS_SSIM_WEIGHTS))
    while scales > 1 and (min_dim >> (scales - 1)) < _WINDOW_SIZE:
        scales -= 1
    if min_dim < _WINDOW_SIZE:
        raise ShapeError(f"images must be at least {_WINDOW_SIZE}px on a side, got {min_dim}")
    if scales < max_scales:
        warnings.warn(
            f"image too small for {max_scales}-scale MS-SSIM; using {scales} scales "
            f"with renormalized weights", stacklevel=2)
    weights = torch.tensor(MS_SSIM_WEIGHTS[:scales], dtype=x.dtype)
    weights = weights / weights.sum()

    a = x.unsqueeze(1).to(x.dtype)
    b = y.unsqueeze(1).to(x.dtype)
    win = _gaussian_window(x.dtype)
    per_scale = []
    for level in range(scales):
        ssim_c, cs_c = _ssim_per_channel(a, b, win, data_range)
        per_scale.append(ssim_c if level == scales - 1 else cs_c)
        if level < scales - 1:
            a = _halve(a)
            b = _halve(b)
    stacked = torch.relu(torch.stack(per_scale))  # (scales, C)
    combined = torch.prod(stacked ** weights.unsqueeze(1), dim=0)
    return float(combined.mean())


@dataclass(frozen=True)
class RDCurve:
    """A rate-distortion curve: >= 4 points, bpp and quality strictly rising."""

    points: tuple[RatePoint, ...]

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.bpp))
        object.__setattr__(self, "points", pts)
        if len(pts) < 4:
            raise ValueError(f"an RD curve needs at least 4 points, got {len(pts)}")
        for a, b in zip(pts[:-1], pts[1:]):
            if not (a.bpp < b.bpp and a.quality < b.quality):
                raise ValueError(
                    "RD curve must be strictly increasing in both bpp and quality; "
                    f"offending pair: {a} -> {b}")
        if pts[0].bpp <= 0:
            raise ValueError("bpp values must be positive for log-rate fitting")

    @property
    def bpps(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points], dtype=np.float64)

    @property
    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.points], dtype=np.float64)


def _quality_axis(q: np.ndarray, transform: str) -> np.ndarray:
    if transform == "none":
        return q
    if transform == "db":
        if np.any(q >= 1.0):
            raise ValueError("quality 1.0 cannot be dB-transformed (-10*log10(1-q))")
        return -10.0 * np.log10(1.0 - q)
    raise ValueError(f"unknown quality transform {transform!r}")


def bd_rate(reference: RDCurve, test: RDCurve, quality_transform: str = "none") -> float:
    """Average percent rate difference of ``test`` versus ``reference``.

    Cubic fit of log-rate against quality, integrated over the shared quality
    interval. ``quality_transform='db'`` integrates over -10*log10(1 - q)
    instead of raw quality.
    """
    q_ref = _quality_axis(reference.qualities, quality_transform)
    q_test = _quality_axis(test.qualities, quality_transform)
    lo = max(q_ref.min(), q_test.min())
    hi = min(q_ref.max(), q_test.max())
    if not hi > lo:
        raise ValueError(
            f"quality ranges do not overlap: [{q_ref.min():.6g}, {q_ref.max():.6g}] vs "
            f"[{q_test.min():.6g}, {q_test.max():.6g}]")
    poly_ref = np.polyfit(q_ref, np.log(reference.bpps), 3)
    poly_test = np.polyfit(q_test, np.log(test.bpps), 3)
    int_ref = np.polyval(np.polyint(poly_ref), hi) - np.polyval(np.polyint(poly_ref), lo)
    int_test = np.polyval(np.polyint(poly_test), hi) - np.polyval(np.polyint(poly_test), lo)
    avg_log_ratio = (int_test - int_ref) / (hi - lo)
    return (math.exp(avg_log_ratio) - 1.0) * 100.0


def bpp(cs: CompressedImage) -> float:
    """Bits per pixel of a compressed image, counting every stream byte."""
    return 8.0 * cs.total_bytes / cs.num_pixels


def average_rate_point(points: Sequence[RatePoint], model_id: int) -> RatePoint:
    """Mean bpp/quality over per-image points for one model."""
    if not points:
        raise ValueError("no points to average")
    return RatePoint(bpp=float(np.mean([p.bpp for p in points])),
                     quality=float(np.mean([p.quality for p in points])),
                     model_id=model_id)
