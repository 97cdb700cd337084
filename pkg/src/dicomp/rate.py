"""Differentiable coding-rate estimation from quantized symbol statistics.

The discrete symbol distribution is relaxed to a continuous one by linear
interpolation between neighbouring bin probabilities, so the expected code
length -E[log2 P] is differentiable with respect to the pre-quantization
coefficients.
"""

import warnings
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
import torch

DEFAULT_SMOOTHING = 1e-6

ArrayLike = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class SymbolDistribution:
    """Smoothed probabilities over the 2**Q quantizer symbols.

    ``probs`` sums to 1 and every entry is at least eps / (1 + 2**Q * eps),
    the exact floor produced by additive smoothing.
    """

    probs: np.ndarray
    eps: float = DEFAULT_SMOOTHING

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size < 2 or (p.size & (p.size - 1)) != 0:
            raise ValueError(f"probs must be a 1-D array of power-of-two length, got shape {p.shape}")
        if not np.isfinite(p).all() or p.min() <= 0.0:
            raise ValueError("all probabilities must be finite and > 0")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1 within 1e-9, got {p.sum()!r}")

    @property
    def num_symbols(self) -> int:
        return self.probs.size

    @property
    def bit_depth(self) -> int:
        return int(self.probs.size.bit_length() - 1)

    def entropy(self) -> float:
        """Shannon entropy in bits per symbol."""
        p = self.probs
        return float(-(p * np.log2(p)).sum())


def _flatten_symbols(qmaps: Union[ArrayLike, Iterable[ArrayLike]]) -> np.ndarray:
    if isinstance(qmaps, (np.ndarray, torch.Tensor)):
        qmaps = [qmaps]
    parts = []
    for q in qmaps:
        if isinstance(q, torch.Tensor):
            q = q.detach().cpu().numpy()
        parts.append(np.asarray(q).reshape(-1))
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts).astype(np.int64)


def fit_distribution(qmaps: Union[ArrayLike, Iterable[ArrayLike]],
                     bit_depth: int = 6,
                     eps: float = DEFAULT_SMOOTHING) -> SymbolDistribution:
    """Fit an additively smoothed empirical distribution to quantized maps.

    p_i = (count_i + eps * N) / (N * (1 + 2**Q * eps)) with N total symbols.

    Raises:
        ValueError: on empty input or symbols outside [0, 2**Q - 1].
    """
    symbols = _flatten_symbols(qmaps)
    if symbols.size == 0:
        raise ValueError("cannot fit a distribution to zero symbols")
    k = 1 << bit_depth
    if symbols.min() < 0 or symbols.max() >= k:
        raise ValueError(f"symbols out of range [0, {k - 1}] for bit depth {bit_depth}")
    counts = np.bincount(symbols, minlength=k).astype(np.float64)
    n = float(symbols.size)
    probs = (counts + eps * n) / (n * (1.0 + k * eps))
    return SymbolDistribution(probs=probs, eps=eps)


def prob_continuous(x: ArrayLike, dist: SymbolDistribution) -> torch.Tensor:
    """Piecewise-linear probability of pre-quantization coordinates.

    ``x`` lives on the scaled axis [0, 2**Q - 1]; at integer k the result is
    exactly probs[k], in between it interpolates linearly. Out-of-range inputs
    are clamped with a warning. Differentiable in x; the slope on [k, k+1)
    is probs[k+1] - probs[k] (right-hand piece at the knots).
    """
    x = torch.as_tensor(x)
    if not x.dtype.is_floating_point:
        x = x.to(torch.float64)
    top = dist.num_symbols - 1
    with torch.no_grad():
        if x.numel() and (float(x.min()) < 0.0 or float(x.max()) > top):
            warnings.warn(f"coordinates outside [0, {top}] clamped", stacklevel=2)
    x = torch.clamp(x, 0.0, float(top))
    p = torch.from_numpy(dist.probs).to(x.dtype)
    lo = torch.clamp(torch.floor(x), max=float(top - 1))
    idx = lo.to(torch.int64)
    t = x - lo
    return p[idx] + t * (p[idx + 1] - p[idx])


def rate_loss(scaled_values: ArrayLike, dist: SymbolDistribution) -> torch.Tensor:
    """Estimated bits per symbol, -mean(log2 P(x)), over all coefficients.

    Non-negative and differentiable with respect to ``scaled_values``
    (the coefficients already multiplied by 2**Q - 1).
    """
    p = prob_continuous(scaled_values, dist)
    return -torch.log2(p).mean()
