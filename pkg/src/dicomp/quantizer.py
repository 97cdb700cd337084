"""Scalar quantization of bottleneck coefficients with straight-through gradients.

Coefficients in [0, 1] are scaled to ``Q``-bit integer symbols by
half-away-from-zero rounding. During backpropagation the rounding step is
treated as the identity, so gradients pass through unchanged.
"""

import torch

from .errors import RangeError

DEFAULT_BIT_DEPTH = 6
MAX_BIT_DEPTH = 16


def _check_bit_depth(bit_depth: int) -> None:
    if not isinstance(bit_depth, int) or not 1 <= bit_depth <= MAX_BIT_DEPTH:
        raise RangeError(f"bit depth must be an integer in [1, {MAX_BIT_DEPTH}], got {bit_depth!r}")


def num_levels(bit_depth: int) -> int:
    """Number of quantization levels, 2**Q."""
    _check_bit_depth(bit_depth)
    return 1 << bit_depth


def quantize(fmap: torch.Tensor, bit_depth: int = DEFAULT_BIT_DEPTH) -> torch.Tensor:
    """Map coefficients in [0, 1] to integer symbols in {0, ..., 2**Q - 1}.

    Rounding is half-away-from-zero: a coefficient exactly between two levels
    maps to the upper one. Boundary values 0.0 and 1.0 are accepted and map to
    the extreme symbols.

    Raises:
        RangeError: if any value lies outside [0, 1] or bit_depth is invalid.
    """
    _check_bit_depth(bit_depth)
    if fmap.numel() == 0:
        raise RangeError("cannot quantize an empty tensor")
    lo, hi = float(fmap.min()), float(fmap.max())
    if lo < 0.0 or hi > 1.0:
        raise RangeError(f"coefficients must lie in [0, 1], found range [{lo}, {hi}]")
    scale = float((1 << bit_depth) - 1)
    # floor(x + 0.5) is half-away-from-zero for non-negative x
    return torch.floor(fmap * scale + 0.5).to(torch.int64)


def dequantize(qmap: torch.Tensor, bit_depth: int = DEFAULT_BIT_DEPTH,
               dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Map integer symbols back to coefficients symbol / (2**Q - 1) in [0, 1]."""
    _check_bit_depth(bit_depth)
    top = (1 << bit_depth) - 1
    if qmap.numel() and (int(qmap.min()) < 0 or int(qmap.max()) > top):
        raise RangeError(f"symbols must lie in [0, {top}]")
    return qmap.to(dtype) / top


class _RoundedBottleneck(torch.autograd.Function):
    """Quantize-dequantize forward; identity Jacobian backward."""

    @staticmethod
    def forward(ctx, x: torch.Tensor, bit_depth: int) -> torch.Tensor:
        return dequantize(quantize(x, bit_depth), bit_depth, dtype=x.dtype)

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor):
        return grad_output, None


def quantize_ste(fmap: torch.Tensor, bit_depth: int = DEFAULT_BIT_DEPTH) -> torch.Tensor:
    """Differentiable quantize-dequantize round trip.

    The forward value equals ``dequantize(quantize(fmap))`` exactly; the
    gradient with respect to ``fmap`` is the identity (rounding is skipped
    during backpropagation).
    """
    return _RoundedBottleneck.apply(fmap, bit_depth)
