"""Residual encoder/decoder networks for the compression bottleneck.

The encoder stacks stride-2 4x4 downsampling convolutions with residual units
in between and squashes the bottleneck through a sigmoid, so every feature
coefficient lies in (0, 1). The decoder mirrors the encoder, upsampling with
pixel-shuffle stages. Residual units use PReLU activations (one learnable
negative slope per channel) and no nonlinearity after the shortcut addition.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import InvalidSpecError, ShapeError

STANDARD_RESIDUAL_UNITS = 8
IMAGE_CHANNELS = 3
DOWNSAMPLE_KERNEL = 4


@dataclass(frozen=True)
class ResidualUnitSpec:
    """A unit is conv -> PReLU -> conv plus the identity shortcut.

    The activation learns one negative slope per channel, starting at
    ``negative_slope_init``; nothing nonlinear follows the shortcut addition.
    """

    channels: int
    kernel: int = 3
    negative_slope_init: float = 0.25

    def validate(self) -> None:
        if self.channels <= 0:
            raise InvalidSpecError(f"channels must be positive, got {self.channels}")
        if self.kernel <= 0 or self.kernel % 2 == 0:
            raise InvalidSpecError(f"kernel must be odd and positive, got {self.kernel}")


@dataclass(frozen=True)
class EncoderSpec:
    """Layout of the forward encoder.

    ``bottleneck_channels`` is the content-capacity knob: more channels keep
    more information and cost more bits. The standard layout uses 8 residual
    units; pass ``strict_depth=False`` to build reduced test-scale networks.
    """

    bottleneck_channels: int
    downsample_stages: int = 4
    residual_unit_count: int = STANDARD_RESIDUAL_UNITS
    interior_channels: int = 64
    boundary_kernel: int = 5
    interior_kernel: int = 3
    strict_depth: bool = True

    def validate(self) -> None:
        if self.bottleneck_channels <= 0:
            raise InvalidSpecError(
                f"bottleneck_channels must be positive, got {self.bottleneck_channels}")
        if self.bottleneck_channels > 255:
            raise InvalidSpecError("bottleneck_channels must fit in a byte (<= 255)")
        if self.downsample_stages < 1:
            raise InvalidSpecError(f"need at least one downsample stage, got {self.downsample_stages}")
        if self.interior_channels <= 0:
            raise InvalidSpecError(f"interior_channels must be positive, got {self.interior_channels}")
        for k in (self.boundary_kernel, self.interior_kernel):
            if k <= 0 or k % 2 == 0:
                raise InvalidSpecError(f"kernels must be odd and positive, got {k}")
        if self.residual_unit_count < 0:
            raise InvalidSpecError("residual_unit_count must be non-negative")
        if self.strict_depth and self.residual_unit_count != STANDARD_RESIDUAL_UNITS:
            raise InvalidSpecError(
                f"standard layout requires exactly {STANDARD_RESIDUAL_UNITS} residual units, "
                f"got {self.residual_unit_count}; pass strict_depth=False for reduced layouts")

    @property
    def scale_factor(self) -> int:
        return 1 << self.downsample_stages

    def units_per_stage(self) -> list[int]:
        """Spread residual units over resolution levels, extras first."""
        base, rem = divmod(self.residual_unit_count, self.downsample_stages)
        return [base + (1 if i < rem else 0) for i in range(self.downsample_stages)]


@dataclass(frozen=True)
class DecoderSpec:
    """Mirror of the encoder layout; upsampling is pixel-shuffle."""

    bottleneck_channels: int
    upsample_stages: int = 4
    residual_unit_count: int = STANDARD_RESIDUAL_UNITS
    interior_channels: int = 64
    boundary_kernel: int = 5
    interior_kernel: int = 3
    strict_depth: bool = True

    @classmethod
    def mirror(cls, enc: EncoderSpec) -> "DecoderSpec":
        return cls(
            bottleneck_channels=enc.bottleneck_channels,
            upsample_stages=enc.downsample_stages,
            residual_unit_count=enc.residual_unit_count,
            interior_channels=enc.interior_channels,
            boundary_kernel=enc.boundary_kernel,
            interior_kernel=enc.interior_kernel,
            strict_depth=enc.strict_depth,
        )

    def validate(self) -> None:
        EncoderSpec(
            bottleneck_channels=self.bottleneck_channels,
            downsample_stages=self.upsample_stages,
            residual_unit_count=self.residual_unit_count,
            interior_channels=self.interior_channels,
            boundary_kernel=self.boundary_kernel,
            interior_kernel=self.interior_kernel,
            strict_depth=self.strict_depth,
        ).validate()

    @property
    def scale_factor(self) -> int:
        return 1 << self.upsample_stages

    def units_per_stage(self) -> list[int]:
        base, rem = divmod(self.residual_unit_count, self.upsample_stages)
        return [base + (1 if i < rem else 0) for i in range(self.upsample_stages)]


class ResidualUnit(nn.Module):
    """conv -> PReLU -> conv plus identity shortcut, nothing after the add."""

    def __init__(self, spec: ResidualUnitSpec):
        super().__init__()
        spec.validate()
        pad = spec.kernel // 2
        self.conv1 = nn.Conv2d(spec.channels, spec.channels, spec.kernel, padding=pad)
        self.act = nn.PReLU(num_parameters=spec.channels, init=spec.negative_slope_init)
        self.conv2 = nn.Conv2d(spec.channels, spec.channels, spec.kernel, padding=pad)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))


class Encoder(nn.Module):
    """Image in [0, 1] -> bottleneck feature map in (0, 1)."""

    def __init__(self, spec: EncoderSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        w = spec.interior_channels
        self.head = nn.Conv2d(IMAGE_CHANNELS, w, spec.boundary_kernel,
                              padding=spec.boundary_kernel // 2)
        self.head_act = nn.PReLU(num_parameters=w)
        stages = []
        for units in spec.units_per_stage():
            blocks = [nn.Conv2d(w, w, DOWNSAMPLE_KERNEL, stride=2, padding=1),
                      nn.PReLU(num_parameters=w)]
            blocks += [ResidualUnit(ResidualUnitSpec(w, spec.interior_kernel))
                       for _ in range(units)]
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)
        self.tail = nn.Conv2d(w, spec.bottleneck_channels, spec.boundary_kernel,
                              padding=spec.boundary_kernel // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_image_batch(x, self.spec.scale_factor)
        y = self.head_act(self.head(x))
        for stage in self.stages:
            y = stage(y)
        return torch.sigmoid(self.tail(y))


class Decoder(nn.Module):
    """Bottleneck feature map -> reconstructed image in [0, 1]."""

    def __init__(self, spec: DecoderSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        w = spec.interior_channels
        self.head = nn.Conv2d(spec.bottleneck_channels, w, spec.boundary_kernel,
                              padding=spec.boundary_kernel // 2)
        self.head_act = nn.PReLU(num_parameters=w)
        stages = []
        for units in reversed(spec.units_per_stage()):
            blocks = [ResidualUnit(ResidualUnitSpec(w, spec.interior_kernel))
                      for _ in range(units)]
            blocks += [nn.Conv2d(w, 4 * w, spec.interior_kernel,
                                 padding=spec.interior_kernel // 2),
                       nn.PixelShuffle(2),
                       nn.PReLU(num_parameters=w)]
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)
        self.tail = nn.Conv2d(w, IMAGE_CHANNELS, spec.boundary_kernel,
                              padding=spec.boundary_kernel // 2)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        if f.ndim != 4:
            raise ShapeError(f"expected a BCHW feature batch, got shape {tuple(f.shape)}")
        if f.shape[1] != self.spec.bottleneck_channels:
            raise ShapeError(
                f"feature map has {f.shape[1]} channels, decoder expects "
                f"{self.spec.bottleneck_channels}")
        y = self.head_act(self.head(f))
        for stage in self.stages:
            y = stage(y)
        return torch.sigmoid(self.tail(y))


def _check_image_batch(x: torch.Tensor, multiple: int) -> None:
    if x.ndim != 4:
        raise ShapeError(f"expected a BCHW image batch, got shape {tuple(x.shape)}")
    if x.shape[1] != IMAGE_CHANNELS:
        raise ShapeError(f"expected {IMAGE_CHANNELS} channels, got {x.shape[1]}")
    h, w = x.shape[-2:]
    if h % multiple or w % multiple:
        raise ShapeError(
            f"spatial dims {h}x{w} are not divisible by {multiple}; pad first "
            f"(see pad_to_multiple)")


def _init_parameters(module: nn.Module, generator: torch.Generator | None) -> None:
    """Fan-in-scaled uniform init, reproducible through an explicit generator."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            bound = math.sqrt(3.0 / fan_in)
            m.weight.data.uniform_(-bound, bound, generator=generator)
            if m.bias is not None:
                b = 1.0 / math.sqrt(fan_in)
                m.bias.data.uniform_(-b, b, generator=generator)


def build_encoder(spec: EncoderSpec, seed: int | None = None) -> Encoder:
    """Construct an encoder; identical seeds yield identical parameters."""
    enc = Encoder(spec)
    gen = None if seed is None else torch.Generator().manual_seed(seed)
    _init_parameters(enc, gen)
    return enc


def build_decoder(spec: DecoderSpec, seed: int | None = None) -> Decoder:
    """Construct a decoder; identical seeds yield identical parameters."""
    dec = Decoder(spec)
    gen = None if seed is None else torch.Generator().manual_seed(seed)
    _init_parameters(dec, gen)
    return dec


def _as_batch(t: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if t.ndim == 3:
        return t.unsqueeze(0), True
    return t, False


def encode_forward(image: torch.Tensor, encoder: Encoder) -> torch.Tensor:
    """Run the encoder on a CHW image or BCHW batch."""
    x, squeeze = _as_batch(image)
    f = encoder(x)
    return f.squeeze(0) if squeeze else f


def decode_forward(fmap: torch.Tensor, decoder: Decoder) -> torch.Tensor:
    """Run the decoder on a CHW feature map or BCHW batch."""
    f, squeeze = _as_batch(fmap)
    y = decoder(f)
    return y.squeeze(0) if squeeze else y


def pad_to_multiple(image: torch.Tensor, multiple: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad a CHW/BCHW image so spatial dims divide ``multiple``.

    Returns the padded image and the original (height, width) for cropping
    after decoding.
    """
    h, w = image.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image, (h, w)
    if ph >= h or pw >= w:
        raise ShapeError(f"image {h}x{w} too small to reflect-pad to a multiple of {multiple}")
    x, squeeze = _as_batch(image)
    padded = nn.functional.pad(x, (0, pw, 0, ph), mode="reflect")
    return (padded.squeeze(0) if squeeze else padded), (h, w)


def crop_to(image: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Crop the padded border back off a CHW/BCHW image."""
    return image[..., :height, :width]
