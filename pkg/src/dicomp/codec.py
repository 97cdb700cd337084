"""Lossless entropy coding and the on-disk compressed-image container.

The coder is a static-model integer arithmetic coder: both sides derive the
exact same scaled frequency table from the header, so no adaptive state needs
to be synchronized. A CRC-32 trailer over the coding context and payload turns
any truncation, corruption, or header mismatch into an explicit decode error.

Container layout (little-endian), extension ``.dic``:

    offset  size        field
    0       4           magic "DIC1"
    4       1           format version (1)
    5       2           image width  (true, pre-padding)
    7       2           image height (true, pre-padding)
    9       1           model id
    10      1           bottleneck channels C
    11      1           bit depth Q
    12      2 * 2**Q    scaled symbol counts (uint16 each)
    ...     4           payload length (uint32)
    ...     n           payload = arithmetic-coded bytes + CRC-32 trailer
"""

import struct
import zlib
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import torch

from .autoencoder import crop_to, decode_forward, encode_forward, pad_to_multiple
from .checkpoints import Checkpoint
from .errors import DecodeError, RangeError
from .quantizer import dequantize, quantize
from .rate import SymbolDistribution, fit_distribution

MAGIC = b"DIC1"
FORMAT_VERSION = 1
FILE_EXTENSION = ".dic"

_CODE_BITS = 32
_TOP = 1 << _CODE_BITS
_HALF = _TOP >> 1
_QTR = _TOP >> 2
_COUNT_TOTAL = 1 << 16

_HEADER_FMT = "<4sBHHBBB"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)


class _BitWriter:
    __slots__ = ("_buf", "_cur", "_n")

    def __init__(self):
        self._buf = bytearray()
        self._cur = 0
        self._n = 0

    def write(self, bit: int) -> None:
        self._cur = (self._cur << 1) | bit
        self._n += 1
        if self._n == 8:
            self._buf.append(self._cur)
            self._cur = 0
            self._n = 0

    def getvalue(self) -> bytes:
        if self._n:
            return bytes(self._buf) + bytes([self._cur << (8 - self._n)])
        return bytes(self._buf)


class _BitReader:
    """MSB-first bit reader returning zeros past the end of the buffer."""

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def read(self) -> int:
        i = self._pos >> 3
        if i >= len(self._data):
            self._pos += 1
            return 0
        bit = (self._data[i] >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit


class _ArithmeticEncoder:
    def __init__(self, writer: _BitWriter):
        self._low = 0
        self._high = _TOP - 1
        self._pending = 0
        self._writer = writer

    def _emit(self, bit: int) -> None:
        self._writer.write(bit)
        inv = bit ^ 1
        for _ in range(self._pending):
            self._writer.write(inv)
        self._pending = 0

    def encode(self, cum_lo: int, cum_hi: int, total: int) -> None:
        span = self._high - self._low + 1
        self._high = self._low + span * cum_hi // total - 1
        self._low = self._low + span * cum_lo // total
        while True:
            if self._high < _HALF:
                self._emit(0)
            elif self._low >= _HALF:
                self._emit(1)
                self._low -= _HALF
                self._high -= _HALF
            elif self._low >= _QTR and self._high < _HALF + _QTR:
                self._pending += 1
                self._low -= _QTR
                self._high -= _QTR
            else:
                break
            self._low <<= 1
            self._high = (self._high << 1) | 1

    def finish(self) -> None:
        self._pending += 1
        self._emit(0 if self._low < _QTR else 1)


class _ArithmeticDecoder:
    def __init__(self, reader: _BitReader):
        self._low = 0
        self._high = _TOP - 1
        self._reader = reader
        self._value = 0
        for _ in range(_CODE_BITS):
            self._value = (self._value << 1) | reader.read()

    def decode(self, cum: list[int], total: int) -> int:
        span = self._high - self._low + 1
        target = ((self._value - self._low + 1) * total - 1) // span
        symbol = bisect_right(cum, target) - 1
        self._high = self._low + span * cum[symbol + 1] // total - 1
        self._low = self._low + span * cum[symbol] // total
        while True:
            if self._high < _HALF:
                pass
            elif self._low >= _HALF:
                self._low -= _HALF
                self._high -= _HALF
                self._value -= _HALF
            elif self._low >= _QTR and self._high < _HALF + _QTR:
                self._low -= _QTR
                self._high -= _QTR
                self._value -= _QTR
            else:
                return symbol
            self._low <<= 1
            self._high = (self._high << 1) | 1
            self._value = (self._value << 1) | self._reader.read()


def scaled_counts(dist: SymbolDistribution) -> np.ndarray:
    """Quantize probabilities to uint16 frequency counts, every symbol >= 1.

    The total never exceeds 2**16, which keeps the coder's integer subranges
    non-degenerate, and the quantized model costs at most a few millibits per
    symbol versus the float distribution.
    """
    k = dist.num_symbols
    counts = np.floor(dist.probs * (_COUNT_TOTAL - k)).astype(np.int64) + 1
    return counts.astype(np.uint16)


def _crc(bit_depth: int, n: int, counts: np.ndarray, coded: bytes) -> int:
    ctx = struct.pack("<BQ", bit_depth, n) + counts.astype("<u2").tobytes()
    return zlib.crc32(coded, zlib.crc32(ctx))


def _as_symbol_array(qmap) -> np.ndarray:
    if isinstance(qmap, torch.Tensor):
        qmap = qmap.detach().cpu().numpy()
    return np.ascontiguousarray(qmap, dtype=np.int64)


def entropy_encode(qmap, dist: SymbolDistribution) -> bytes:
    """Arithmetic-code a quantized map under ``dist``; returns payload bytes.

    The payload ends with a CRC-32 over the coding context (bit depth, symbol
    count, frequency table) and the coded bytes.
    """
    symbols = _as_symbol_array(qmap).reshape(-1)
    if symbols.size == 0:
        raise RangeError("cannot encode an empty map")
    top = dist.num_symbols - 1
    if symbols.min() < 0 or symbols.max() > top:
        raise RangeError(f"symbols out of range [0, {top}]")
    counts = scaled_counts(dist)
    cum = np.concatenate(([0], np.cumsum(counts, dtype=np.int64))).tolist()
    total = cum[-1]
    writer = _BitWriter()
    enc = _ArithmeticEncoder(writer)
    encode = enc.encode
    for s in symbols.tolist():
        encode(cum[s], cum[s + 1], total)
    enc.finish()
    coded = writer.getvalue()
    return coded + struct.pack("<I", _crc(dist.bit_depth, symbols.size, counts, coded))


@dataclass(frozen=True)
class BitstreamHeader:
    width: int
    height: int
    model_id: int
    channels: int
    bit_depth: int
    counts: np.ndarray
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if not (0 < self.width <= 0xFFFF and 0 < self.height <= 0xFFFF):
            raise ValueError(f"image dims must fit in uint16, got {self.width}x{self.height}")
        if not (0 <= self.model_id <= 0xFF and 0 < self.channels <= 0xFF):
            raise ValueError("model id and channel count must fit in a byte")
        if not 1 <= self.bit_depth <= 16:
            raise ValueError(f"bit depth out of range: {self.bit_depth}")
        counts = np.asarray(self.counts, dtype=np.uint16)
        object.__setattr__(self, "counts", counts)
        if counts.shape != (1 << self.bit_depth,):
            raise ValueError(f"expected {1 << self.bit_depth} counts, got {counts.shape}")
        if int(counts.sum()) <= 0:
            raise ValueError("counts must sum to a positive total")

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitstreamHeader):
            return NotImplemented
        return (self.version == other.version
                and self.width == other.width and self.height == other.height
                and self.model_id == other.model_id
                and self.channels == other.channels
                and self.bit_depth == other.bit_depth
                and np.array_equal(self.counts, other.counts))

    def fmap_shape(self, downsample_stages: int = 0) -> tuple[int, int, int]:
        """Symbol-map shape implied by the image dims after padding."""
        m = 1 << downsample_stages
        fh = (self.height + (-self.height) % m) >> downsample_stages
        fw = (self.width + (-self.width) % m) >> downsample_stages
        return (self.channels, fh, fw)

    def distribution(self) -> SymbolDistribution:
        """Reconstruct the (quantized) symbol distribution carried in the header."""
        counts = self.counts.astype(np.float64)
        total = counts.sum()
        return SymbolDistribution(probs=counts / total, eps=1.0 / total)

    def pack(self) -> bytes:
        head = struct.pack(_HEADER_FMT, MAGIC, self.version, self.width,
                           self.height, self.model_id, self.channels, self.bit_depth)
        return head + self.counts.astype("<u2").tobytes()

    @classmethod
    def unpack(cls, data: bytes) -> tuple["BitstreamHeader", int]:
        if len(data) < _HEADER_SIZE:
            raise DecodeError("stream shorter than the fixed header")
        magic, version, width, height, model_id, channels, bit_depth = \
            struct.unpack_from(_HEADER_FMT, data)
        if magic != MAGIC:
            raise DecodeError(f"bad magic {magic!r}, not a compressed-image stream")
        if version != FORMAT_VERSION:
            raise DecodeError(f"unsupported format version {version}")
        if not 1 <= bit_depth <= 16:
            raise DecodeError(f"corrupt header: bit depth {bit_depth}")
        n_counts = 1 << bit_depth
        end = _HEADER_SIZE + 2 * n_counts
        if len(data) < end:
            raise DecodeError("stream truncated inside the frequency table")
        counts = np.frombuffer(data, dtype="<u2", count=n_counts,
                               offset=_HEADER_SIZE).astype(np.uint16)
        try:
            header = cls(width=width, height=height, model_id=model_id,
                         channels=channels, bit_depth=bit_depth, counts=counts)
        except ValueError as exc:
            raise DecodeError(f"corrupt header: {exc}") from exc
        return header, end


def entropy_decode(payload: bytes, header: BitstreamHeader,
                   downsample_stages: int = 0) -> torch.Tensor:
    """Exact inverse of entropy_encode for a payload matching ``header``.

    Raises DecodeError when the payload is truncated or the header (bit
    depth, dims, frequency table) does not match what was encoded.
    """
    shape = header.fmap_shape(downsample_stages)
    n = shape[0] * shape[1] * shape[2]
    if len(payload) < 5:
        raise DecodeError("payload too short to contain coded data and CRC")
    coded, trailer = payload[:-4], payload[-4:]
    (stored_crc,) = struct.unpack("<I", trailer)
    if _crc(header.bit_depth, n, header.counts, coded) != stored_crc:
        raise DecodeError("payload CRC mismatch: truncated, corrupt, or wrong header")
    cum = np.concatenate(([0], np.cumsum(header.counts.astype(np.int64)))).tolist()
    total = cum[-1]
    dec = _ArithmeticDecoder(_BitReader(coded))
    decode = dec.decode
    symbols = [decode(cum, total) for _ in range(n)]
    return torch.tensor(symbols, dtype=torch.int64).reshape(shape)


@dataclass(frozen=True)
class CompressedImage:
    header: BitstreamHeader
    payload: bytes

    @property
    def total_bytes(self) -> int:
        return len(self.header.pack()) + 4 + len(self.payload)

    @property
    def num_pixels(self) -> int:
        return self.header.width * self.header.height

    def to_bytes(self) -> bytes:
        return self.header.pack() + struct.pack("<I", len(self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedImage":
        header, offset = BitstreamHeader.unpack(data)
        if len(data) < offset + 4:
            raise DecodeError("stream truncated before the payload length")
        (length,) = struct.unpack_from("<I", data, offset)
        payload = data[offset + 4: offset + 4 + length]
        if len(payload) != length:
            raise DecodeError(f"payload truncated: expected {length} bytes, have {len(payload)}")
        return cls(header=header, payload=payload)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path: Union[str, Path]) -> "CompressedImage":
        return cls.from_bytes(Path(path).read_bytes())


def compress_image(image: torch.Tensor, checkpoint: Checkpoint) -> CompressedImage:
    """Encode a CHW image in [0, 1] into a self-contained compressed stream.

    The symbol distribution is fitted per image and carried in the header, so
    decompression needs only the stream plus the checkpoint named by model id.
    """
    if image.ndim != 3:
        raise RangeError(f"expected a CHW image, got shape {tuple(image.shape)}")
    encoder, _ = checkpoint.modules()
    spec = checkpoint.spec
    padded, (h, w) = pad_to_multiple(image, spec.scale_factor)
    with torch.no_grad():
        fmap = encode_forward(padded, encoder)
    qmap = quantize(fmap, checkpoint.bit_depth)
    dist = fit_distribution(qmap, checkpoint.bit_depth)
    payload = entropy_encode(qmap, dist)
    header = BitstreamHeader(width=w, height=h, model_id=checkpoint.model_id,
                             channels=spec.bottleneck_channels,
                             bit_depth=checkpoint.bit_depth,
                             counts=scaled_counts(dist))
    return CompressedImage(header=header, payload=payload)


def decompress_image(cs: CompressedImage, checkpoint: Checkpoint) -> torch.Tensor:
    """Decode a compressed stream back to a CHW image cropped to true dims."""
    header = cs.header
    if header.model_id != checkpoint.model_id:
        raise DecodeError(
            f"stream was coded with model {header.model_id}, "
            f"checkpoint is model {checkpoint.model_id}")
    spec = checkpoint.spec
    if header.channels != spec.bottleneck_channels or header.bit_depth != checkpoint.bit_depth:
        raise DecodeError("stream header does not match the checkpoint spec")
    _, decoder = checkpoint.modules()
    qmap = entropy_decode(cs.payload, header, spec.downsample_stages)
    coeffs = dequantize(qmap, checkpoint.bit_depth)
    with torch.no_grad():
        recon = decode_forward(coeffs, decoder)
    return crop_to(recon, header.height, header.width)
