"""Self-describing model checkpoints.

A checkpoint archives the encoder/decoder parameters together with the spec
that shaped them and the training state (rate weight, epoch), so a model file
alone is enough to rebuild the exact networks.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import torch

from .autoencoder import Decoder, DecoderSpec, Encoder, EncoderSpec
from .errors import DecodeError
from .rdo import RatePoint

_FORMAT = "dicomp-checkpoint"
_FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    spec: EncoderSpec
    encoder_state: dict
    decoder_state: dict
    model_id: int
    bit_depth: int = 6
    lambda_rate: float = 0.0
    epoch: int = -1
    probe_loss: Optional[float] = None
    rate_point: Optional[RatePoint] = None
    _cache: Optional[tuple[Encoder, Decoder]] = field(
        default=None, repr=False, compare=False)

    @classmethod
    def from_modules(cls, encoder: Encoder, decoder: Decoder, model_id: int,
                     **meta) -> "Checkpoint":
        return cls(spec=encoder.spec,
                   encoder_state={k: v.detach().clone() for k, v in encoder.state_dict().items()},
                   decoder_state={k: v.detach().clone() for k, v in decoder.state_dict().items()},
                   model_id=model_id, **meta)

    def modules(self) -> tuple[Encoder, Decoder]:
        """Rebuild (and cache) the encoder/decoder with the stored parameters."""
        if self._cache is None:
            encoder = Encoder(self.spec)
            encoder.load_state_dict(self.encoder_state)
            encoder.eval()
            decoder = Decoder(DecoderSpec.mirror(self.spec))
            decoder.load_state_dict(self.decoder_state)
            decoder.eval()
            self._cache = (encoder, decoder)
        return self._cache


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    payload = {
        "format": _FORMAT,
        "format_version": _FORMAT_VERSION,
        "spec": asdict(ckpt.spec),
        "encoder_state": ckpt.encoder_state,
        "decoder_state": ckpt.decoder_state,
        "model_id": ckpt.model_id,
        "bit_depth": ckpt.bit_depth,
        "lambda_rate": ckpt.lambda_rate,
        "epoch": ckpt.epoch,
        "probe_loss": ckpt.probe_loss,
        "rate_point": None if ckpt.rate_point is None else
            (ckpt.rate_point.bpp, ckpt.rate_point.quality, ckpt.rate_point.model_id),
    }
    torch.save(payload, path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise DecodeError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != _FORMAT:
        raise DecodeError(f"{path} is not a dicomp checkpoint")
    rp = payload.get("rate_point")
    return Checkpoint(
        spec=EncoderSpec(**payload["spec"]),
        encoder_state=payload["encoder_state"],
        decoder_state=payload["decoder_state"],
        model_id=payload["model_id"],
        bit_depth=payload["bit_depth"],
        lambda_rate=payload["lambda_rate"],
        epoch=payload["epoch"],
        probe_loss=payload.get("probe_loss"),
        rate_point=None if rp is None else RatePoint(bpp=rp[0], quality=rp[1], model_id=rp[2]),
    )
