"""Training loop with the easy-to-hard rate-weight ramp.

Training starts with the rate weight at zero so the autoencoder first learns
to reconstruct, then ramps the weight up in plateaus, checkpointing once per
plateau. The resulting checkpoint family spans a range of rate-distortion
trade-offs. An optional fine-tune phase afterwards adds the perceptual and
adversarial terms on top of the converged autoencoder.
"""

import csv
import warnings
from dataclasses import dataclass
from itertools import chain
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .autoencoder import DecoderSpec, EncoderSpec, build_decoder, build_encoder
from .checkpoints import Checkpoint, save_checkpoint
from .codec import compress_image, decompress_image
from .data import PatchDataset
from .errors import InvalidSpecError, TrainingDivergedError
from .losses import (Discriminator, FeatureExtractor, LossWeights,
                     discriminator_loss, total_loss)
from .metrics import bpp, ms_ssim
from .quantizer import quantize, quantize_ste
from .rate import fit_distribution, rate_loss
from .rdo import RatePoint


@dataclass(frozen=True)
class TrainingSchedule:
    """Optimizer and rate-ramp parameters.

    The rate weight is 0 for ``pretrain_epochs`` epochs, then climbs by
    ``ramp_step`` every ``ramp_interval`` epochs until it reaches
    ``lambda_cap``. ``fine_tune_epochs`` extra epochs (at the cap) enable the
    perceptual and adversarial terms.
    """

    learning_rate: float = 1e-4
    batch_size: int = 16
    pretrain_epochs: int = 100
    ramp_interval: int = 5
    ramp_step: float = 1e-4
    lambda_cap: float = 2e-3
    fine_tune_epochs: int = 0
    bit_depth: int = 6

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidSpecError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidSpecError("batch_size must be >= 1")
        if self.pretrain_epochs < 0 or self.fine_tune_epochs < 0:
            raise InvalidSpecError("epoch counts must be non-negative")
        if self.ramp_interval < 1:
            raise InvalidSpecError("ramp_interval must be >= 1")
        if self.ramp_step < 0 or self.lambda_cap < 0:
            raise InvalidSpecError("ramp_step and lambda_cap must be non-negative")
        if not 1 <= self.bit_depth <= 16:
            raise InvalidSpecError(f"bit_depth out of range: {self.bit_depth}")

    @property
    def ramp_plateaus(self) -> int:
        if self.ramp_step == 0 or self.lambda_cap == 0:
            return 0
        return int(np.ceil(self.lambda_cap / self.ramp_step))

    @property
    def total_epochs(self) -> int:
        return (self.pretrain_epochs + self.ramp_interval * self.ramp_plateaus
                + self.fine_tune_epochs)


def lambda_at_epoch(schedule: TrainingSchedule, epoch: int) -> float:
    """Rate weight in force at ``epoch``: 0 through pretraining, then a
    capped staircase rising every ``ramp_interval`` epochs."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if epoch < schedule.pretrain_epochs:
        return 0.0
    steps = 1 + (epoch - schedule.pretrain_epochs) // schedule.ramp_interval
    return min(schedule.lambda_cap, schedule.ramp_step * steps)


def _base_loss(encoder, decoder, batch: torch.Tensor, lam: float,
               bit_depth: int) -> torch.Tensor:
    """Distortion plus weighted rate, the objective of the base phases."""
    fmap = encoder(batch)
    recon = decoder(quantize_ste(fmap, bit_depth))
    rate = None
    if lam > 0:
        dist = fit_distribution(quantize(fmap.detach(), bit_depth), bit_depth)
        rate = rate_loss(fmap * ((1 << bit_depth) - 1), dist)
    weights = LossWeights(lambda_rate=lam, lambda_perceptual=0.0, lambda_adversarial=0.0)
    return total_loss(recon, batch, rate, weights)


def probe_loss(checkpoint: Checkpoint, probe_batch: torch.Tensor) -> float:
    """Recompute the base objective a checkpoint recorded at save time."""
    encoder, decoder = checkpoint.modules()
    with torch.no_grad():
        loss = _base_loss(encoder, decoder, probe_batch,
                          checkpoint.lambda_rate, checkpoint.bit_depth)
    return float(loss)


def train(dataset: PatchDataset, spec: EncoderSpec, schedule: TrainingSchedule,
          weights: LossWeights = LossWeights(), out_dir: Optional[Path] = None,
          seed: int = 0, log=None) -> list[Checkpoint]:
    """Run the full schedule and return one checkpoint per rate plateau.

    Checkpoints are saved at the end of pretraining, at the end of every ramp
    plateau, and after fine-tuning; ``out_dir`` (optional) receives
    ``model_NNN.pt`` files plus a per-epoch ``probe_loss.csv``.

    Raises:
        TrainingDivergedError: if the loss goes non-finite.
    """
    spec.validate()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    encoder = build_encoder(spec, seed=seed)
    decoder = build_decoder(DecoderSpec.mirror(spec), seed=seed + 1)
    opt = torch.optim.Adam(chain(encoder.parameters(), decoder.parameters()),
                           lr=schedule.learning_rate)

    critic: Optional[Discriminator] = None
    features: Optional[FeatureExtractor] = None
    critic_opt = None
    torch_gen = torch.Generator().manual_seed(seed)
    if schedule.fine_tune_epochs > 0:
        features = FeatureExtractor(seed=seed + 2)
        critic = Discriminator(image_size=dataset.patch_size,
                               base_channels=min(64, max(8, dataset.patch_size // 2)),
                               hidden_units=256)
        critic_opt = torch.optim.Adam(critic.parameters(), lr=schedule.learning_rate)

    probe_count = min(schedule.batch_size, len(dataset))
    probe_batch = dataset.stack(range(probe_count))

    boundaries = _checkpoint_boundaries(schedule)
    checkpoints: list[Checkpoint] = []
    probe_rows: list[tuple] = []

    for epoch in range(schedule.total_epochs):
        lam = lambda_at_epoch(schedule, epoch)
        fine_tune = epoch >= schedule.total_epochs - schedule.fine_tune_epochs
        order = np.random.default_rng([seed, 7919, epoch]).permutation(len(dataset))
        for start in range(0, len(order), schedule.batch_size):
            batch = dataset.stack(order[start:start + schedule.batch_size])
            if fine_tune and critic is not None:
                _critic_step(critic, critic_opt, encoder, decoder, batch,
                             schedule.bit_depth, weights.gradient_penalty, torch_gen)
                loss = _enhanced_loss(encoder, decoder, batch, lam,
                                      schedule.bit_depth, weights, features, critic)
            else:
                loss = _base_loss(encoder, decoder, batch, lam, schedule.bit_depth)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {start // schedule.batch_size}")
            opt.zero_grad()
            loss.backward()
            opt.step()

        with torch.no_grad():
            p_total = float(_base_loss(encoder, decoder, probe_batch, lam,
                                       schedule.bit_depth))
            p_mse = float(_base_loss(encoder, decoder, probe_batch, 0.0,
                                     schedule.bit_depth))
        probe_rows.append((epoch, lam, p_total, p_mse))
        if log is not None:
            log(f"epoch {epoch:4d}  lambda {lam:.6f}  probe {p_total:.6f}  mse {p_mse:.6f}")

        if epoch in boundaries:
            ckpt = Checkpoint.from_modules(
                encoder, decoder, model_id=len(checkpoints),
                bit_depth=schedule.bit_depth, lambda_rate=lam, epoch=epoch,
                probe_loss=p_total)
            checkpoints.append(ckpt)
            if out_dir is not None:
                save_checkpoint(ckpt, out_dir / f"model_{ckpt.model_id:03d}.pt")

    if out_dir is not None:
        with open(out_dir / "probe_loss.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "lambda", "probe_total", "probe_mse"])
            writer.writerows(probe_rows)
    return checkpoints


def _checkpoint_boundaries(schedule: TrainingSchedule) -> set[int]:
    ends = set()
    if schedule.pretrain_epochs > 0:
        ends.add(schedule.pretrain_epochs - 1)
    for k in range(1, schedule.ramp_plateaus + 1):
        ends.add(schedule.pretrain_epochs + k * schedule.ramp_interval - 1)
    if schedule.fine_tune_epochs > 0:
        ends.add(schedule.total_epochs - 1)
    return ends


def _enhanced_loss(encoder, decoder, batch, lam, bit_depth, weights,
                   features, critic) -> torch.Tensor:
    fmap = encoder(batch)
    recon = decoder(quantize_ste(fmap, bit_depth))
    rate = None
    if lam > 0:
        dist = fit_distribution(quantize(fmap.detach(), bit_depth), bit_depth)
        rate = rate_loss(fmap * ((1 << bit_depth) - 1), dist)
    return total_loss(recon, batch, rate, weights.with_rate(lam), features, critic)


def _critic_step(critic, critic_opt, encoder, decoder, batch, bit_depth,
                 beta, torch_gen) -> None:
    with torch.no_grad():
        recon = decoder(quantize_ste(encoder(batch), bit_depth))
    loss = discriminator_loss(recon, batch, critic, beta=beta, generator=torch_gen)
    critic_opt.zero_grad()
    loss.backward()
    critic_opt.step()


def evaluate_checkpoint(checkpoint: Checkpoint,
                        images: Sequence[torch.Tensor]) -> RatePoint:
    """Measured (bpp, MS-SSIM) of a checkpoint averaged over ``images``,
    through the real compress/decompress pipeline."""
    if not images:
        raise ValueError("validation set is empty")
    bpps, qualities = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # small images trigger reduced-scale notes
        for image in images:
            cs = compress_image(image, checkpoint)
            recon = decompress_image(cs, checkpoint)
            bpps.append(bpp(cs))
            qualities.append(ms_ssim(recon, image))
    return RatePoint(bpp=float(np.mean(bpps)), quality=float(np.mean(qualities)),
                     model_id=checkpoint.model_id)
