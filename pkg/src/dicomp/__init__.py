"""Learned lossy image compression toolkit.

End-to-end pipeline: residual autoencoder, scalar quantization with
straight-through gradients, differentiable rate estimation, Lagrangian
rate-distortion training with perceptual/adversarial refinement, a real
entropy-coded bitstream, and RD evaluation (MS-SSIM, bpp, BD-rate, Pareto
model selection).
"""

from .autoencoder import (DecoderSpec, EncoderSpec, ResidualUnitSpec,
                          build_decoder, build_encoder, decode_forward,
                          encode_forward, pad_to_multiple)
from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .codec import (BitstreamHeader, CompressedImage, compress_image,
                    decompress_image, entropy_decode, entropy_encode)
from .data import PatchDataset, extract_patches
from .errors import (DecodeError, DicompError, InvalidSpecError, RangeError,
                     ShapeError, TrainingDivergedError)
from .losses import (Discriminator, FeatureExtractor, LossWeights,
                     discriminator_loss, distortion_l2, generator_loss,
                     gradient_penalty, perceptual_loss, total_loss)
from .metrics import RDCurve, bd_rate, bpp, ms_ssim
from .quantizer import dequantize, quantize, quantize_ste
from .rate import SymbolDistribution, fit_distribution, prob_continuous, rate_loss
from .rdo import (RatePoint, pareto_front, read_rate_points, select_model,
                  write_rate_points)
from .training import (TrainingSchedule, evaluate_checkpoint, lambda_at_epoch,
                       train)

__version__ = "0.1.0"
