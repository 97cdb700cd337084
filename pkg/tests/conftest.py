import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent))

from dicomp.autoencoder import DecoderSpec, EncoderSpec, build_decoder, build_encoder


@pytest.fixture(scope="session", autouse=True)
def _single_thread():
    # keeps small-tensor tests deterministic and avoids thread thrash
    torch.set_num_threads(min(4, torch.get_num_threads()))


@pytest.fixture
def tiny_spec() -> EncoderSpec:
    """Two residual units over two stages; small enough for gradient checks."""
    return EncoderSpec(bottleneck_channels=4, downsample_stages=2,
                       residual_unit_count=2, interior_channels=8,
                       strict_depth=False)


@pytest.fixture
def tiny_codec(tiny_spec):
    enc = build_encoder(tiny_spec, seed=0)
    dec = build_decoder(DecoderSpec.mirror(tiny_spec), seed=1)
    return enc, dec
