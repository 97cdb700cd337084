"""PNG image loading and saving as CHW float tensors in [0, 1]."""

from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def load_image(path: Union[str, Path]) -> torch.Tensor:
    """Read an image file into a CHW float32 tensor scaled to [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def save_image(tensor: torch.Tensor, path: Union[str, Path]) -> None:
    """Write a CHW float tensor in [0, 1] as an 8-bit PNG (or other format)."""
    arr = tensor.detach().clamp(0.0, 1.0).mul(255.0).add(0.5).floor()
    arr = arr.to(torch.uint8).permute(1, 2, 0).cpu().numpy()
    Image.fromarray(arr).save(path)


def load_images_from_dir(directory: Union[str, Path]) -> list[torch.Tensor]:
    """Load every supported image in a directory, sorted by filename."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    return [load_image(p) for p in paths]


def list_image_paths(directory: Union[str, Path]) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)
