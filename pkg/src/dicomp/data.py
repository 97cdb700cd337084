"""Training patch extraction with rotation and scaling augmentation.

Patches are generated lazily and deterministically: patch ``i`` of a dataset
depends only on (seed, i), so runs are reproducible and order-independent
without materializing the whole patch set.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


@dataclass
class PatchDataset:
    images: list[torch.Tensor]
    count: int
    seed: int
    patch_size: int = 128
    augment: bool = True
    min_scale: float = 0.5

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> torch.Tensor:
        if not 0 <= index < self.count:
            raise IndexError(index)
        rng = np.random.default_rng([self.seed, index])
        img = self.images[int(rng.integers(len(self.images)))]
        p = self.patch_size
        if self.augment:
            img = self._random_downscale(img, rng)
        h, w = img.shape[-2:]
        top = int(rng.integers(h - p + 1))
        left = int(rng.integers(w - p + 1))
        patch = img[:, top:top + p, left:left + p]
        if self.augment:
            patch = torch.rot90(patch, int(rng.integers(4)), dims=(1, 2))
        return patch.contiguous()

    def _random_downscale(self, img: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
        h, w = img.shape[-2:]
        lo = max(self.min_scale, self.patch_size / min(h, w))
        if lo >= 1.0:
            return img
        s = float(rng.uniform(lo, 1.0))
        nh = max(self.patch_size, int(round(h * s)))
        nw = max(self.patch_size, int(round(w * s)))
        if (nh, nw) == (h, w):
            return img
        return F.interpolate(img.unsqueeze(0), size=(nh, nw), mode="area").squeeze(0)

    def stack(self, indices) -> torch.Tensor:
        return torch.stack([self[int(i)] for i in indices])


def extract_patches(images: list[torch.Tensor], count: int, seed: int,
                    patch_size: int = 128, augment: bool = True) -> PatchDataset:
    """Build a deterministic patch dataset from CHW source images in [0, 1].

    Images smaller than the patch size are skipped with a warning; it is an
    error if none remain.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    usable = []
    for i, img in enumerate(images):
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError(f"image {i} is not CHW with 3 channels: {tuple(img.shape)}")
        if min(img.shape[-2:]) < patch_size:
            warnings.warn(f"image {i} ({img.shape[-2]}x{img.shape[-1]}) smaller than "
                          f"{patch_size}px patches; skipped", stacklevel=2)
            continue
        usable.append(img)
    if not usable:
        raise ValueError(f"no source image is at least {patch_size}x{patch_size}")
    return PatchDataset(images=usable, count=count, seed=seed,
                        patch_size=patch_size, augment=augment)
