import numpy as np
import pytest
import torch

from dicomp.data import PatchDataset, extract_patches
from imagegen import smooth_images


@pytest.fixture
def big_image():
    rng = np.random.default_rng(0)
    return torch.from_numpy(rng.random((3, 256, 256)).astype(np.float32))


class TestExtractPatches:
    def test_exact_count_and_bounds(self, big_image):
        ds = extract_patches([big_image], count=10, seed=0, patch_size=128)
        assert len(ds) == 10
        patches = [ds[i] for i in range(10)]
        for p in patches:
            assert p.shape == (3, 128, 128)
            assert 0.0 <= float(p.min()) and float(p.max()) <= 1.0

    def test_patches_distinct(self, big_image):
        ds = extract_patches([big_image], count=10, seed=0, patch_size=128)
        patches = [ds[i] for i in range(10)]
        for i in range(10):
            for j in range(i + 1, 10):
                assert not torch.equal(patches[i], patches[j])

    def test_deterministic_given_seed(self, big_image):
        a = extract_patches([big_image], count=5, seed=3, patch_size=64)
        b = extract_patches([big_image], count=5, seed=3, patch_size=64)
        for i in range(5):
            assert torch.equal(a[i], b[i])
        c = extract_patches([big_image], count=5, seed=4, patch_size=64)
        assert any(not torch.equal(a[i], c[i]) for i in range(5))

    def test_order_independent_access(self, big_image):
        ds = extract_patches([big_image], count=6, seed=1, patch_size=64)
        forward = [ds[i] for i in range(6)]
        backward = [ds[i] for i in reversed(range(6))]
        for i in range(6):
            assert torch.equal(forward[i], backward[5 - i])

    def test_rotation_preserves_square_shape(self, big_image):
        ds = extract_patches([big_image], count=20, seed=2, patch_size=128)
        assert all(ds[i].shape == (3, 128, 128) for i in range(20))

    def test_small_image_skipped_with_warning(self, big_image):
        small = torch.rand(3, 64, 64)
        with pytest.warns(UserWarning, match="skipped"):
            ds = extract_patches([small, big_image], count=4, seed=0, patch_size=128)
        assert len(ds.images) == 1

    def test_all_images_too_small_rejected(self):
        with pytest.warns(UserWarning, match="skipped"):
            with pytest.raises(ValueError, match="at least"):
                extract_patches([torch.rand(3, 64, 64)], count=4, seed=0,
                                patch_size=128)

    def test_bad_count_rejected(self, big_image):
        with pytest.raises(ValueError):
            extract_patches([big_image], count=0, seed=0)

    def test_non_chw_rejected(self):
        with pytest.raises(ValueError, match="CHW"):
            extract_patches([torch.rand(128, 128, 3)], count=1, seed=0)


class TestPatchDataset:
    def test_index_bounds(self, big_image):
        ds = PatchDataset(images=[big_image], count=3, seed=0, patch_size=64)
        with pytest.raises(IndexError):
            ds[3]
        with pytest.raises(IndexError):
            ds[-1]

    def test_unaugmented_patches_are_exact_crops(self):
        # pixel values encode their own coordinates, so the first element of
        # a crop pins down where it came from
        coords = torch.arange(256 * 256, dtype=torch.float32).reshape(1, 256, 256)
        source = (coords / (256 * 256)).expand(3, 256, 256).contiguous()
        ds = PatchDataset(images=[source], count=8, seed=5, patch_size=64,
                          augment=False)
        for i in range(8):
            patch = ds[i]
            flat = round(float(patch[0, 0, 0]) * 256 * 256)
            top, left = divmod(flat, 256)
            assert torch.equal(patch, source[:, top:top + 64, left:left + 64])

    def test_stack_shape(self, big_image):
        ds = PatchDataset(images=[big_image], count=6, seed=0, patch_size=32)
        batch = ds.stack(range(4))
        assert batch.shape == (4, 3, 32, 32)

    def test_scaled_sources_still_fit(self):
        images = smooth_images(2, 140, seed=0)
        ds = extract_patches(images, count=12, seed=0, patch_size=128)
        assert all(ds[i].shape == (3, 128, 128) for i in range(12))
