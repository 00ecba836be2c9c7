"""Geometric transforms and batching.

Every transform applies the identical geometry to image and mask: images are
resampled bilinearly, masks nearest-neighbor so they stay exactly binary.
Rotation/zoom/shift voids are filled by reflect padding.  All randomness is
keyed by explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from .config import AugmentSpec
from .data import Sample
from .errors import DataError


@dataclass(frozen=True)
class Batch:
    """Stacked samples: images (N,3,H,W) float32, masks (N,H,W) uint8."""

    images: np.ndarray
    masks: np.ndarray
    ids: tuple[str, ...]

    def __len__(self) -> int:
        return self.images.shape[0]


def resize_pair(sample: Sample, target: tuple[int, int]) -> Sample:
    """Resize image (bilinear) and mask (nearest) to ``target`` = (H, W)."""
    th, tw = target
    if th < 8 or tw < 8:
        raise DataError(f"degenerate resize target {target}")
    image = torch.from_numpy(sample.image).unsqueeze(0)
    image = F.interpolate(image, size=(th, tw), mode="bilinear", align_corners=False)
    mask = torch.from_numpy(sample.mask.astype(np.float32))[None, None]
    mask = F.interpolate(mask, size=(th, tw), mode="nearest")
    return Sample(
        id=sample.id,
        image=image.squeeze(0).numpy(),
        mask=mask.squeeze().numpy().astype(np.uint8),
    )


def _rotation_matrix(angle_deg: float) -> np.ndarray:
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


def transform_point(
    point: tuple[float, float],
    shape: tuple[int, int],
    angle_deg: float = 0.0,
    zoom: float = 1.0,
    shift: tuple[float, float] = (0.0, 0.0),
) -> tuple[float, float]:
    """Forward-map a (row, col) point under the same geometry as apply_affine."""
    h, w = shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    rot = _rotation_matrix(angle_deg)
    out = zoom * rot @ (np.asarray(point, dtype=np.float64) - center) + center + np.asarray(shift)
    return float(out[0]), float(out[1])


def apply_affine(
    sample: Sample,
    angle_deg: float = 0.0,
    zoom: float = 1.0,
    shift: tuple[float, float] = (0.0, 0.0),
) -> Sample:
    """Rotate/zoom/shift about the image center in one resampling pass.

    ``shift`` is in pixels (row, col).  Output pixel o samples input at
    R(-angle)/zoom @ (o - center - shift) + center.
    """
    if angle_deg == 0.0 and zoom == 1.0 and shift == (0.0, 0.0):
        return sample
    if zoom <= 0:
        raise DataError(f"zoom must be positive, got {zoom}")
    h, w = sample.size
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    matrix = _rotation_matrix(-angle_deg) / zoom
    offset = center - matrix @ (center + np.asarray(shift, dtype=np.float64))

    channels = [
        ndimage.affine_transform(
            ch, matrix, offset=offset, order=1, mode="reflect", output=np.float32
        )
        for ch in sample.image
    ]
    mask = ndimage.affine_transform(
        sample.mask, matrix, offset=offset, order=0, mode="reflect"
    )
    return Sample(id=sample.id, image=np.stack(channels), mask=mask.astype(np.uint8))


def flip_sample(sample: Sample, horizontal: bool = False, vertical: bool = False) -> Sample:
    image, mask = sample.image, sample.mask
    if horizontal:
        image = image[:, :, ::-1]
        mask = mask[:, ::-1]
    if vertical:
        image = image[:, ::-1, :]
        mask = mask[::-1, :]
    return Sample(id=sample.id, image=np.ascontiguousarray(image), mask=np.ascontiguousarray(mask))


def augment(sample: Sample, spec: AugmentSpec, seed: int) -> Sample:
    """Random flips, rotation, zoom, and shift, deterministic under ``seed``."""
    rng = np.random.default_rng(seed)
    hflip = rng.random() < spec.hflip_prob
    vflip = rng.random() < spec.vflip_prob
    angle = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg)
    zoom = rng.uniform(spec.zoom_range[0], spec.zoom_range[1])
    h, w = sample.size
    shift = (
        rng.uniform(-spec.shift_max_frac, spec.shift_max_frac) * h,
        rng.uniform(-spec.shift_max_frac, spec.shift_max_frac) * w,
    )
    out = flip_sample(sample, horizontal=hflip, vertical=vflip)
    return apply_affine(out, angle_deg=angle, zoom=zoom, shift=shift)


def crop_offsets(size: tuple[int, int], crop: tuple[int, int], seed: int) -> tuple[int, int]:
    h, w = size
    ch, cw = crop
    rng = np.random.default_rng(seed)
    return int(rng.integers(0, h - ch + 1)), int(rng.integers(0, w - cw + 1))


def random_crop(sample: Sample, crop: tuple[int, int], seed: int) -> Sample:
    """Cut the same random window from image and mask."""
    h, w = sample.size
    ch, cw = crop
    if ch > h or cw > w:
        raise DataError(f"crop {crop} larger than sample size {(h, w)}")
    top, left = crop_offsets((h, w), crop, seed)
    return Sample(
        id=sample.id,
        image=np.ascontiguousarray(sample.image[:, top:top + ch, left:left + cw]),
        mask=np.ascontiguousarray(sample.mask[top:top + ch, left:left + cw]),
    )


def make_batch(samples: list[Sample]) -> Batch:
    """Order-preserving stack; all samples must share one spatial size."""
    if not samples:
        raise DataError("cannot batch an empty sample list")
    size = samples[0].size
    for s in samples:
        if s.size != size:
            raise DataError(f"heterogeneous sizes in batch: {s.size} vs {size}")
    return Batch(
        images=np.stack([s.image for s in samples]).astype(np.float32),
        masks=np.stack([s.mask for s in samples]).astype(np.uint8),
        ids=tuple(s.id for s in samples),
    )
