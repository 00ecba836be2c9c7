"""Samples, dataset manifests, and image/mask file IO.

Dataset directory layout::

    <root>/images/*.png|*.jpg|*.jpeg
    <root>/masks/*.png

Masks are 8-bit grayscale; pixel > 127 means foreground.  Images decode to
float32 in [0,1] by division by 255 (no further normalization).  Pairing is
by file stem.  ``manifest.csv`` columns: id,image_path,mask_path,split.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
MASK_EXTENSION = ".png"
MASK_FOREGROUND_CUTOFF = 127  # pixel > 127 -> 1


@dataclass(frozen=True)
class Sample:
    """One image/mask pair; image is (3,H,W) float32 in [0,1], mask (H,W) uint8 {0,1}."""

    id: str
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DataError(f"sample {self.id}: image must be (3,H,W), got {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise DataError(
                f"sample {self.id}: mask shape {self.mask.shape} does not match "
                f"image spatial shape {self.image.shape[1:]}"
            )

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Path
    mask_path: Path


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple[ManifestEntry, ...]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.entries)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (reproducible across runs)."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


# ---------------------------------------------------------------------------
# Image / mask files
# ---------------------------------------------------------------------------

def decode_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as e:
        raise DataError(f"cannot decode image {path}: {e}") from e
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def decode_mask(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"))
    except OSError as e:
        raise DataError(f"cannot decode mask {path}: {e}") from e
    return (arr > MASK_FOREGROUND_CUTOFF).astype(np.uint8)


def encode_image(image: np.ndarray, path: Path) -> None:
    arr = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path)


def encode_mask(mask: np.ndarray, path: Path) -> None:
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path)


def encode_gray(values: np.ndarray, path: Path) -> None:
    """Write a [0,1] float map as 8-bit grayscale (pixel = round(255*v))."""
    arr = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_sample(entry: ManifestEntry) -> Sample:
    image = decode_image(entry.image_path)
    mask = decode_mask(entry.mask_path)
    return Sample(id=entry.id, image=image, mask=mask)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def load_manifest(root: Path | str, split: str = "train") -> DatasetManifest:
    """Pair ``images/`` and ``masks/`` files by stem; entries sorted by stem.

    Raises DataError naming the stem when an image has no mask, and when no
    samples are found at all.
    """
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DataError(f"no samples found: {root} must contain images/ and masks/")

    masks = {}
    for p in masks_dir.iterdir():
        if p.suffix.lower() == MASK_EXTENSION:
            masks[p.stem] = p

    entries = []
    for p in sorted(images_dir.iterdir(), key=lambda q: q.stem):
        if p.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        if p.stem not in masks:
            raise DataError(f"missing mask for image stem {p.stem!r}")
        entries.append(ManifestEntry(id=p.stem, image_path=p, mask_path=masks[p.stem]))

    if not entries:
        raise DataError(f"no samples found under {root}")
    return DatasetManifest(root=root, entries=tuple(entries), split=split)


def split_dataset(
    entries,
    fractions: tuple[float, float, float],
    seed: int,
    root: Path | str = ".",
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Deterministic shuffled partition into train/val/test manifests.

    Sizes are floor-based from ``fractions``; remainder entries go to train.
    """
    entries = list(entries)
    if not entries:
        raise DataError("cannot split an empty entry list")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {fractions}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(entries))
    shuffled = [entries[i] for i in order]

    n = len(entries)
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test

    root = Path(root)
    train = DatasetManifest(root, tuple(shuffled[:n_train]), "train")
    val = DatasetManifest(root, tuple(shuffled[n_train:n_train + n_val]), "val")
    test = DatasetManifest(root, tuple(shuffled[n_train + n_val:]), "test")
    return train, val, test


def write_manifest_csv(path: Path | str, manifests: dict[str, DatasetManifest]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "image_path", "mask_path", "split"])
        for split, manifest in manifests.items():
            for entry in manifest.entries:
                writer.writerow([entry.id, str(entry.image_path), str(entry.mask_path), split])


def read_manifest_csv(path: Path | str) -> dict[str, DatasetManifest]:
    """Load manifests back from ``manifest.csv``, one per split present."""
    path = Path(path)
    by_split: dict[str, list[ManifestEntry]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                entry = ManifestEntry(
                    id=row["id"],
                    image_path=Path(row["image_path"]),
                    mask_path=Path(row["mask_path"]),
                )
                by_split.setdefault(row["split"], []).append(entry)
    except (OSError, KeyError, TypeError) as e:
        raise DataError(f"cannot read manifest csv {path}: {e}") from e
    return {
        split: DatasetManifest(path.parent, tuple(entries), split)
        for split, entries in by_split.items()
    }
