"""Training samples and dataset loading.

Dataset layout on disk: paired directories ``images/`` and
``masks_<class>/`` with matching filenames; masks are 0/255
single-channel rasters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .unet import INPUT_SIZE

RASTER_EXTENSIONS = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}


class DatasetTooSmall(Exception):
    """Fewer samples than the training split requires."""


@dataclass(frozen=True, eq=False)
class TrainSample:
    """One image/label pair at the model input size.

    ``image`` is float32 in [0, 1] (pixel/255), ``label`` is strictly
    binary uint8; both are INPUT_SIZE x INPUT_SIZE.
    """

    image: np.ndarray
    label: np.ndarray
    class_kind: str

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float32)
        lab = np.asarray(self.label)
        if img.shape != (INPUT_SIZE, INPUT_SIZE) or lab.shape != img.shape:
            raise ValueError(f"image and label must both be {INPUT_SIZE}x{INPUT_SIZE}")
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError("image must be normalized to [0, 1]")
        if not np.isin(lab, (0, 1)).all():
            raise ValueError("label must be strictly binary")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "label", lab.astype(np.uint8, copy=False))


def _load_gray(path: Path, resample) -> np.ndarray:
    with Image.open(path) as img:
        gray = img.convert("L")
        if gray.size != (INPUT_SIZE, INPUT_SIZE):
            gray = gray.resize((INPUT_SIZE, INPUT_SIZE), resample)
        return np.asarray(gray)


def load_dataset(root, class_kind: str) -> list[TrainSample]:
    """Load every image with a matching mask under the standard layout."""
    root = Path(root)
    image_dir = root / "images"
    mask_dir = root / f"masks_{class_kind}"
    if not image_dir.is_dir():
        raise FileNotFoundError(f"missing image directory {image_dir}")
    if not mask_dir.is_dir():
        raise FileNotFoundError(f"missing mask directory {mask_dir}")
    samples = []
    for image_path in sorted(image_dir.iterdir()):
        if image_path.suffix.lower() not in RASTER_EXTENSIONS:
            continue
        mask_path = mask_dir / image_path.name
        if not mask_path.is_file():
            continue
        image = _load_gray(image_path, Image.Resampling.BILINEAR).astype(np.float32) / 255.0
        mask = _load_gray(mask_path, Image.Resampling.NEAREST)
        samples.append(
            TrainSample(image=image, label=(mask > 127).astype(np.uint8), class_kind=class_kind)
        )
    return samples
