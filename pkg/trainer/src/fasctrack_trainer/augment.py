"""Elastic deformation augmentation.

A smooth random displacement field (uniform noise blurred by a Gaussian,
scaled by an intensity factor) warps image and label identically; the
label is re-binarized after interpolation. Seeded generation makes
augmented datasets reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .data import TrainSample


@dataclass(frozen=True)
class ElasticParams:
    alpha: float = 300.0  # displacement intensity (px, before smoothing loss)
    sigma: float = 20.0  # Gaussian smoothing of the raw field


def displacement_field(shape, params: ElasticParams, rng: np.random.Generator):
    """Smooth per-pixel (dy, dx) displacements."""
    dy = gaussian_filter(rng.uniform(-1, 1, shape), params.sigma, mode="reflect") * params.alpha
    dx = gaussian_filter(rng.uniform(-1, 1, shape), params.sigma, mode="reflect") * params.alpha
    return dy, dx


def warp(values: np.ndarray, dy: np.ndarray, dx: np.ndarray, order: int = 1) -> np.ndarray:
    ys, xs = np.meshgrid(
        np.arange(values.shape[0], dtype=np.float64),
        np.arange(values.shape[1], dtype=np.float64),
        indexing="ij",
    )
    coords = np.stack([ys + dy, xs + dx])
    return map_coordinates(values.astype(np.float64), coords, order=order, mode="reflect")


def augment_elastic(
    sample: TrainSample, params: ElasticParams = ElasticParams(), seed: int = 0
) -> TrainSample:
    """Apply one seeded elastic deformation to image and label together."""
    rng = np.random.default_rng(seed)
    dy, dx = displacement_field(sample.image.shape, params, rng)
    image = np.clip(warp(sample.image, dy, dx), 0.0, 1.0).astype(np.float32)
    label = (warp(sample.label, dy, dx) > 0.5).astype(np.uint8)
    return TrainSample(image=image, label=label, class_kind=sample.class_kind)
