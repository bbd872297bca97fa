"""Per-frame segmentation sources: model inference or precomputed masks.

Two backends produce the pixelwise aponeurosis/fascicle masks a frame
needs: ``ModelBackend`` runs two exported segmentation models (one per
class), ``MaskFileBackend`` reads mask rasters from disk and lets the
rest of the pipeline run, and be tested, without any model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, InferenceError, IoError
from .onnx_rt import OnnxModel

MODEL_SIZE = 512

APONEUROSIS = "aponeurosis"
FASCICLE = "fascicle"
CLASS_KINDS = (APONEUROSIS, FASCICLE)


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """512x512 grid of per-pixel class probabilities."""

    values: np.ndarray
    class_kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != (MODEL_SIZE, MODEL_SIZE):
            raise ValueError(f"probability map must be {MODEL_SIZE}x{MODEL_SIZE}")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.class_kind not in CLASS_KINDS:
            raise ValueError(f"unknown class kind {self.class_kind!r}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A {0,1} pixel grid for one class."""

    bits: np.ndarray
    class_kind: str

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError("mask must be 2D")
        if not np.isin(b, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        if self.class_kind not in CLASS_KINDS:
            raise ValueError(f"unknown class kind {self.class_kind!r}")
        object.__setattr__(self, "bits", b.astype(np.uint8, copy=False))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


def binarize(pmap: ProbabilityMap, threshold: float = 0.5) -> BinaryMask:
    """Threshold a probability map; a pixel is set iff p > threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly inside (0, 1)")
    return BinaryMask(
        bits=(pmap.values > threshold).astype(np.uint8), class_kind=pmap.class_kind
    )


def load_mask_file(path, class_kind: str) -> BinaryMask:
    """Read a mask raster; any pixel above 127 counts as the class."""
    path = Path(path)
    if not path.is_file():
        raise IoError(f"no such mask file: {path}")
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"))
    except UnidentifiedImageError as exc:
        raise FormatError(f"cannot decode mask {path}: {exc}") from exc
    except OSError as exc:
        raise FormatError(f"cannot decode mask {path}: {exc}") from exc
    return BinaryMask(bits=(gray > 127).astype(np.uint8), class_kind=class_kind)


def write_mask_file(mask: BinaryMask, path) -> None:
    """Write a BinaryMask as a 0/255 single-channel PNG (oracle format)."""
    Image.fromarray(mask.bits * np.uint8(255), mode="L").save(path)


class ModelBackend:
    """Runs two exported models, one per class, on 512x512 inputs.

    Models are loaded once at construction (ModelLoadError on failure)
    and never mutated, so concurrent inference calls are safe.
    """

    kind = "model-inference"

    def __init__(self, aponeurosis_model_path, fascicle_model_path):
        self.models = {
            APONEUROSIS: OnnxModel(aponeurosis_model_path),
            FASCICLE: OnnxModel(fascicle_model_path),
        }

    def infer(self, model_input: np.ndarray) -> tuple[ProbabilityMap, ProbabilityMap]:
        """Run both models on one normalized [0,1] 512x512 grid."""
        x = np.asarray(model_input, dtype=np.float32)
        if x.shape != (MODEL_SIZE, MODEL_SIZE):
            raise InferenceError(
                f"model input must be {MODEL_SIZE}x{MODEL_SIZE}, got {x.shape}"
            )
        batch = x[np.newaxis, np.newaxis]
        maps = []
        for kind in CLASS_KINDS:
            out = self.models[kind].run(batch)
            if out.shape != (1, 1, MODEL_SIZE, MODEL_SIZE):
                raise InferenceError(
                    f"{kind} model produced shape {out.shape}, "
                    f"expected (1, 1, {MODEL_SIZE}, {MODEL_SIZE})"
                )
            maps.append(ProbabilityMap(values=np.clip(out[0, 0], 0.0, 1.0), class_kind=kind))
        return maps[0], maps[1]


class MaskFileBackend:
    """Reads per-frame, per-class mask rasters (the oracle backend).

    The path template may contain ``{class}`` and ``{index}`` placeholders
    (``{index}`` accepts format specs, e.g. ``{index:04d}``). A bare
    directory is shorthand for ``<dir>/{class}_{index:04d}.png``.
    """

    kind = "mask-files"

    def __init__(self, template: str):
        template = str(template)
        if "{" not in template and Path(template).is_dir():
            template = str(Path(template) / "{class}_{index:04d}.png")
        self.template = template

    def resolve(self, frame_index: int, class_kind: str) -> Path:
        return Path(
            self.template.replace("{class}", class_kind).format(index=frame_index)
        )

    def load(self, frame_index: int, class_kind: str) -> BinaryMask:
        path = self.resolve(frame_index, class_kind)
        if not path.is_file():
            # Tolerate a different zero-padding than the default template.
            bare = Path(
                self.template.replace("{class}", class_kind)
                .replace("{index:04d}", "{index}")
                .format(index=frame_index)
            )
            if bare.is_file():
                path = bare
        return load_mask_file(path, class_kind)


SegmentationBackend = Union[ModelBackend, MaskFileBackend]


def infer(backend: ModelBackend, model_input: np.ndarray):
    """Functional form of ModelBackend.infer."""
    if getattr(backend, "kind", None) != "model-inference":
        raise InferenceError("infer() requires a model-inference backend")
    return backend.infer(model_input)
