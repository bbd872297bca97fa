"""Image and frame-sequence loading, model-size resampling, and the
mapping of 512x512 masks back to original pixel space.

All downstream geometry runs in original image coordinates; masks
predicted at the model size are upsampled back before measurement.
"""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, InconsistentDimensions, IoError

MODEL_SIZE = 512

RASTER_EXTENSIONS = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}

_TRAILING_DIGITS = re.compile(r"(\d+)(?!.*\d)")


@dataclass(frozen=True, eq=False)
class Frame:
    """One grayscale ultrasound frame in original resolution."""

    pixels: np.ndarray  # uint8, shape (height, width)
    index: int = 0
    timestamp_s: Optional[float] = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.dtype != np.uint8:
            raise ValueError("frame pixels must be a 2D uint8 array")
        if px.shape[0] < 64 or px.shape[1] < 64:
            raise ValueError("frames must be at least 64x64 pixels")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: list[Frame] = field(default_factory=list)
    fps: Optional[float] = None

    def __post_init__(self):
        if not self.frames:
            raise ValueError("sequence must contain at least one frame")
        w, h = self.frames[0].width, self.frames[0].height
        for i, f in enumerate(self.frames):
            if f.index != i:
                raise ValueError("frame indices must run 0..n-1")
            if f.width != w or f.height != h:
                raise InconsistentDimensions(
                    f"frame {i} is {f.width}x{f.height}, expected {w}x{h}"
                )

    def __len__(self) -> int:
        return len(self.frames)


def _decode_grayscale(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"))
    except UnidentifiedImageError as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        # Pillow raises OSError both for unreadable files and truncated data;
        # a readable-but-broken file is a format problem.
        if path.is_file():
            raise FormatError(f"cannot decode {path}: {exc}") from exc
        raise IoError(f"cannot read {path}: {exc}") from exc


def load_image(path) -> Frame:
    """Load a single raster image as a grayscale Frame (index 0).

    Color inputs are converted by luminance; dimensions are preserved.
    """
    path = Path(path)
    if not path.is_file():
        raise IoError(f"no such file: {path}")
    return Frame(pixels=_decode_grayscale(path), index=0)


def _ordinal_key(path: Path):
    m = _TRAILING_DIGITS.search(path.stem)
    if m is None:
        return None
    return (int(m.group(1)), path.name)


def _frames_from_directory(directory: Path, fps: Optional[float]) -> FrameSequence:
    candidates = [
        p
        for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in RASTER_EXTENSIONS
    ]
    keyed = [(k, p) for p in candidates if (k := _ordinal_key(p)) is not None]
    if not keyed:
        raise IoError(f"no numbered raster frames found in {directory}")
    keyed.sort(key=lambda kp: kp[0])
    frames = []
    for i, (_, p) in enumerate(keyed):
        ts = i / fps if fps else None
        frames.append(Frame(pixels=_decode_grayscale(p), index=i, timestamp_s=ts))
    return FrameSequence(frames=frames, fps=fps)


def load_frame_sequence(
    source,
    fps_hint: Optional[float] = None,
    decoder_cmd: Optional[str] = None,
) -> FrameSequence:
    """Load an ordered frame sequence.

    ``source`` is either a directory of numbered raster files (the longest
    trailing digit run in each stem is the ordinal) or, when ``decoder_cmd``
    is configured, a video file handed to that external command. The command
    template must contain ``{input}`` and ``{outdir}`` placeholders and is
    expected to populate ``{outdir}`` with numbered frames.
    """
    source = Path(source)
    if source.is_dir():
        return _frames_from_directory(source, fps_hint)
    if not source.exists():
        raise IoError(f"no such file or directory: {source}")
    if decoder_cmd is None:
        raise IoError(
            f"{source} is not a frame directory and no external decoder command is configured"
        )
    with tempfile.TemporaryDirectory(prefix="fasctrack_frames_") as outdir:
        cmd = [
            part.replace("{input}", str(source)).replace("{outdir}", outdir)
            for part in shlex.split(decoder_cmd)
        ]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True)
        except OSError as exc:
            raise IoError(f"decoder command failed to start: {exc}") from exc
        if proc.returncode != 0:
            raise IoError(
                f"decoder command exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        return _frames_from_directory(Path(outdir), fps_hint)


def resize_for_model(frame: Frame) -> tuple[np.ndarray, float, float]:
    """Bilinear-resample a frame to the model input size.

    Returns (grid, sx, sy) where grid is uint8 512x512 and sx/sy map model
    coordinates back to original pixels (sx = width/512, sy = height/512).
    """
    sx = frame.width / MODEL_SIZE
    sy = frame.height / MODEL_SIZE
    if frame.width == MODEL_SIZE and frame.height == MODEL_SIZE:
        return frame.pixels.copy(), sx, sy
    img = Image.fromarray(frame.pixels, mode="L")
    resized = img.resize((MODEL_SIZE, MODEL_SIZE), Image.Resampling.BILINEAR)
    return np.asarray(resized), sx, sy


def upsample_nearest(bits: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour upsampling of a bit grid to (height, width)."""
    src_h, src_w = bits.shape
    if (src_h, src_w) == (height, width):
        return bits.copy()
    rows = np.minimum((np.arange(height) * src_h) // height, src_h - 1)
    cols = np.minimum((np.arange(width) * src_w) // width, src_w - 1)
    return bits[np.ix_(rows, cols)]


def upsample_mask_to_frame(mask, frame: Frame):
    """Map a model-size BinaryMask back onto the frame's original pixels."""
    from .segmentation import BinaryMask

    return BinaryMask(
        bits=upsample_nearest(mask.bits, frame.width, frame.height),
        class_kind=mask.class_kind,
    )
