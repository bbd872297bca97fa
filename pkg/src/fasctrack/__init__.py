"""Batch analysis of muscle architecture from B-mode ultrasound frames.

Turns grayscale frames plus a segmentation source (exported models or
precomputed masks) into fascicle length, pennation angle, and muscle
thickness measurements, with agreement statistics for method comparison.
"""

__version__ = "0.1.0"

from .architecture import (  # noqa: F401
    FrameResult,
    PipelineConfig,
    process_frame,
    process_sequence,
)
from .geometry import Calibration, Point2  # noqa: F401
from .ingest import Frame, FrameSequence, load_frame_sequence, load_image  # noqa: F401
from .segmentation import BinaryMask, MaskFileBackend, ModelBackend  # noqa: F401
