"""Synthetic mask/frame builders shared across the test suite.

The geometry is exact by construction: aponeurosis bars are an odd
number of rows thick so their centreline is a known row, and fascicle
stripes are rasterized around a known straight line.
"""

import math

import numpy as np

from fasctrack.ingest import Frame
from fasctrack.segmentation import APONEUROSIS, FASCICLE, BinaryMask

WIDTH = 1400
HEIGHT = 512
SUP_Y = 100
DEEP_Y = 400
STRIPE_OFFSETS = (-120, -60, 0, 60, 120)


def apo_bar_mask(
    width=WIDTH, height=HEIGHT, sup_y=SUP_Y, deep_y=DEEP_Y, x0=0, x1=None, thickness=5
) -> BinaryMask:
    """Two horizontal bars with centrelines exactly at sup_y/deep_y."""
    x1 = width - 1 if x1 is None else x1
    half = thickness // 2
    bits = np.zeros((height, width), np.uint8)
    for yc in (sup_y, deep_y):
        bits[yc - half : yc + half + 1, x0 : x1 + 1] = 1
    return BinaryMask(bits=bits, class_kind=APONEUROSIS)


def add_stripe(
    bits: np.ndarray,
    slope: float,
    x_mid: int,
    y_mid: float,
    half_span: int,
    half_thick: int = None,
):
    """Rasterize a straight stripe centred on a known line.

    The vertical half-thickness defaults to whatever keeps consecutive
    columns 8-connected for the given slope (1 px for gentle slopes).
    """
    if half_thick is None:
        half_thick = max(1, math.ceil(abs(slope) / 2))
    h = bits.shape[0]
    for x in range(x_mid - half_span, x_mid + half_span + 1):
        y = int(round(y_mid + slope * (x - x_mid)))
        if half_thick <= y < h - half_thick:
            bits[y - half_thick : y + half_thick + 1, x] = 1


def fascicle_stripe_mask(
    pennation_deg: float,
    width=WIDTH,
    height=HEIGHT,
    offsets=STRIPE_OFFSETS,
    y_mid=(SUP_Y + DEEP_Y) / 2,
    half_span=150,
) -> BinaryMask:
    """Parallel stripes at the given pennation against a flat aponeurosis."""
    slope = -math.tan(math.radians(pennation_deg))
    bits = np.zeros((height, width), np.uint8)
    for dx in offsets:
        add_stripe(bits, slope, width // 2 + dx, y_mid, half_span)
    return BinaryMask(bits=bits, class_kind=FASCICLE)


def flat_frame(width=WIDTH, height=HEIGHT, value=110, index=0, timestamp_s=None) -> Frame:
    return Frame(
        pixels=np.full((height, width), value, np.uint8),
        index=index,
        timestamp_s=timestamp_s,
    )


def write_oracle_dir(tmp_path, apo: BinaryMask, fasc: BinaryMask, n_frames=1):
    """Write frame + oracle mask files in the default backend layout."""
    from PIL import Image

    frame_dir = tmp_path / "frames"
    mask_dir = tmp_path / "masks"
    frame_dir.mkdir(exist_ok=True)
    mask_dir.mkdir(exist_ok=True)
    frame = flat_frame(width=apo.width, height=apo.height)
    for i in range(n_frames):
        Image.fromarray(frame.pixels, mode="L").save(frame_dir / f"frame_{i:03d}.png")
        Image.fromarray(apo.bits * np.uint8(255), mode="L").save(
            mask_dir / f"{APONEUROSIS}_{i:04d}.png"
        )
        Image.fromarray(fasc.bits * np.uint8(255), mode="L").save(
            mask_dir / f"{FASCICLE}_{i:04d}.png"
        )
    return frame_dir, mask_dir
