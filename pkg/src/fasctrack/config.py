"""Run configuration: defaults, flat key=value config files, and flag
merging (flags win over file values, file values win over defaults).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .architecture import PipelineConfig
from .errors import ConfigError
from .geometry import Calibration

ENV_CONFIG = "FASCTRACK_CONFIG"

# keys accepted in config files; mirror the CLI flag names
_STR_KEYS = {
    "mode",
    "image",
    "video",
    "apo_model",
    "fasc_model",
    "masks_from",
    "aggregate",
    "overlays",
    "out",
    "decoder_cmd",
}
_FLOAT_KEYS = {
    "mm_per_px",
    "mm_per_px_x",
    "mm_per_px_y",
    "apo_min_length",
    "fasc_min_length",
    "threshold",
    "slope_bound",
    "thickness_band_fraction",
    "fps",
}
_INT_KEYS = {"gap_fill", "workers"}
KNOWN_KEYS = _STR_KEYS | _FLOAT_KEYS | _INT_KEYS


@dataclass
class RunConfig:
    mode: str = "image"  # "image" | "video"
    image: Optional[str] = None
    video: Optional[str] = None
    apo_model: Optional[str] = None
    fasc_model: Optional[str] = None
    masks_from: Optional[str] = None
    mm_per_px_x: Optional[float] = None
    mm_per_px_y: Optional[float] = None
    apo_min_length: float = 200.0
    fasc_min_length: float = 40.0
    threshold: float = 0.5
    slope_bound: float = 3.5
    thickness_band_fraction: float = 0.10
    aggregate: Optional[str] = None  # defaulted by mode when unset
    gap_fill: int = 0
    overlays: Optional[str] = None
    out: str = "results.csv"
    workers: int = 0  # 0 -> available cores
    fps: Optional[float] = None
    decoder_cmd: Optional[str] = None

    @property
    def aggregation(self) -> str:
        if self.aggregate:
            return self.aggregate
        return "median" if self.mode == "image" else "mean"

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def calibration(self) -> Calibration:
        return Calibration(self.mm_per_px_x, self.mm_per_px_y)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            calibration=self.calibration(),
            apo_min_length_px=self.apo_min_length,
            fascicle_min_length_px=self.fasc_min_length,
            binarize_threshold=self.threshold,
            slope_bound=self.slope_bound,
            thickness_band_fraction=self.thickness_band_fraction,
            aggregation=self.aggregation,
            gap_fill_max_gap=self.gap_fill,
            workers=self.effective_workers,
        )


def parse_config_file(path) -> dict:
    """Parse a flat key=value config file; '#' starts a comment line."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def _apply(cfg: RunConfig, values: dict) -> None:
    mm = values.pop("mm_per_px", None)
    if mm is not None:
        cfg.mm_per_px_x = mm
        cfg.mm_per_px_y = mm
    names = {f.name for f in fields(RunConfig)}
    for key, value in values.items():
        if value is None:
            continue
        if key not in names:
            raise ConfigError(f"unknown configuration key {key!r}")
        setattr(cfg, key, value)


def load_config(flags: dict, config_path: Optional[str] = None) -> RunConfig:
    """Build a validated RunConfig from defaults, a config file, and flags.

    The config file comes from ``config_path`` or $FASCTRACK_CONFIG; flag
    values override file values.
    """
    cfg = RunConfig()
    path = config_path or os.environ.get(ENV_CONFIG)
    if path:
        _apply(cfg, parse_config_file(path))
    _apply(cfg, dict(flags))

    if cfg.image and cfg.video:
        raise ConfigError("give either --image or --video, not both")
    cfg.mode = "video" if cfg.video else "image"
    if not cfg.image and not cfg.video:
        raise ConfigError("one of --image or --video is required")
    has_models = cfg.apo_model or cfg.fasc_model
    if has_models and cfg.masks_from:
        raise ConfigError("--masks-from cannot be combined with model flags")
    if not cfg.masks_from:
        if not (cfg.apo_model and cfg.fasc_model):
            raise ConfigError(
                "a segmentation backend is required: either --masks-from, "
                "or both --apo-model and --fasc-model"
            )
    if cfg.mm_per_px_x is None or cfg.mm_per_px_y is None:
        raise ConfigError("calibration is required: --mm-per-px (or --mm-per-px-x and --mm-per-px-y)")
    for key in ("mm_per_px_x", "mm_per_px_y", "apo_min_length", "fasc_min_length", "slope_bound"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{key} must be positive")
    if not 0.0 < cfg.threshold < 1.0:
        raise ConfigError("threshold must lie strictly inside (0, 1)")
    if not 0.0 < cfg.thickness_band_fraction <= 1.0:
        raise ConfigError("thickness_band_fraction must lie in (0, 1]")
    if cfg.aggregate and cfg.aggregate not in ("median", "mean"):
        raise ConfigError("aggregate must be 'median' or 'mean'")
    if cfg.gap_fill < 0:
        raise ConfigError("gap_fill must be >= 0")
    if cfg.workers < 0:
        raise ConfigError("workers must be >= 0")
    if cfg.fps is not None and cfg.fps <= 0:
        raise ConfigError("fps must be positive")
    return cfg
