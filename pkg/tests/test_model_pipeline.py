"""End-to-end model-backend path: frames whose intensity encodes the
structures, thresholding 1x1-conv models, and the full
resize/infer/binarize/upsample/measure chain.
"""

import math

import numpy as np
import pytest

import synth
import onnx_fixture as fx
from fasctrack.architecture import PipelineConfig, process_frame
from fasctrack.geometry import Calibration
from fasctrack.ingest import Frame
from fasctrack.segmentation import ModelBackend

CAL = Calibration.isotropic(0.1)

BACKGROUND = 20
STRIPE = 128
BAR = 255


def _threshold_model(path, cut: float, steep: float = 40.0):
    """sigmoid(steep * (x - cut)): probability > 0.5 iff intensity > cut."""
    nodes = [
        fx.node(
            "Conv",
            ["input", "w", "b"],
            ["logit"],
            {"kernel_shape": [1, 1], "pads": [0, 0, 0, 0], "strides": [1, 1]},
        ),
        fx.node("Sigmoid", ["logit"], ["prob"]),
    ]
    inits = {
        "w": np.full((1, 1, 1, 1), steep, np.float32),
        "b": np.asarray([-steep * cut], np.float32),
    }
    path.write_bytes(
        fx.model(nodes, inits, "input", (1, 1, 512, 512), "prob", (1, 1, 512, 512))
    )
    return path


def _intensity_frame(width, height, stripe_half_thick=1):
    """Bright aponeurosis bars, mid-gray 45-degree stripes."""
    px = np.full((height, width), BACKGROUND, np.uint8)
    stripes = np.zeros((height, width), np.uint8)
    for dx in (-80, -40, 0, 40, 80):
        # half_span stays fixed: at 45 degrees the vertical extent equals it,
        # and stripes must not touch the bright bars (rows 100/400)
        synth.add_stripe(
            stripes,
            -1.0,
            width // 2 + dx * width // 512,
            250,
            110,
            half_thick=stripe_half_thick,
        )
    px[stripes == 1] = STRIPE
    for yc in (synth.SUP_Y, synth.DEEP_Y):
        px[yc - 2 : yc + 3, :] = BAR
    return Frame(pixels=px)


@pytest.fixture()
def backend(tmp_path):
    apo = _threshold_model(tmp_path / "apo.onnx", cut=0.8)
    fasc = _threshold_model(tmp_path / "fasc.onnx", cut=0.3)
    return ModelBackend(apo, fasc)


class TestModelPath:
    def test_native_512_frame(self, backend):
        frame = _intensity_frame(512, 512)
        result = process_frame(frame, backend, PipelineConfig(calibration=CAL))
        assert result.error is None and result.note is None
        assert result.thickness_mm == pytest.approx(30.0, abs=0.1)
        # bright bars leak into the fascicle mask but cannot intersect both
        # aponeuroses, so only the five true stripes are measured
        assert len(result.fascicles) == 5
        assert result.aggregate_pennation_deg == pytest.approx(45.0, abs=0.5)
        expected_len = 300.0 * math.sqrt(2.0) * 0.1
        assert result.aggregate_length_mm == pytest.approx(expected_len, rel=0.01)

    def test_resized_1024_frame(self, backend):
        # full chain: 1024-wide frame resized to the model grid, masks
        # upsampled back, geometry measured in original coordinates
        frame = _intensity_frame(1024, 512, stripe_half_thick=3)
        result = process_frame(frame, backend, PipelineConfig(calibration=CAL))
        assert result.error is None and result.note is None
        assert result.thickness_mm == pytest.approx(30.0, abs=0.3)
        assert len(result.fascicles) == 5
        assert result.aggregate_pennation_deg == pytest.approx(45.0, abs=1.5)
        expected_len = 300.0 * math.sqrt(2.0) * 0.1
        assert result.aggregate_length_mm == pytest.approx(expected_len, rel=0.03)

    def test_deterministic(self, backend):
        frame = _intensity_frame(512, 512)
        cfg = PipelineConfig(calibration=CAL)
        a = process_frame(frame, backend, cfg)
        b = process_frame(frame, backend, cfg)
        assert [m.length_mm for m in a.fascicles] == [m.length_mm for m in b.fascicles]
        assert a.thickness_mm == b.thickness_mm

    def test_cli_video_with_model_backend(self, tmp_path):
        import csv

        from PIL import Image

        from fasctrack.cli import main

        apo = _threshold_model(tmp_path / "apo.onnx", cut=0.8)
        fasc = _threshold_model(tmp_path / "fasc.onnx", cut=0.3)
        frames = tmp_path / "frames"
        frames.mkdir()
        px = _intensity_frame(512, 512).pixels
        for i in range(3):
            Image.fromarray(px, mode="L").save(frames / f"f_{i:02d}.png")
        out = tmp_path / "res.csv"
        code = main(
            [
                "analyze",
                "--video",
                str(frames),
                "--apo-model",
                str(apo),
                "--fasc-model",
                str(fasc),
                "--mm-per-px",
                "0.1",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rows = list(csv.reader(out.open()))
        assert len(rows) == 1 + 3 * 5  # header + 5 fascicles per frame
        assert {r[0] for r in rows[1:]} == {"0", "1", "2"}
