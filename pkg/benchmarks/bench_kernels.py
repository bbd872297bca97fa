"""Benchmark the compiled labeling kernels against the numpy/scipy
fallback on representative masks, plus the full mask-to-measurement
stage under each backend.

Usage: python benchmarks/bench_kernels.py [--reps N]
"""

import argparse
import statistics
import time

import numpy as np

from fasctrack import _ccl_py
from fasctrack.architecture import (
    detect_aponeuroses,
    detect_fascicle_fragments,
    measure_fascicle,
    measure_thickness,
)
from fasctrack.geometry import Calibration
from fasctrack.segmentation import APONEUROSIS, FASCICLE, BinaryMask

try:
    from fasctrack import _ccl
except ImportError:
    _ccl = None


def make_masks(seed=0, size=512):
    """One aponeurosis mask, one striped fascicle mask, one speckle mask."""
    rng = np.random.default_rng(seed)
    apo = np.zeros((size, size), np.uint8)
    apo[98:103, :] = 1
    apo[398:403, :] = 1

    fasc = np.zeros((size, size), np.uint8)
    for dx in range(-160, 161, 40):
        xc = size // 2 + dx
        for x in range(max(1, xc - 110), min(size - 1, xc + 110)):
            y = int(round(250 - 1.0 * (x - xc)))
            if 1 <= y < size - 1:
                fasc[y - 1 : y + 2, x] = 1

    speckle = (rng.random((size, size)) < 0.25).astype(np.uint8)
    return apo, fasc, speckle


def time_op(fn, reps):
    samples = []
    fn()  # warm-up
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples) * 1000.0  # ms


def bench_labeling(reps):
    apo, fasc, speckle = make_masks()
    cases = [("aponeurosis bars", apo), ("fascicle stripes", fasc), ("25% speckle", speckle)]
    backends = [("python", _ccl_py)] + ([("cython", _ccl)] if _ccl else [])

    print(f"{'mask':<20}", end="")
    for name, _ in backends:
        print(f"{name + ' label+group (ms)':>26}", end="")
    if _ccl:
        print(f"{'speedup':>10}", end="")
    print()

    for case_name, mask in cases:
        times = {}
        for name, impl in backends:
            def run(impl=impl, mask=mask):
                labels, n = impl.label_components(mask)
                if n:
                    impl.group_pixels(labels, n)

            times[name] = time_op(run, reps)
        print(f"{case_name:<20}", end="")
        for name, _ in backends:
            print(f"{times[name]:>26.3f}", end="")
        if _ccl:
            print(f"{times['python'] / times['cython']:>9.2f}x", end="")
        print()


def bench_pipeline(reps):
    apo_bits, fasc_bits, _ = make_masks()
    apo = BinaryMask(bits=apo_bits, class_kind=APONEUROSIS)
    fasc = BinaryMask(bits=fasc_bits, class_kind=FASCICLE)
    cal = Calibration.isotropic(0.1)

    def stage():
        sup, deep = detect_aponeuroses(apo, 200, 512)
        frags = detect_fascicle_fragments(fasc, 40)
        for i, frag in enumerate(frags):
            measure_fascicle(frag, sup, deep, cal, i)
        measure_thickness(sup, deep, cal, 512)

    ms = time_op(stage, reps)
    print(f"\nmask -> measurements stage (active backend): {ms:.2f} ms per 512x512 frame")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=30)
    args = parser.parse_args()
    if _ccl is None:
        print("note: compiled extension unavailable, timing the fallback only\n")
    bench_labeling(args.reps)
    bench_pipeline(args.reps)


if __name__ == "__main__":
    main()
