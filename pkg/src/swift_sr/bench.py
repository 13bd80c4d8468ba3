"""Per-frame latency measurement for the upscaling networks.

Timing wraps the forward pass only: the input tensor is fixed and random,
decode and I/O are excluded, and a warmup run amortizes allocator and BLAS
startup effects. Reported figures are per-frame milliseconds over the timed
iterations; fps is 1000 over the median.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

RESOLUTION_PRESETS = {
    "270p": (270, 480),
    "540p": (540, 960),
}


def parse_resolution(text: str) -> tuple[int, int]:
    """'WxH' or a preset name, returned as (h, w)."""
    if text in RESOLUTION_PRESETS:
        return RESOLUTION_PRESETS[text]
    parts = text.lower().split("x")
    if len(parts) == 2:
        try:
            w, h = int(parts[0]), int(parts[1])
        except ValueError:
            w = h = 0
        if w >= 1 and h >= 1:
            return (h, w)
    raise ConfigError(
        f"invalid resolution {text!r}: expected WxH or one of {sorted(RESOLUTION_PRESETS)}"
    )


def detect_threads() -> int:
    for var in ("SWIFT_SR_THREADS", "OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
        value = os.environ.get(var)
        if value and value.isdigit():
            return int(value)
    return os.cpu_count() or 1


@dataclass
class BenchReport:
    variant: str
    in_h: int
    in_w: int
    out_h: int
    out_w: int
    warmup: int
    iters: int
    ms_min: float
    ms_median: float
    ms_p95: float
    ms_mean: float
    fps: float
    threads: int

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "in_res": f"{self.in_w}x{self.in_h}",
            "out_res": f"{self.out_w}x{self.out_h}",
            "warmup": self.warmup,
            "iters": self.iters,
            "ms": {
                "min": self.ms_min,
                "median": self.ms_median,
                "p95": self.ms_p95,
                "mean": self.ms_mean,
            },
            "fps": self.fps,
            "threads": self.threads,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_text(self) -> str:
        return (
            f"variant {self.variant}: {self.in_w}x{self.in_h} -> {self.out_w}x{self.out_h}, "
            f"{self.iters} iters after {self.warmup} warmup, {self.threads} thread(s)\n"
            f"  per-frame ms: min {self.ms_min:.3f} | median {self.ms_median:.3f} | "
            f"p95 {self.ms_p95:.3f} | mean {self.ms_mean:.3f}\n"
            f"  throughput: {self.fps:.2f} frames/s"
        )


def run_benchmark(model, in_hw: tuple[int, int], iters: int, warmup: int,
                  seed: int = 0) -> BenchReport:
    """Time eval-mode forwards of ``model`` on a fixed random input."""
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    if warmup < 0:
        raise ConfigError("warmup must be >= 0")
    h, w = in_hw
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(1, model.cfg.in_channels, h, w)).astype(np.float32)
    for _ in range(warmup):
        model.forward(x, train=False)
    samples = np.empty(iters, dtype=np.float64)
    out_shape = None
    for i in range(iters):
        t0 = time.perf_counter()
        y = model.forward(x, train=False)
        samples[i] = (time.perf_counter() - t0) * 1000.0
        out_shape = y.shape
    median = float(np.median(samples))
    return BenchReport(
        variant=getattr(model, "variant", "dsconv"),
        in_h=h,
        in_w=w,
        out_h=int(out_shape[2]),
        out_w=int(out_shape[3]),
        warmup=warmup,
        iters=iters,
        ms_min=float(samples.min()),
        ms_median=median,
        ms_p95=float(np.percentile(samples, 95)),
        ms_mean=float(samples.mean()),
        fps=1000.0 / median,
        threads=detect_threads(),
    )
