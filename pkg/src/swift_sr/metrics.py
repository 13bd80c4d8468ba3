"""PSNR and SSIM scoring for image pairs.

PSNR follows 20*log10(MAX) - 10*log10(MSE) and reports infinity for
identical inputs. SSIM slides a window (11x11 Gaussian, sigma 1.5 by
default) and combines luminance, contrast, and structure comparisons:

    l = (2*mx*my + c1) / (mx^2 + my^2 + c1)
    c = (2*sx*sy + c2) / (sx^2 + sy^2 + c2)
    s = (cov + c3)    / (sx*sy + c3),    c3 = c2 / 2

scored per window as l^alpha * c^beta * s^gamma and averaged. With unit
exponents this reduces to the familiar two-factor form. Values lie in
(-1, 1]; anticorrelated windows can push below zero.

Internally everything runs in float64, so quantized and float inputs that
represent the same pixels score identically. Color images are scored per
channel and averaged; a luma flag scores the BT.601 Y plane instead.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import numpy as np

from .data import discover_images, load_image
from .errors import ConfigError, ShapeError
from .tensor import Tensor

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601


@dataclass
class SsimConfig:
    window: str = "gaussian"
    window_size: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.window not in ("gaussian", "uniform"):
            raise ConfigError(f"window must be gaussian or uniform, got {self.window!r}")
        if self.window_size % 2 != 1 or self.window_size < 1:
            raise ConfigError(f"window_size must be odd and positive, got {self.window_size}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ConfigError("k1 and k2 must be positive")
        if self.dynamic_range <= 0:
            raise ConfigError("dynamic_range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0

    def kernel_1d(self) -> np.ndarray:
        n = self.window_size
        if self.window == "uniform":
            k = np.ones(n, dtype=np.float64)
        else:
            half = (n - 1) / 2.0
            x = np.arange(n, dtype=np.float64) - half
            k = np.exp(-(x * x) / (2.0 * self.gaussian_sigma**2))
        return k / k.sum()


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def mse(a, b) -> float:
    """Mean squared difference over all elements."""
    x, y = _data(a), _data(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    d = x.astype(np.float64) - y.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a, b, max_value: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give inf."""
    if max_value <= 0:
        raise ConfigError("max_value must be positive")
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(max_value) - 10.0 * math.log10(err)


def _filter_valid_2d(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of a 2-D array."""
    win = np.lib.stride_tricks.sliding_window_view(plane, kernel.size, axis=0)
    rows = win @ kernel
    win = np.lib.stride_tricks.sliding_window_view(rows, kernel.size, axis=1)
    return win @ kernel


def ssim_components(
    x: np.ndarray, y: np.ndarray, cfg: SsimConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-window (luminance, contrast, structure) maps for 2-D planes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ShapeError(f"component maps are defined on 2-D planes, got {x.shape}")
    if min(x.shape) < cfg.window_size:
        raise ShapeError(
            f"image {x.shape} smaller than ssim window {cfg.window_size}"
        )
    k = cfg.kernel_1d()
    mu_x = _filter_valid_2d(x, k)
    mu_y = _filter_valid_2d(y, k)
    var_x = _filter_valid_2d(x * x, k) - mu_x * mu_x
    var_y = _filter_valid_2d(y * y, k) - mu_y * mu_y
    cov = _filter_valid_2d(x * y, k) - mu_x * mu_y
    # One joint sqrt keeps sd_x*sd_y bitwise equal to the variance when the
    # inputs coincide, so identical images score exactly 1.
    sd_xy = np.sqrt(np.maximum(var_x, 0.0) * np.maximum(var_y, 0.0))
    lum = (2.0 * mu_x * mu_y + cfg.c1) / (mu_x**2 + mu_y**2 + cfg.c1)
    con = (2.0 * sd_xy + cfg.c2) / (var_x + var_y + cfg.c2)
    struct = (cov + cfg.c3) / (sd_xy + cfg.c3)
    return lum, con, struct


def _ssim_plane(x: np.ndarray, y: np.ndarray, cfg: SsimConfig) -> float:
    lum, con, struct = ssim_components(x, y, cfg)
    if cfg.alpha == cfg.beta == cfg.gamma == 1.0:
        score = lum * con * struct
    else:
        score = (
            np.sign(lum) * np.abs(lum) ** cfg.alpha
            * np.sign(con) * np.abs(con) ** cfg.beta
            * np.sign(struct) * np.abs(struct) ** cfg.gamma
        )
    return float(score.mean())


def ssim(a, b, cfg: SsimConfig | None = None) -> float:
    """Mean per-window similarity, averaged over batch and channels."""
    cfg = cfg or SsimConfig()
    x, y = _data(a), _data(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        return _ssim_plane(x, y, cfg)
    if x.ndim != 4:
        raise ShapeError(f"expected 2-D plane or rank-4 tensor, got {x.shape}")
    scores = [
        _ssim_plane(x[n, c], y[n, c], cfg)
        for n in range(x.shape[0])
        for c in range(x.shape[1])
    ]
    return float(np.mean(scores))


def luma_plane(img) -> np.ndarray:
    """BT.601 luma of a (1, 3, h, w) image tensor, float64."""
    x = _data(img)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"luma conversion expects (n, 3, h, w), got {x.shape}")
    r, g, b = (x[0, i].astype(np.float64) for i in range(3))
    wr, wg, wb = LUMA_WEIGHTS
    return wr * r + wg * g + wb * b


def score_pair(sr, hr, cfg: SsimConfig | None = None, luma: bool = False) -> tuple[float, float]:
    """(psnr_db, ssim) for one image pair, honoring the color convention."""
    cfg = cfg or SsimConfig()
    x, y = _data(sr), _data(hr)
    if x.shape != y.shape:
        raise ShapeError(f"image sizes differ: {x.shape} vs {y.shape}")
    if luma:
        xp, yp = luma_plane(sr), luma_plane(hr)
        return psnr(xp, yp, cfg.dynamic_range), _ssim_plane(xp, yp, cfg)
    psnr_per_channel = [
        psnr(x[:, c], y[:, c], cfg.dynamic_range) for c in range(x.shape[1])
    ]
    return float(np.mean(psnr_per_channel)), ssim(x, y, cfg)


@dataclass
class PairScore:
    name: str
    psnr: float
    ssim: float


@dataclass
class PairReport:
    rows: list[PairScore]
    psnr_mean: float
    ssim_mean: float

    @property
    def count(self) -> int:
        return len(self.rows)


def evaluate_pair_directory(
    dir_sr,
    dir_hr,
    cfg: SsimConfig | None = None,
    luma: bool = False,
    workers: int = 1,
) -> PairReport:
    """Score same-named images from two directories, in filename order."""
    cfg = cfg or SsimConfig()
    sr_files = {p.name: p for p in discover_images(dir_sr)}
    hr_files = {p.name: p for p in discover_images(dir_hr)}
    missing_hr = sorted(set(sr_files) - set(hr_files))
    missing_sr = sorted(set(hr_files) - set(sr_files))
    if missing_hr or missing_sr:
        raise ConfigError(
            "unmatched filenames: "
            + ", ".join(
                [f"{n} (no reference)" for n in missing_hr]
                + [f"{n} (no candidate)" for n in missing_sr]
            )
        )
    if not sr_files:
        raise ConfigError("no image pairs to evaluate")
    names = sorted(sr_files)

    def score_one(name: str) -> PairScore:
        sr_img = load_image(sr_files[name])
        hr_img = load_image(hr_files[name])
        if sr_img.tensor.shape != hr_img.tensor.shape:
            raise ShapeError(
                f"{name}: size mismatch {sr_img.tensor.shape} vs {hr_img.tensor.shape}"
            )
        p, s = score_pair(sr_img.tensor, hr_img.tensor, cfg, luma=luma)
        return PairScore(name, p, s)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(score_one, names))
    else:
        rows = [score_one(name) for name in names]
    psnr_mean = float(np.mean([r.psnr for r in rows]))
    ssim_mean = float(np.mean([r.ssim for r in rows]))
    return PairReport(rows, psnr_mean, ssim_mean)


def _json_number(value: float):
    return "inf" if math.isinf(value) else value


def report_to_csv(report: PairReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["name", "psnr_db", "ssim"])
        for row in report.rows:
            writer.writerow(
                [row.name, "inf" if math.isinf(row.psnr) else f"{row.psnr:.6f}", f"{row.ssim:.6f}"]
            )


def report_summary_json(report: PairReport) -> str:
    return json.dumps(
        {
            "count": report.count,
            "psnr_mean": _json_number(report.psnr_mean),
            "ssim_mean": _json_number(report.ssim_mean),
        }
    )
