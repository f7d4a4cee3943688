"""Teacher-quality score and the Bernoulli observation-source gate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .rng import stream

PSNR_CAP = 300.0


@dataclass(frozen=True)
class GateParams:
    k: float = 8.0
    tau: float = 1.0
    psnr_div: float = 10.0
    ssim_div: float = 0.20
    lpips_num: float = 0.80

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("gate slope k must be positive")
        if not (self.psnr_div > 0 and self.ssim_div > 0 and self.lpips_num > 0):
            raise ValueError("quality divisors must be positive")


@dataclass(frozen=True)
class SceneQuality:
    psnr: float
    ssim: float
    lpips: float
    q_s: float
    source: str = "supplied"

    @classmethod
    def from_metrics(cls, psnr, ssim, lpips, params: GateParams | None = None, source="supplied"):
        return cls(psnr, ssim, lpips, scene_quality_score(psnr, ssim, lpips, params), source)


def scene_quality_score(psnr: float, ssim: float, lpips: float, params: GateParams | None = None) -> float:
    params = params or GateParams()
    if not lpips > 0:
        raise ValueError(f"lpips must be positive, got {lpips}")
    if not (math.isfinite(psnr) and math.isfinite(ssim) and math.isfinite(lpips)):
        raise ValueError("quality metrics must be finite")
    return min(psnr / params.psnr_div, ssim / params.ssim_div, params.lpips_num / lpips)


def gate_probability(q_s: float, params: GateParams | None = None) -> float:
    params = params or GateParams()
    x = params.k * (q_s - params.tau)
    # split on sign so neither branch overflows
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def sample_observation_sources(q_s: float, n_draws: int, seed: int, params: GateParams | None = None) -> list[str]:
    if n_draws < 0:
        raise ValueError("n_draws must be >= 0")
    g = gate_probability(q_s, params)
    u = stream(seed, 0, name="gate").random(n_draws)
    return ["gs" if x < g else "fallback" for x in u]


def gate_report(scene_id: str, quality: SceneQuality, params: GateParams | None = None) -> dict:
    params = params or GateParams()
    return {
        "scene_id": scene_id,
        "q_s": quality.q_s,
        "gate_prob": gate_probability(quality.q_s, params),
        "bucket": "high" if quality.q_s >= params.tau else "low",
    }


def load_quality_csv(path, params: GateParams | None = None) -> dict[str, SceneQuality]:
    """Read ``scene_id,psnr,ssim,lpips`` rows."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"scene_id", "psnr", "ssim", "lpips"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                out[row["scene_id"]] = SceneQuality.from_metrics(
                    float(row["psnr"]), float(row["ssim"]), float(row["lpips"]), params
                )
            except ValueError as e:
                raise ValueError(f"{path}:{reader.line_num}: {e}") from None
    return out


@dataclass(frozen=True)
class PSNR:
    value: float
    exact: bool  # False when MSE was zero and the value is the capped sentinel


def psnr(image_a, image_b) -> PSNR:
    a = np.asarray(image_a, dtype=float)
    b = np.asarray(image_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR(PSNR_CAP, False)
    return PSNR(min(10.0 * math.log10(1.0 / mse), PSNR_CAP), True)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(image_a, image_b, data_range: float = 1.0) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03.

    Grayscale (H, W) or channel-last (H, W, C); channels are averaged.
    """
    a = np.asarray(image_a, dtype=float)
    b = np.asarray(image_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], data_range) for c in range(a.shape[2])]))
    if min(a.shape) < 11:
        raise ValueError("images must be at least 11x11 for SSIM")
    w = _gaussian_window()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def filt(x):
        return convolve2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
