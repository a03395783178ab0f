"""Multi-stage synthetic distortions: noise or blur, then block-DCT compression.

Strength parameters are on the 8-bit scale.  Outputs are working-form
float32 planes in [0, 1].

Noise is drawn from numpy's Philox4x64 counter-based generator
(``numpy.random.Philox``) seeded with the caller's 64-bit seed, so the
output bits depend only on (plane, sigma, seed).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

from .media import to_float

__all__ = [
    "JPEG_LUMA_TABLE",
    "DistortionRecipe",
    "gaussian_noise",
    "gaussian_kernel1d",
    "gaussian_blur",
    "quality_table",
    "block_dct_compress",
    "random_recipe",
    "synthesize",
]

NOISE_RANGE = (1.0, 30.0)
BLUR_RANGE = (0.5, 8.0)
QUALITY_RANGE = (5, 80)

# ITU-T T.81 Annex K luminance table
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def gaussian_noise(plane, sigma, seed):
    """Add i.i.d. N(0, sigma^2) noise (sigma on the 8-bit scale) and clamp."""
    if sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    plane = to_float(plane)
    if sigma == 0:
        return plane.copy()
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    noise = rng.standard_normal(plane.shape) * (sigma / 255.0)
    return np.clip(plane + noise, 0.0, 1.0).astype(np.float32)


def gaussian_kernel1d(sigma):
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(plane, sigma):
    """Separable Gaussian blur, kernel radius ``ceil(3 sigma)``, edge replication."""
    if sigma < 0:
        raise ValueError("blur sigma must be non-negative")
    plane = to_float(plane)
    if sigma == 0:
        return plane.copy()
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(plane.astype(np.float64), k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return out.astype(np.float32)


def quality_table(quality, base=JPEG_LUMA_TABLE):
    """IJG quality scaling: ``floor((T * s + 50) / 100)`` clamped to [1, 255]."""
    if not 1 <= quality <= 100:
        raise ValueError("quality must lie in [1, 100]")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)


def _round_half_away(x):
    # snap to 1e-9 first: exact halves (e.g. a DC term of sum/8) must not depend on transform round-off
    x = np.round(x, 9)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def block_dct_compress(plane, quality):
    """JPEG-like 8x8 block DCT quantization round trip (no entropy coding).

    Samples are level-shifted by -128, transformed with the orthonormal 2-D
    DCT-II, quantized with round-half-away-from-zero against the scaled
    luminance table, dequantized, inverse transformed and rounded to 8-bit
    values.  Planes whose sides are not multiples of 8 are edge-padded and
    cropped back.
    """
    table = quality_table(quality)
    img = np.rint(to_float(plane).astype(np.float64) * 255.0)
    h, w = img.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(img, ((0, ph), (0, pw)), mode="edge") - 128.0
    H, W = padded.shape
    blocks = padded.reshape(H // 8, 8, W // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks, type=2, axes=(2, 3), norm="ortho")
    coef = _round_half_away(coef / table) * table
    rec = idctn(coef, type=2, axes=(2, 3), norm="ortho")
    rec = rec.transpose(0, 2, 1, 3).reshape(H, W)[:h, :w] + 128.0
    return (np.clip(np.rint(rec), 0.0, 255.0) / 255.0).astype(np.float32)


@dataclass(frozen=True)
class DistortionRecipe:
    """First stage (``"noise"`` or ``"blur"`` with ``sigma``) then compression."""

    kind: str
    sigma: float
    quality: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("noise", "blur"):
            raise ValueError(f"unknown first-stage kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 1 <= self.quality <= 100:
            raise ValueError("quality must lie in [1, 100]")

    def as_dict(self):
        return asdict(self)


def random_recipe(seed):
    """Draw a recipe uniformly over the default parameter ranges."""
    rng = np.random.default_rng(seed)
    kind = "noise" if rng.random() < 0.5 else "blur"
    lo, hi = NOISE_RANGE if kind == "noise" else BLUR_RANGE
    sigma = float(rng.uniform(lo, hi))
    quality = int(rng.integers(QUALITY_RANGE[0], QUALITY_RANGE[1] + 1))
    stage_seed = int(rng.integers(0, 2**63))
    return DistortionRecipe(kind, sigma, quality, stage_seed)


def synthesize(plane, recipe):
    """Apply ``recipe``; returns the distorted plane and a provenance record."""
    if recipe.kind == "noise":
        stage1 = gaussian_noise(plane, recipe.sigma, recipe.seed)
    else:
        stage1 = gaussian_blur(plane, recipe.sigma)
    out = block_dct_compress(stage1, recipe.quality)
    provenance = {
        "stages": [
            {"kind": recipe.kind, "sigma": recipe.sigma},
            {"kind": "block_dct", "quality": recipe.quality},
        ],
        "seed": recipe.seed,
    }
    return out, provenance
