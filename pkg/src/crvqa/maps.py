"""Full-reference quality maps: SSIM, MS-SSIM, MDSI, spatial VIF, motion.

Inputs may be uint8 planes or working-form floats in [0, 1]; all metric
constants are on the 8-bit scale and inputs are rescaled internally.  Maps
are full-size: local windows at the border see edge-replicated samples, so
no crop is applied (``QualityMap.crop`` is 0 for every metric here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .distort import gaussian_kernel1d
from .media import to_8bit_scale, to_float

__all__ = [
    "QualityMap",
    "METRICS",
    "psnr",
    "gaussian_window",
    "ssim_map",
    "ms_ssim",
    "prewitt_magnitude",
    "mdsi_map",
    "vif_map",
    "motion_map",
    "map_stack",
]

METRICS = ("ssim", "mdsi", "vif", "motion")
STACK_KINDS = ("ssim", "vif", "mdsi", "vmaf_style")
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass
class QualityMap:
    values: np.ndarray
    metric: str
    normalized: bool = True
    crop: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric tag {self.metric!r}")
        self.values = np.asarray(self.values, dtype=np.float32)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def mean(self):
        return float(self.values.mean(dtype=np.float64))


def _pair(ref, dist):
    a = to_8bit_scale(ref)
    b = to_8bit_scale(dist)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("expected 2-D planes")
    return a, b


def psnr(ref, dist, ceiling=100.0):
    """PSNR in dB on the 8-bit scale, clamped to ``ceiling``."""
    a, b = _pair(ref, dist)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float(ceiling)
    return float(min(ceiling, 10.0 * math.log10(255.0**2 / mse)))


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter(img, k):
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _ssim_terms(a, b, k, c1, c2):
    mu_a = _filter(a, k)
    mu_b = _filter(b, k)
    saa = _filter(a * a, k) - mu_a * mu_a
    sbb = _filter(b * b, k) - mu_b * mu_b
    sab = _filter(a * b, k) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    cs = (2 * sab + c2) / (saa + sbb + c2)
    return lum, cs


def _centered(a, b):
    # local statistics are offset invariant; removing a shared offset keeps
    # the E[x^2] - E[x]^2 cancellation well conditioned
    off = 0.5 * (a.mean() + b.mean())
    return a - off, b - off


def ssim_map(ref, dist, normalized=True, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """SSIM map over the luma plane.

    Returns ``(QualityMap, mean)`` where ``mean`` is the mean of the raw
    map in [-1, 1].  With ``normalized`` the stored map is ``(v + 1) / 2``.
    """
    a, b = _pair(ref, dist)
    if min(a.shape) < window:
        raise ValueError(f"planes must be at least {window}x{window}, got {a.shape}")
    k = gaussian_window(window, sigma)
    c1, c2 = (k1 * 255.0) ** 2, (k2 * 255.0) ** 2
    # luminance term needs absolute means, so only the cs term uses centred inputs
    lum, _ = _ssim_terms(a, b, k, c1, c2)
    _, cs = _ssim_terms(*_centered(a, b), k, c1, c2)
    raw = lum * cs
    mean = float(raw.mean())
    values = (raw + 1.0) / 2.0 if normalized else raw
    return QualityMap(values, "ssim", normalized), mean


def _downsample2(img):
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_scale_count(shape, window=11, max_scales=5):
    """Largest ``s <= max_scales`` with ``min(shape) / 2**(s-1) >= window``."""
    side = min(shape)
    s = 0
    while s < max_scales and side / 2**s >= window:
        s += 1
    return s


def ms_ssim(ref, dist, window=11, sigma=1.5, k1=0.01, k2=0.03, weights=MS_SSIM_WEIGHTS):
    """Multi-scale SSIM.

    Contrast-structure means at the finer scales and the full SSIM mean at
    the coarsest scale are combined as a weighted geometric product.  When
    the plane is too small for every scale, the coarse scales are dropped and
    the remaining weights renormalized to sum to 1.  Negative per-scale
    values are clamped to 0.
    """
    a, b = _pair(ref, dist)
    s = ms_scale_count(a.shape, window, len(weights))
    if s == 0:
        raise ValueError(f"planes must be at least {window}x{window}, got {a.shape}")
    w = np.asarray(weights[:s], dtype=np.float64)
    w = w / w.sum()
    k = gaussian_window(window, sigma)
    c1, c2 = (k1 * 255.0) ** 2, (k2 * 255.0) ** 2
    out = 1.0
    for i in range(s):
        lum, _ = _ssim_terms(a, b, k, c1, c2)
        _, cs = _ssim_terms(*_centered(a, b), k, c1, c2)
        v = (lum * cs).mean() if i == s - 1 else cs.mean()
        out *= max(float(v), 0.0) ** w[i]
        a, b = _downsample2(a), _downsample2(b)
    return float(out)


PREWITT_X = np.array([[1, 0, -1], [1, 0, -1], [1, 0, -1]], dtype=np.float64) / 3.0
PREWITT_Y = PREWITT_X.T.copy()


def prewitt_magnitude(img):
    gx = ndimage.correlate(img, PREWITT_X, mode="nearest")
    gy = ndimage.correlate(img, PREWITT_Y, mode="nearest")
    return np.hypot(gx, gy)


def _upsample_chroma(c, shape):
    c = to_8bit_scale(c)
    if c.shape == shape:
        return c
    c = np.repeat(np.repeat(c, 2, axis=0), 2, axis=1)
    return c[: shape[0], : shape[1]]


def mdsi_map(ref, dist, ref_chroma=None, dist_chroma=None, c1=140.0, c2=55.0, c3=550.0,
             alpha=0.6, normalized=True):
    """MDSI similarity map (no deviation pooling).

    Gradient similarity uses the fused image ``(ref + dist) / 2``::

        GS = S(Gr, Gd; c1) + S(Gd, Gf; c2) - S(Gr, Gf; c2)

    where ``S(x, y; c) = (2xy + c) / (x^2 + y^2 + c)``.  Chroma pairs
    ``(U, V)`` are centred at 128 and compared with constant ``c3``; the
    result is ``alpha * GS + (1 - alpha) * CS``.  Without chroma the map is
    GS alone.  Subsampled chroma is upsampled by sample repetition.
    """
    a, b = _pair(ref, dist)
    gr = prewitt_magnitude(a)
    gd = prewitt_magnitude(b)
    gf = prewitt_magnitude(0.5 * (a + b))

    def sim(x, y, c):
        return (2 * x * y + c) / (x * x + y * y + c)

    gs = sim(gr, gd, c1) + sim(gd, gf, c2) - sim(gr, gf, c2)
    if ref_chroma is None or dist_chroma is None:
        out = gs
    else:
        hr, mr = (_upsample_chroma(c, a.shape) - 128.0 for c in ref_chroma)
        hd, md = (_upsample_chroma(c, a.shape) - 128.0 for c in dist_chroma)
        cs = (2 * (hr * hd + mr * md) + c3) / (hr**2 + hd**2 + mr**2 + md**2 + c3)
        out = alpha * gs + (1 - alpha) * cs
    return QualityMap(np.clip(out, 0.0, 1.0), "mdsi", normalized)


def vif_map(ref, dist, window=9, sigma=1.5, sigma_n2=2.0, eps=1e-10, normalized=True):
    """Single-scale spatial-domain VIF map at the original resolution.

    Per pixel, with Gaussian-weighted local statistics::

        g   = cov / (var_r + eps)
        sv2 = max(var_d - g * cov, 0)
        vif = log(1 + g^2 var_r / (sv2 + sigma_n2)) / log(1 + var_r / sigma_n2)

    Pixels whose reference variance is below ``eps`` are set to 1.  The map
    is clamped to [0, 1].
    """
    a, b = _pair(ref, dist)
    a, b = _centered(a, b)
    k = gaussian_window(window, sigma)
    mu_a = _filter(a, k)
    mu_b = _filter(b, k)
    var_r = np.maximum(_filter(a * a, k) - mu_a**2, 0.0)
    var_d = np.maximum(_filter(b * b, k) - mu_b**2, 0.0)
    cov = _filter(a * b, k) - mu_a * mu_b
    g = cov / (var_r + eps)
    sv2 = np.maximum(var_d - g * cov, 0.0)
    flat = var_r < eps
    num = np.log1p(g * g * var_r / (sv2 + sigma_n2))
    den = np.log1p(var_r / sigma_n2)
    out = np.where(flat, 1.0, num / np.where(flat, 1.0, den))
    return QualityMap(np.clip(out, 0.0, 1.0), "vif", normalized)


def motion_map(frame, prev=None):
    """``|F_n - F_{n-1}|`` on the [0, 1] scale; all zeros when ``prev`` is None."""
    cur = to_float(frame).astype(np.float64)
    if prev is None:
        return QualityMap(np.zeros_like(cur), "motion")
    p = to_float(prev).astype(np.float64)
    if p.shape != cur.shape:
        raise ValueError(f"dimension mismatch: {cur.shape} vs {p.shape}")
    return QualityMap(np.abs(cur - p), "motion")


def map_stack(kind, ref, dist, prev_dist=None, ref_chroma=None, dist_chroma=None):
    """Normalized map list for ``kind`` in {ssim, vif, mdsi, vmaf_style}."""
    if kind == "ssim":
        return [ssim_map(ref, dist)[0]]
    if kind == "vif":
        return [vif_map(ref, dist)]
    if kind == "mdsi":
        return [mdsi_map(ref, dist, ref_chroma, dist_chroma)]
    if kind == "vmaf_style":
        return [vif_map(ref, dist), motion_map(dist, prev_dist)]
    raise ValueError(f"unknown map kind {kind!r}; expected one of {STACK_KINDS}")
