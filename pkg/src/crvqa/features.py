"""Content characterization: spatial information, temporal information, CPBD blur.

SI and TI are computed on the 8-bit luma scale so that magnitudes are
comparable with published SI/TI plots.  Standard deviations are population
(``ddof=0``) deviations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .media import VideoClip, sample_frames_uniform, to_8bit_scale, to_uint8

__all__ = [
    "FeatureTriple",
    "SOBEL_X",
    "SOBEL_Y",
    "sobel_magnitude",
    "spatial_information",
    "temporal_information",
    "cpbd",
    "feature_triple",
]

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()


@dataclass
class FeatureTriple:
    si: float
    ti: float
    blur: float
    flags: list = field(default_factory=list)

    def as_dict(self):
        return {"si": self.si, "ti": self.ti, "cpbd": self.blur, "flags": list(self.flags)}


def _luma_stack(clip):
    if isinstance(clip, VideoClip):
        frames = clip.luma
    else:
        frames = np.asarray(clip)
        if frames.ndim == 2:
            frames = frames[None]
    return to_8bit_scale(frames)


def _check_plane(plane, minimum):
    if plane.ndim != 2 or min(plane.shape) < minimum:
        raise ValueError(f"plane must be 2-D and at least {minimum}x{minimum}, got shape {plane.shape}")


def sobel_magnitude(plane):
    """Per-pixel ``sqrt(Gx**2 + Gy**2)`` with 3x3 Sobel kernels and edge replication.

    The result is on the same scale as ``plane`` (integer planes are taken as
    8-bit samples, float planes as given).
    """
    plane = np.asarray(plane)
    plane = plane.astype(np.float64)
    _check_plane(plane, 3)
    gx = ndimage.correlate(plane, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(plane, SOBEL_Y, mode="nearest")
    return np.hypot(gx, gy)


def spatial_information(clip):
    """Maximum over frames of the spatial std of the Sobel-filtered luma."""
    frames = _luma_stack(clip)
    return float(max(sobel_magnitude(f).std() for f in frames))


def temporal_information(clip):
    """Maximum over ``n >= 1`` of the spatial std of ``F[n] - F[n-1]``."""
    frames = _luma_stack(clip)
    if frames.shape[0] < 2:
        raise ValueError("temporal information needs at least 2 frames")
    diffs = np.diff(frames, axis=0)
    return float(diffs.reshape(diffs.shape[0], -1).std(axis=1).max())


def _monotone_runs(img):
    """Run lengths of strictly monotone steps to the left/right of each pixel."""
    h, w = img.shape
    inc_left = np.zeros((h, w), np.int32)
    dec_left = np.zeros((h, w), np.int32)
    inc_right = np.zeros((h, w), np.int32)
    dec_right = np.zeros((h, w), np.int32)
    for j in range(1, w):
        up = img[:, j - 1] < img[:, j]
        down = img[:, j - 1] > img[:, j]
        inc_left[:, j] = np.where(up, inc_left[:, j - 1] + 1, 0)
        dec_left[:, j] = np.where(down, dec_left[:, j - 1] + 1, 0)
    for j in range(w - 2, -1, -1):
        up = img[:, j + 1] > img[:, j]
        down = img[:, j + 1] < img[:, j]
        inc_right[:, j] = np.where(up, inc_right[:, j + 1] + 1, 0)
        dec_right[:, j] = np.where(down, dec_right[:, j + 1] + 1, 0)
    return inc_left + inc_right, dec_left + dec_right


def _vertical_edges(img):
    """Thinned vertical-edge pixels from the horizontal Sobel response."""
    gx = ndimage.correlate(img, SOBEL_X, mode="nearest")
    strength = gx * gx
    thresh = 4.0 * strength.mean()
    left = np.pad(strength, ((0, 0), (1, 0)))[:, :-1]
    right = np.pad(strength, ((0, 0), (0, 1)))[:, 1:]
    # ties between two equal neighbours resolve to the right-hand pixel
    edges = (strength > thresh) & (strength >= left) & (strength > right)
    return edges, gx


def cpbd(plane, block_size=64, beta=3.6, contrast_cut=50.0, prob_cut=0.63,
         edge_fraction=0.002, full_output=False):
    """Cumulative probability of blur detection.

    The plane is tiled into ``block_size`` blocks; a block is an edge block
    when its thinned Sobel edge-pixel count exceeds ``edge_fraction`` of its
    pixels.  For each edge pixel in an edge block the horizontal edge width is
    the distance between the local extrema bracketing it.  The just-noticeable
    width is 5 for blocks with contrast ``<= contrast_cut`` (8-bit scale) and
    3 otherwise, and ``P = 1 - exp(-(w / w_jnb) ** beta)``.  CPBD is the
    fraction of edges with ``P <= prob_cut``.

    Parameters
    ----------
    plane : array_like
        Luma plane, 8-bit samples or working-form floats in [0, 1] (floats
        are rounded to 8-bit samples first).
    full_output : bool
        Also return a dict with ``degenerate`` (no edges found) and
        ``edges`` (edge count).

    Returns
    -------
    value : float
        CPBD in [0, 1].  A plane without detectable edges yields 1.0 and
        ``degenerate=True``.
    """
    # the measurement is defined on 8-bit samples; plateaus from quantization
    # terminate edge-width walks exactly as in integer-valued images
    img = to_uint8(plane).astype(np.float64)
    _check_plane(img, block_size)
    edges, gx = _vertical_edges(img)
    rising, falling = _monotone_runs(img)
    widths = np.where(gx > 0, rising, falling)

    h, w = img.shape
    threshold = edge_fraction * block_size * block_size
    total = 0
    sharp = 0
    for r0 in range(0, h - block_size + 1, block_size):
        for c0 in range(0, w - block_size + 1, block_size):
            sl = (slice(r0, r0 + block_size), slice(c0, c0 + block_size))
            block_edges = edges[sl]
            if np.count_nonzero(block_edges) <= threshold:
                continue
            block = img[sl]
            jnb = 5.0 if block.max() - block.min() <= contrast_cut else 3.0
            bw = widths[sl][block_edges].astype(np.float64)
            prob = 1.0 - np.exp(-np.abs(bw / jnb) ** beta)
            total += bw.size
            sharp += int(np.count_nonzero(prob <= prob_cut))
    degenerate = total == 0
    value = 1.0 if degenerate else sharp / total
    if full_output:
        return value, {"degenerate": degenerate, "edges": total}
    return value


def feature_triple(clip, sample_count=10):
    """SI and TI over the whole clip, mean CPBD over uniformly sampled frames."""
    frames = clip.luma if isinstance(clip, VideoClip) else np.asarray(clip)
    si = spatial_information(frames)
    ti = temporal_information(frames)
    indices = sample_frames_uniform(frames.shape[0], min(sample_count, frames.shape[0]))
    values = []
    flags = []
    for i in indices:
        value, info = cpbd(frames[i], full_output=True)
        values.append(value)
        if info["degenerate"] and "cpbd_no_edges" not in flags:
            flags.append("cpbd_no_edges")
    return FeatureTriple(si=si, ti=ti, blur=float(np.mean(values)), flags=flags)
