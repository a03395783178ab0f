"""Procedural test content: multi-octave value-noise textures and panning clips."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .media import VideoClip, to_uint8

__all__ = ["value_noise", "procedural_texture", "procedural_clip", "synthetic_corpus", "write_corpus"]


def value_noise(size, cell, rng):
    """One octave of value noise: random lattice values, cubic interpolation."""
    h, w = (size, size) if np.isscalar(size) else size
    gh, gw = h // cell + 3, w // cell + 3
    lattice = rng.random((gh, gw))
    ys = np.arange(h) / cell + 1.0
    xs = np.arange(w) / cell + 1.0
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(lattice, [yy, xx], order=3, mode="nearest")


def procedural_texture(size=128, seed=0, octaves=5, persistence=0.6, edges=True):
    """Natural-looking float32 texture in [0, 1].

    Sums ``octaves`` of value noise (cell sizes ``2**octaves .. 2``) and, when
    ``edges`` is set, overlays a piecewise-constant mosaic so that the texture
    carries sharp step edges as well as smooth shading.
    """
    rng = np.random.default_rng(seed)
    h, w = (size, size) if np.isscalar(size) else size
    img = np.zeros((h, w))
    amp, total = 1.0, 0.0
    for o in range(octaves):
        cell = 2 ** (octaves - o)
        img += amp * value_noise((h, w), cell, rng)
        total += amp
        amp *= persistence
    img /= total
    if edges:
        n = max(4, (h * w) // 512)
        cy = rng.integers(0, h, n)
        cx = rng.integers(0, w, n)
        levels = rng.random(n)
        yy, xx = np.mgrid[:h, :w]
        d = (yy[..., None] - cy) ** 2 + (xx[..., None] - cx) ** 2
        mosaic = levels[np.argmin(d, axis=-1)]
        img = 0.5 * img + 0.5 * mosaic
    lo, hi = img.min(), img.max()
    img = 0.1 + 0.8 * (img - lo) / max(hi - lo, 1e-12)
    return img.astype(np.float32)


def procedural_clip(size=64, frames=10, seed=0, velocity=(1, 2), fps=30, clip_id=""):
    """A panning crop over a larger procedural texture, with chroma planes."""
    rng = np.random.default_rng(seed)
    h, w = (size, size) if np.isscalar(size) else size
    vy, vx = velocity
    big = procedural_texture((h + abs(vy) * frames + 1, w + abs(vx) * frames + 1),
                             seed=int(rng.integers(2**31)))
    luma = []
    for t in range(frames):
        y0 = vy * t if vy >= 0 else abs(vy) * (frames - t)
        x0 = vx * t if vx >= 0 else abs(vx) * (frames - t)
        luma.append(big[y0:y0 + h, x0:x0 + w])
    luma = to_uint8(np.stack(luma))
    ch, cw = (h + 1) // 2, (w + 1) // 2
    u = np.full((frames, ch, cw), 128, np.uint8)
    v = np.full((frames, ch, cw), 128, np.uint8)
    chroma_tex = procedural_texture((ch, cw), seed=int(rng.integers(2**31)), octaves=3, edges=False)
    u[:] = to_uint8(0.4 + 0.2 * chroma_tex)
    v[:] = to_uint8(0.6 - 0.2 * chroma_tex)
    return VideoClip(luma, fps=fps, chroma_u=u, chroma_v=v, id=clip_id or f"clip{seed}")


def _degrade_clip(clip, fn):
    luma = np.stack([to_uint8(fn(i, f)) for i, f in enumerate(clip.luma)])
    return VideoClip(luma, fps=clip.fps, chroma_u=clip.chroma_u, chroma_v=clip.chroma_v, id=clip.id)


def synthetic_corpus(n_sources=12, qualities=(90, 50, 20, 5), size=64, frames=10, seed=0,
                     mos_noise=0.1, noise_range=(1.0, 8.0), blur_range=(0.3, 1.2)):
    """A corpus of corrupted sources and their transcodes with proxy opinion scores.

    Each source is a pristine procedural clip degraded by noise or blur of a
    random level; each transcode is the block-DCT compressed source at one
    of ``qualities``.  With ``v`` the mean VIF of a transcode against the
    pristine clip, the proxy MOS is the affine map taking the corpus range
    ``[min v, max v]`` onto the 1..5 scale, plus Gaussian noise of std
    ``mos_noise``.

    Returns ``(corpus, oracle)``: ``corpus`` in the shape produced by
    :func:`crvqa.harness.load_manifest` and ``oracle`` a list of
    ``(source_id, video_id, v)`` tuples.
    """
    from .distort import block_dct_compress, gaussian_blur, gaussian_noise
    from .maps import vif_map

    rng = np.random.default_rng(seed)
    sources, oracle = [], []
    for s in range(n_sources):
        pristine = procedural_clip(size, frames, seed=int(rng.integers(2**31)),
                                   velocity=(int(rng.integers(-2, 3)), int(rng.integers(-2, 3))))
        if rng.random() < 0.5:
            sigma, nseed = float(rng.uniform(*noise_range)), int(rng.integers(2**31))
            src = _degrade_clip(pristine, lambda i, f: gaussian_noise(f, sigma, nseed + i))
        else:
            sigma = float(rng.uniform(*blur_range))
            src = _degrade_clip(pristine, lambda i, f: gaussian_blur(f, sigma))
        src.id = f"src{s:02d}"
        clips = []
        for q in qualities:
            t = _degrade_clip(src, lambda i, f: block_dct_compress(f, q))
            t.id = f"src{s:02d}_q{q:02d}"
            v = float(np.mean([vif_map(p, d).mean() for p, d in zip(pristine.luma, t.luma)]))
            clips.append(t)
            oracle.append((src.id, t.id, v))
        sources.append((src, clips))
    v = np.array([o[2] for o in oracle])
    lo, span = v.min(), max(np.ptp(v), 1e-12)
    mos = 1.0 + 4.0 * (v - lo) / span + rng.normal(0.0, mos_noise, v.size)
    corpus, k = [], 0
    for src, clips in sources:
        corpus.append((src, [(c, float(mos[k + j])) for j, c in enumerate(clips)]))
        k += len(clips)
    return corpus, oracle


def write_corpus(corpus, directory):
    """Write clips as Y4M files plus ``manifest.json``; returns the manifest path."""
    import json
    from pathlib import Path

    from .media import write_y4m

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for src, pairs in corpus:
        (d / f"{src.id}.y4m").write_bytes(write_y4m(src))
        names = []
        for clip, _ in pairs:
            (d / f"{clip.id}.y4m").write_bytes(write_y4m(clip))
            names.append(f"{clip.id}.y4m")
        entries.append({"source": f"{src.id}.y4m", "transcoded": names, "mos": [m for _, m in pairs]})
    path = d / "manifest.json"
    path.write_text(json.dumps(entries, indent=1))
    return path
