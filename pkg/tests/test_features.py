import numpy as np
import pytest

from crvqa.distort import gaussian_blur
from crvqa.features import cpbd, feature_triple, sobel_magnitude, spatial_information, temporal_information
from crvqa.media import VideoClip


def _sobel_loop(img):
    kx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], float)
    p = np.pad(img.astype(float), 1, mode="edge")
    out = np.zeros(img.shape)
    for i in range(img.shape[0]):
        for j in range(img.shape[1]):
            win = p[i:i + 3, j:j + 3]
            out[i, j] = np.hypot((win * kx).sum(), (win * kx.T).sum())
    return out


def test_sobel_matches_loop(rng):
    img = rng.integers(0, 256, (12, 15), dtype=np.uint8)
    np.testing.assert_allclose(sobel_magnitude(img), _sobel_loop(img), atol=1e-9)


def test_si_ti_oracles(rng):
    frames = rng.integers(0, 256, (5, 16, 16), dtype=np.uint8)
    si = max(_sobel_loop(f).std() for f in frames)
    ti = max((frames[i].astype(float) - frames[i - 1]).std() for i in range(1, 5))
    assert spatial_information(frames) == pytest.approx(si, abs=1e-9)
    assert temporal_information(frames) == pytest.approx(ti, abs=1e-9)


def test_static_clip_has_zero_ti():
    clip = VideoClip(np.full((4, 8, 8), 17, np.uint8))
    assert temporal_information(clip) == 0.0
    assert spatial_information(clip) == 0.0


def test_cpbd_step_edge_is_sharp():
    img = np.zeros((64, 64), np.uint8)
    img[:, 32:] = 200
    assert cpbd(img) == 1.0


def test_cpbd_flat_is_degenerate():
    value, info = cpbd(np.full((64, 64), 90, np.uint8), full_output=True)
    assert value == 1.0 and info["degenerate"]


def test_cpbd_blur_lowers_score(textures):
    sharp = np.mean([cpbd(t) for t in textures[:5]])
    blurred = np.mean([cpbd(gaussian_blur(t, 3.0)) for t in textures[:5]])
    assert blurred < sharp


def test_cpbd_rejects_small_plane():
    with pytest.raises(ValueError):
        cpbd(np.zeros((10, 10)))


def test_feature_triple_flags_flat_frames():
    clip = VideoClip(np.full((3, 64, 64), 50, np.uint8))
    triple = feature_triple(clip)
    assert "cpbd_no_edges" in triple.flags
    assert set(triple.as_dict()) == {"si", "ti", "cpbd", "flags"}
