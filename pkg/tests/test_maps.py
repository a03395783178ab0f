import numpy as np
import pytest

from crvqa.distort import block_dct_compress, gaussian_noise
from crvqa.maps import (
    QualityMap, map_stack, mdsi_map, motion_map, ms_scale_count, ms_ssim, prewitt_magnitude, psnr, ssim_map,
    vif_map,
)

from oracles import prewitt_loop, scalar_ssim, ssim_pixels


def _pair(rng, size=32):
    a = rng.integers(0, 256, (size, size)).astype(np.uint8)
    b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255).astype(np.uint8)
    return a, b


def test_ssim_matches_window_oracle(rng):
    a, b = _pair(rng)
    qm, mean = ssim_map(a, b, normalized=False)
    np.testing.assert_allclose(qm.values, ssim_pixels(a, b), atol=1e-6)  # float32 storage
    assert mean == pytest.approx(scalar_ssim(a, b), abs=1e-9)


def test_ssim_identity_and_normalization(rng):
    a, _ = _pair(rng)
    qm, mean = ssim_map(a, a)
    assert mean == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(qm.values, 1.0)
    qm, mean = ssim_map(a, 255 - a)
    assert qm.values.min() >= 0 and mean < 0


def test_ssim_shape_and_minimum_size(rng):
    a, b = _pair(rng, 16)
    assert ssim_map(a, b)[0].values.shape == (16, 16)
    with pytest.raises(ValueError):
        ssim_map(a[:8, :8], b[:8, :8])
    with pytest.raises(ValueError, match="mismatch"):
        ssim_map(a, b[:15])


def test_cs_term_is_offset_invariant(rng):
    # the structure term only sees local deviations; check through a flat-mean pair
    a = rng.integers(40, 200, (32, 32)).astype(float)
    b = a + rng.normal(0, 5, a.shape)
    v1 = ssim_map(a, b, normalized=False)[0].values
    v2 = ssim_map(a + 30, b + 30, normalized=False)[0].values
    assert np.abs(v1 - v2).max() < 0.02


def test_psnr():
    a = np.zeros((4, 4), np.uint8)
    b = a.copy()
    b[0, 0] = 16
    assert psnr(a, b) == pytest.approx(10 * np.log10(255**2 / 16))
    assert psnr(a, a) == 100.0


def test_ms_ssim_scales(rng):
    assert ms_scale_count((64, 64)) == 3
    assert ms_scale_count((176, 176)) == 5
    a, b = _pair(rng, 64)
    assert ms_ssim(a, a) == pytest.approx(1.0)
    assert 0 < ms_ssim(a, b) < 1


def test_ms_ssim_three_scale_oracle(rng):
    a, b = _pair(rng, 64)
    w = np.array([0.0448, 0.2856, 0.3001])
    w /= w.sum()
    x, y = a.astype(float), b.astype(float)
    expect = 1.0
    for i in range(3):
        s = ssim_pixels(x, y)
        if i < 2:
            # contrast-structure part only: divide out the luminance factor
            from oracles import gauss2d, windows
            g = gauss2d()
            mx = (windows(x, 11) * g).sum(axis=(2, 3))
            my = (windows(y, 11) * g).sum(axis=(2, 3))
            c1 = (0.01 * 255) ** 2
            s = s / ((2 * mx * my + c1) / (mx**2 + my**2 + c1))
        expect *= max(s.mean(), 0) ** w[i]
        x = 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])
        y = 0.25 * (y[0::2, 0::2] + y[1::2, 0::2] + y[0::2, 1::2] + y[1::2, 1::2])
    assert ms_ssim(a, b) == pytest.approx(expect, abs=1e-9)


def test_mdsi_formula_oracle(rng):
    a, b = _pair(rng)
    gr, gd, gf = prewitt_loop(a), prewitt_loop(b), prewitt_loop((a.astype(float) + b) / 2)
    np.testing.assert_allclose(prewitt_magnitude(a.astype(float)), gr, atol=1e-9)

    def S(x, y, c):
        return (2 * x * y + c) / (x * x + y * y + c)

    gs = S(gr, gd, 140) + S(gd, gf, 55) - S(gr, gf, 55)
    np.testing.assert_allclose(mdsi_map(a, b).values, np.clip(gs, 0, 1), atol=1e-6)

    u = rng.integers(0, 256, (2, 16, 16)).astype(np.uint8)
    v = np.clip(u + rng.normal(0, 10, u.shape), 0, 255).astype(np.uint8)
    up = lambda c: np.repeat(np.repeat(c.astype(float), 2, 0), 2, 1) - 128  # noqa: E731
    hr, mr, hd, md = up(u[0]), up(u[1]), up(v[0]), up(v[1])
    cs = (2 * (hr * hd + mr * md) + 550) / (hr**2 + hd**2 + mr**2 + md**2 + 550)
    got = mdsi_map(a, b, (u[0], u[1]), (v[0], v[1])).values
    np.testing.assert_allclose(got, np.clip(0.6 * gs + 0.4 * cs, 0, 1), atol=1e-6)


def test_mdsi_identity(rng):
    a, _ = _pair(rng)
    assert np.allclose(mdsi_map(a, a).values, 1.0)


def test_vif_properties(rng, textures):
    t = textures[0]
    assert np.allclose(vif_map(t, t).values, 1.0, atol=1e-6)
    noisy = [vif_map(t, gaussian_noise(t, s, 1)).mean() for s in (5, 10, 20)]
    assert noisy[0] > noisy[1] > noisy[2]
    a8, b8 = (t * 255).astype(np.float64), (gaussian_noise(t, 10, 2) * 255).astype(np.float64)
    shifted = vif_map(a8 + 7, b8 + 7).values
    np.testing.assert_allclose(shifted, vif_map(a8, b8).values, atol=1e-6)
    flat = np.full((16, 16), 100, np.uint8)
    assert np.all(vif_map(flat, flat).values == 1.0)


def test_maps_are_normalized_range(rng, textures):
    t = textures[1]
    d = block_dct_compress(t, 10)
    for qm in (ssim_map(t, d)[0], mdsi_map(t, d), vif_map(t, d)):
        assert qm.values.shape == t.shape
        assert qm.values.min() >= 0 and qm.values.max() <= 1


def test_motion_map():
    a = np.zeros((4, 4), np.uint8)
    b = np.full((4, 4), 51, np.uint8)
    assert motion_map(a).values.max() == 0
    assert np.allclose(motion_map(b, a).values, 0.2)


def test_map_stack_kinds(textures):
    t = textures[2]
    assert [m.metric for m in map_stack("vmaf_style", t, t)] == ["vif", "motion"]
    assert map_stack("ssim", t, t)[0].metric == "ssim"
    with pytest.raises(ValueError):
        map_stack("lpips", t, t)
    with pytest.raises(ValueError):
        QualityMap(np.zeros((2, 2)), "lpips")
