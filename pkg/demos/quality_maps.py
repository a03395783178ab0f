"""Full-reference maps on a procedural texture under noise and compression.

    python3 demos/quality_maps.py
"""

from crvqa.distort import block_dct_compress, gaussian_noise
from crvqa.maps import mdsi_map, ms_ssim, psnr, ssim_map, vif_map
from crvqa.synthetic import procedural_texture

ref = procedural_texture(128, seed=3)
print(f"{'distortion':<14}{'PSNR':>8}{'SSIM':>8}{'MS-SSIM':>9}{'MDSI':>8}{'VIF':>8}")
cases = [("noise 5", gaussian_noise(ref, 5, seed=1)), ("noise 20", gaussian_noise(ref, 20, seed=1)),
         ("dct q80", block_dct_compress(ref, 80)), ("dct q10", block_dct_compress(ref, 10))]
for name, dist in cases:
    print(f"{name:<14}{psnr(ref, dist):8.2f}{ssim_map(ref, dist)[1]:8.3f}{ms_ssim(ref, dist):9.3f}"
          f"{mdsi_map(ref, dist).mean():8.3f}{vif_map(ref, dist).mean():8.3f}")
