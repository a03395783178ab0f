"""Pick clips whose SI / TI / CPBD histograms are close to uniform.

Builds a small pool of procedural clips with varied motion and blur,
measures their feature triples and selects a subset by local search,
comparing the objective with a random pick.

    python3 demos/subset_sampling.py
"""

import numpy as np

from crvqa.distort import gaussian_blur
from crvqa.features import feature_triple
from crvqa.media import VideoClip, to_uint8
from crvqa.sampling import SubsetProblem, bin_matrices, objective, solve_local_search
from crvqa.synthetic import procedural_clip

rng = np.random.default_rng(0)
feats = []
for k in range(40):
    clip = procedural_clip(64, 6, seed=k, velocity=(int(rng.integers(-3, 4)), int(rng.integers(-3, 4))))
    sigma = rng.uniform(0, 2.5)
    if sigma > 0.3:
        clip = VideoClip(np.stack([to_uint8(gaussian_blur(f, sigma)) for f in clip.luma]))
    t = feature_triple(clip, sample_count=3)
    feats.append([t.si, t.ti, t.blur])

problem = SubsetProblem(np.array(feats), bins=4, subset_size=12)
sel = solve_local_search(problem, seed=0)
B = bin_matrices(problem)
x = np.zeros(40, int)
x[rng.choice(40, 12, replace=False)] = 1
print("selected clips:", sel.indices)
print(f"objective: local search {sel.objective:.0f}, random pick {objective(x, B, problem.target_pmf, 12):.0f}")
