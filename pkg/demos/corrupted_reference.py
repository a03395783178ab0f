"""End to end on a small synthetic corpus: generator, maps, pooling, protocol.

The sources are themselves degraded (noise or blur), so a plain
full-reference score against the source misjudges the transcodes.  The
pooling network sees both the transcode's FR map and the generator's map
of the source.  Takes a few minutes on one core.

    python3 demos/corrupted_reference.py
"""

import numpy as np

from crvqa import harness, stats
from crvqa.distort import random_recipe, synthesize
from crvqa.maps import vif_map
from crvqa.nn import TrainConfig, train_generator
from crvqa.synthetic import procedural_texture, synthetic_corpus

xs, ys = [], []
for i in range(80):
    t = procedural_texture(32, seed=i)
    d, _ = synthesize(t, random_recipe(i))
    xs.append(d)
    ys.append(vif_map(t, d).values)
gen = train_generator(np.array(xs), np.array(ys), TrainConfig(epochs=6, batch_size=8)).model

corpus, _ = synthetic_corpus(n_sources=10, size=48, frames=6, seed=1)
items = harness.prepare_items(corpus, gen, "vif", frame_count=3, factor=2)
naive = np.array([it.trans_maps.mean() for it in items])
mos = np.array([it.mos for it in items])
print(f"SROCC of mean FR-VIF against the source, all videos: {stats.srocc(naive, mos):.3f}")

cfg = harness.ExperimentConfig(repeats=2, epochs=15, batch_size=16, width=8, settings=("full", "no_source_maps"))
report = harness.run_experiment(cfg, items)
for setting, agg in report.aggregate().items():
    print(f"{setting:<16} SROCC {agg['srocc']['mean']:.3f} +- {agg['srocc']['std']:.3f}")
