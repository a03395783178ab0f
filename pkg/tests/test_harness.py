import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crvqa.harness import (
    ExperimentConfig, RunReport, box_stats, emit_report, load_manifest, make_splits, prepare_items,
    report_from_json, run_experiment,
)
from crvqa.nn import build_generator
from crvqa.synthetic import synthetic_corpus, write_corpus


@settings(max_examples=100, deadline=None)
@given(st.integers(5, 60), st.integers(0, 2**32 - 1))
def test_splits_partition_sources(n, seed):
    ids = [f"s{i}" for i in range(n)]
    train, val, test = make_splits(ids, (0.6, 0.2, 0.2), seed)
    assert sorted(train + val + test) == sorted(ids)
    assert len(val) == int(np.floor(0.2 * n + 1e-9)) == len(test)
    assert make_splits(ids, (0.6, 0.2, 0.2), seed) == (train, val, test)


def test_splits_collapse_repeated_ids():
    ids = ["a", "a", "b", "c", "d", "e", "e"]
    train, val, test = make_splits(ids, seed=3)
    assert len(train) + len(val) + len(test) == 5


def test_splits_need_five_sources():
    with pytest.raises(ValueError):
        make_splits(["a", "b", "c", "d"])


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(ratios=(0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        ExperimentConfig(settings=("full", "bogus"))


def test_box_stats_oracle():
    v = [4.0, 1.0, 3.0, 2.0]
    # linear interpolation between order statistics at (n - 1) * q
    assert box_stats(v) == {"q25": 1.75, "median": 2.5, "q75": 3.25, "mean": 2.5}


@pytest.fixture(scope="module")
def small_items(tmp_path_factory):
    corpus, _ = synthetic_corpus(n_sources=5, qualities=(60, 10), size=32, frames=2, seed=1)
    path = write_corpus(corpus, tmp_path_factory.mktemp("corpus"))
    loaded = load_manifest(path)
    return prepare_items(loaded, build_generator(1, 2), "vif", frame_count=2)


def test_manifest_round_trip(small_items):
    assert len(small_items) == 10
    it = small_items[0]
    assert it.src_maps.shape == (2, 1, 32, 32)
    assert it.trans_maps.shape == (2, 1, 32, 32)
    src, trans = it.inputs("no_source_maps")
    assert src is it.src_frames and trans is it.trans_maps


def test_manifest_length_mismatch(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps([{"source": "a.y4m", "transcoded": ["b.y4m"], "mos": []}]))
    with pytest.raises(ValueError):
        load_manifest(tmp_path / "manifest.json")


def test_experiment_is_deterministic_and_reports(small_items):
    cfg = ExperimentConfig(repeats=2, epochs=2, width=2, settings=("full", "no_source_maps"), seed=4)
    a = run_experiment(cfg, small_items)
    b = run_experiment(cfg, small_items)
    assert a.rows == b.rows
    assert len(a.rows) == 4
    agg = a.aggregate()
    assert set(agg) == {"full", "no_source_maps"}
    full = [r["srocc"] for r in a.rows if r["setting"] == "full"]
    assert agg["full"]["srocc"]["mean"] == pytest.approx(np.mean(full))
    assert agg["full"]["srocc"]["std"] == pytest.approx(np.std(full))

    back = report_from_json(emit_report(a, "json"))
    assert back.rows == a.rows
    lines = emit_report(a, "csv").strip().splitlines()
    assert lines[0] == "setting,repeat,srocc,plcc,rmse,best_epoch" and len(lines) == 5
    plot = json.loads(emit_report(a, "plotdata"))
    assert set(plot["full"]) == {"srocc", "plcc", "rmse"}
    with pytest.raises(ValueError):
        emit_report(a, "xml")


def test_repeats_share_splits_across_settings(small_items):
    cfg = ExperimentConfig(repeats=1, epochs=1, width=2, settings=("full", "no_transcoded_maps"))
    rows = run_experiment(cfg, small_items).rows
    assert rows[0]["test_sources"] == rows[1]["test_sources"]


def test_empty_report_aggregate():
    assert RunReport().aggregate() == {}
