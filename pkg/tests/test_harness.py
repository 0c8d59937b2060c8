import json

import numpy as np
import pytest

from helpers import assert_state_equal, edge_matrix, make_model
from oracles import pair_ari

import idat.harness as harness
from idat.adapt import train
from idat.harness import (
    Dataset,
    ExperimentConfig,
    RunReport,
    aggregate,
    class_stages,
    effective_topology,
    fit_model,
    load_csv,
    load_model,
    make_rng,
    read_report,
    run_ablation_suite,
    run_nonstationary,
    run_stationary,
    save_model,
    write_csv,
    write_report,
)
from idat.model import IdatConfig, IdatModel
from idat.predict import predict_batch

IRIS_EXCERPT = """sepal_length,sepal_width,petal_length,petal_width,species
5.1,3.5,1.4,0.2,setosa
7.0,3.2,4.7,1.4,versicolor
6.3,3.3,6.0,2.5,virginica
4.9,3.0,1.4,0.2,setosa
"""


def _blobs(per=500, gap=10.0, d=2, seed=0, classes=2):
    rng = make_rng(seed)
    parts, labels = [], []
    for c in range(classes):
        shift = np.zeros(d)
        shift[0] = gap * c
        parts.append(rng.normal(0, 1, (per, d)) + shift)
        labels.append(np.full(per, c))
    return Dataset(np.vstack(parts), np.concatenate(labels), "blobs")


def _strip_clock(report: dict) -> dict:
    out = json.loads(json.dumps(report))
    for entry in out["per_seed"]:
        entry.pop("wall_clock_s")
    out["aggregates"].pop("wall_clock_s", None)
    # worker count is an execution detail echoed in the config
    out["config"].pop("jobs")
    return out


# -- loading -----------------------------------------------------------------------

def test_iris_excerpt(tmp_path):
    p = tmp_path / "iris.csv"
    p.write_text(IRIS_EXCERPT)
    ds = load_csv(p)
    assert ds.features.shape == (4, 4)
    assert ds.labels.tolist() == [0, 1, 2, 0]
    assert ds.class_count == 3
    assert ds.class_names == ["setosa", "versicolor", "virginica"]


def test_ragged_row_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,label\n1,2,x\n3,y\n")
    with pytest.raises(ValueError, match="row 3"):
        load_csv(p)


def test_non_numeric_feature_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2,x\n3,oops,y\n")
    with pytest.raises(ValueError, match="row 2"):
        load_csv(p, has_header=False)


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")
    p = tmp_path / "empty.csv"
    p.write_text("a,b,label\n")
    with pytest.raises(ValueError):
        load_csv(p)


def test_label_column_and_whitespace(tmp_path):
    p = tmp_path / "seeds.txt"
    p.write_text("1 15.26\t14.84\n2   14.88 14.57\n1 14.29 14.09\n")
    ds = load_csv(p, has_header=False, label_column=0, delimiter=None)
    assert ds.features.tolist() == [[15.26, 14.84], [14.88, 14.57], [14.29, 14.09]]
    assert ds.labels.tolist() == [0, 1, 0]


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    ds = Dataset(rng.normal(size=(40, 5)) * 1e3, np.arange(40) % 3, "r")
    p = tmp_path / "r.csv"
    write_csv(ds, p)
    back = load_csv(p)
    np.testing.assert_allclose(back.features, ds.features, rtol=0, atol=1e-12)
    assert back.labels.tolist() == ds.labels.tolist()


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([0]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([0, 2]))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ValueError):
        ExperimentConfig(lambda_init=1)
    with pytest.raises(ValueError):
        ExperimentConfig(protocol="online")
    with pytest.raises(ValueError):
        ExperimentConfig(ablation="no_everything")


def test_rng_is_pcg64_and_reproducible():
    assert isinstance(make_rng(5).bit_generator, np.random.PCG64)
    assert make_rng(5).permutation(20).tolist() == make_rng(5).permutation(20).tolist()


# -- stationary protocol ------------------------------------------------------------------

def test_two_blobs_recovered():
    report = run_stationary(_blobs(), ExperimentConfig(seeds=list(range(10))))
    assert report.mean("ari") >= 0.9
    assert {"ari", "ami", "n_nodes", "n_clusters"} <= set(report.per_seed[0])


def test_repeated_point_is_degenerate_but_runs():
    ds = Dataset(np.ones((60, 3)), np.zeros(60, dtype=int), "same")
    report = run_stationary(ds, ExperimentConfig(seeds=[0, 1]))
    for entry in report.per_seed:
        assert entry["total_nodes"] == 3
        assert entry["ari"] == 1.0


def test_one_repeated_point_gives_three_nodes():
    m = train(IdatModel(), np.ones((40, 2)))
    assert m.K == 3


def test_stationary_is_deterministic_and_worker_independent():
    ds = _blobs(per=60)
    a = run_stationary(ds, ExperimentConfig(seeds=[3, 4, 5])).to_dict()
    b = run_stationary(ds, ExperimentConfig(seeds=[3, 4, 5])).to_dict()
    c = run_stationary(ds, ExperimentConfig(seeds=[3, 4, 5], jobs=2)).to_dict()
    assert _strip_clock(a) == _strip_clock(b) == _strip_clock(c)


def test_fit_model_matches_stationary_seed():
    ds = _blobs(per=50)
    cfg = ExperimentConfig(seeds=[9])
    m = fit_model(ds, cfg, 9)
    report = run_stationary(ds, cfg)
    assert report.per_seed[0]["ari"] == pytest.approx(
        pair_ari(ds.labels.tolist(), predict_batch(m, ds.features).tolist()), abs=1e-12)


def test_effective_topology_counts():
    m = make_model([[0.0], [1.0], [5.0], [9.0]], active=[True, False, True, False],
                   edges=edge_matrix(4, [(0, 1)]))
    assert effective_topology(m) == (2, 2)
    none_active = make_model([[0.0], [1.0], [5.0]], edges=edge_matrix(3, [(0, 1)]))
    assert effective_topology(none_active) == (3, 2)


# -- nonstationary protocol ---------------------------------------------------------------

def test_separated_stream_barely_forgets():
    report = run_nonstationary(_blobs(per=150, gap=20.0, classes=3),
                               ExperimentConfig(protocol="nonstationary", seeds=list(range(5))))
    assert report.mean("bwt_ari") >= -0.05
    assert {"ai_ari", "ai_ami", "bwt_ari", "bwt_ami", "class_order"} <= set(report.per_seed[0])


def test_single_class_rejected():
    ds = Dataset(np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10, dtype=int))
    with pytest.raises(ValueError):
        run_nonstationary(ds, ExperimentConfig(protocol="nonstationary", seeds=[0]))


def test_frozen_after_first_stage(monkeypatch):
    ds = _blobs(per=40, gap=15.0)
    calls = []

    def train_first_stage_only(model, samples, history=None):
        calls.append(len(samples))
        if len(calls) == 1:
            return train(model, samples, history)
        for _ in samples:
            history.record(model)
        return model

    monkeypatch.setattr(harness, "train", train_first_stage_only)
    report = run_nonstationary(ds, ExperimentConfig(protocol="nonstationary", seeds=[2]))
    entry = report.per_seed[0]
    # stage-2 predictions equal stage-1 ones, so the first class keeps its score
    assert entry["bwt_ari"] == 0.0 and entry["bwt_ami"] == 0.0
    rng = make_rng(2)
    order, stages = class_stages(ds, rng)
    m = train(IdatModel(IdatConfig()), ds.features[stages[0]])
    pred = predict_batch(m, ds.features)
    first = ds.labels == order[0]
    seen_ari = pair_ari(ds.labels[first].tolist(), pred[first].tolist())
    final_ari = pair_ari(ds.labels.tolist(), pred.tolist())
    assert entry["ai_ari"] == pytest.approx((seen_ari + final_ari) / 2, abs=1e-12)


def test_stage_prefix_equals_fresh_training_on_prefix():
    ds = _blobs(per=30, classes=3)
    report = run_nonstationary(ds, ExperimentConfig(protocol="nonstationary", seeds=[1]))
    order, stages = class_stages(ds, make_rng(1))
    assert report.per_seed[0]["class_order"] == order
    staged = IdatModel()
    for c, idx in enumerate(stages):
        train(staged, ds.features[idx])
        fresh = train(IdatModel(), ds.features[np.concatenate(stages[: c + 1])])
        assert_state_equal(staged, fresh, atol=0.0)


# -- ablations -------------------------------------------------------------------------------

def test_ablation_suite_keys_and_histories():
    ds = _blobs(per=40, gap=12.0, classes=3)
    reports = run_ablation_suite(ds, ExperimentConfig(seeds=[0, 1]))
    assert set(reports) == {f"{a}@{lam}" for a in ("full", "no_dec", "no_inc", "no_all") for lam in (2, 500)}
    for lam in (2, 500):
        h = reports[f"no_all@{lam}"].histories
        assert set(h["lambda"]) == {lam} and set(h["v_threshold"]) == {0.0}
        dec = reports[f"no_dec@{lam}"].histories["lambda"]
        assert all(b >= a for a, b in zip(dec, dec[1:]))
    assert all(r.config["protocol"] == "nonstationary" for r in reports.values())


def test_full_beats_frozen_vigilance_on_drift():
    rng = make_rng(7)
    centers = rng.normal(0, 10, (4, 3))
    x = np.vstack([rng.normal(0, 1, (100, 3)) + c for c in centers])
    ds = Dataset(x, np.repeat(np.arange(4), 100), "drift")
    seeds = list(range(10))
    full = run_nonstationary(ds, ExperimentConfig(protocol="nonstationary", seeds=seeds))
    frozen = run_nonstationary(ds, ExperimentConfig(protocol="nonstationary", seeds=seeds, ablation="no_all"))
    assert full.mean("ari") >= frozen.mean("ari")


# -- reports ---------------------------------------------------------------------------------

def test_report_round_trip(tmp_path):
    report = run_stationary(_blobs(per=30), ExperimentConfig(seeds=[0, 1, 2]))
    p = tmp_path / "r.json"
    write_report(report, p)
    assert read_report(p).to_dict() == json.loads(json.dumps(report.to_dict()))
    text = p.read_text()
    assert text == json.dumps(json.loads(text), sort_keys=True, indent=2) + "\n"


def test_report_set_round_trip(tmp_path):
    ds = _blobs(per=30)
    reports = {"a": run_stationary(ds, ExperimentConfig(seeds=[0])),
               "b": run_stationary(ds, ExperimentConfig(seeds=[1]))}
    p = tmp_path / "set.json"
    write_report(reports, p)
    back = read_report(p)
    assert set(back) == {"a", "b"} and back["b"].per_seed[0]["seed"] == 1


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_report(RunReport({}, "x", [], {}, {}), tmp_path / "x.json")
    with pytest.raises(ValueError):
        write_report({}, tmp_path / "x.json")


def test_aggregates_recompute_from_file(tmp_path):
    report = run_nonstationary(_blobs(per=30, classes=3), ExperimentConfig(protocol="nonstationary", seeds=[0, 1, 2, 3]))
    p = tmp_path / "r.json"
    write_report(report, p)
    data = json.loads(p.read_text())
    for key, stats in data["aggregates"].items():
        vals = [e[key] for e in data["per_seed"]]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
        assert stats["mean"] == pytest.approx(mean, abs=1e-12)
        assert stats["std"] == pytest.approx(var ** 0.5, abs=1e-12)


def test_aggregate_single_seed_has_zero_std():
    assert aggregate([{"ari": 0.5}], ["ari"]) == {"ari": {"mean": 0.5, "std": 0.0}}


def test_nonstationary_is_deterministic():
    ds = _blobs(per=30, classes=3)
    cfg = ExperimentConfig(protocol="nonstationary", seeds=[5, 6])
    assert _strip_clock(run_nonstationary(ds, cfg).to_dict()) == _strip_clock(run_nonstationary(ds, cfg).to_dict())


# -- model snapshots -------------------------------------------------------------------------

def test_model_save_load_round_trip(tmp_path):
    ds = _blobs(per=50)
    m = fit_model(ds, ExperimentConfig(), 0)
    p = tmp_path / "m.json"
    save_model(m, p)
    back = load_model(p)
    assert_state_equal(m, back, atol=0.0)
    np.testing.assert_array_equal(predict_batch(back, ds.features), predict_batch(m, ds.features))
    # training continues identically after a reload
    extra = make_rng(1).normal(size=(40, 2))
    assert_state_equal(train(m, extra), train(back, extra), atol=0.0)
