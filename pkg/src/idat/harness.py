"""Dataset ingestion, experiment protocols, reports and model snapshots."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adapt import History, train
from .metrics import ami, ari, average_incremental, backward_transfer, cluster_error, evaluate_incremental_run
from .model import IdatConfig, IdatModel, connected_components
from .predict import predict_batch

ABLATIONS = ("full", "no_dec", "no_inc", "no_all")
ABLATION_LAMBDAS = (2, 500)
DEFAULT_SEED_COUNT = 10


def make_rng(seed: int) -> np.random.Generator:
    """The repo-wide generator: PCG64 seeded with a plain integer."""
    return np.random.Generator(np.random.PCG64(seed))


# -- datasets ------------------------------------------------------------------

@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError(f"features must be a non-empty 2-D matrix, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per feature row is required")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        present = np.unique(self.labels)
        if not np.array_equal(present, np.arange(present.size)):
            raise ValueError("labels must be contiguous integers starting at 0")
        if not self.class_names:
            self.class_names = [str(i) for i in range(present.size)]

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def normalized(self) -> "Dataset":
        """Copy with every feature min-max scaled to [0, 1]."""
        lo = self.features.min(axis=0)
        span = self.features.max(axis=0) - lo
        span[span == 0] = 1.0
        return Dataset((self.features - lo) / span, self.labels.copy(), self.name, list(self.class_names))


def load_csv(path, has_header: bool = True, label_column: int = -1, delimiter: str | None = ",") -> Dataset:
    """Read a numeric CSV whose ``label_column`` holds class labels.

    Labels may be any strings; they are mapped to 0, 1, ... in order of
    first appearance. ``delimiter=None`` splits on runs of whitespace.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        if delimiter is None:
            rows = [line.split() for line in fh if line.strip()]
        else:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(cell.strip() for cell in r)]
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    col = label_column if label_column >= 0 else width + label_column
    if not 0 <= col < width:
        raise ValueError(f"{path}: label column {label_column} out of range for {width} columns")
    first_line = 2 if has_header else 1
    features, raw_labels = [], []
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise ValueError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        try:
            values = [float(cell) for j, cell in enumerate(row) if j != col]
        except ValueError as exc:
            raise ValueError(f"{path}: row {line} has a non-numeric feature ({exc})") from None
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"{path}: row {line} has a non-finite feature")
        features.append(values)
        raw_labels.append(row[col].strip())
    mapping: dict[str, int] = {}
    labels = [mapping.setdefault(lab, len(mapping)) for lab in raw_labels]
    return Dataset(np.array(features), np.array(labels), path.stem, list(mapping))


def write_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(dataset.features.shape[1])] + ["label"])
        for x, lab in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [dataset.class_names[lab]])


# -- configuration and reports ----------------------------------------------------

@dataclass
class ExperimentConfig:
    protocol: str = "stationary"
    seeds: list = field(default_factory=lambda: list(range(DEFAULT_SEED_COUNT)))
    ablation: str = "full"
    lambda_init: int = 2
    shuffle: bool = True
    output_path: str | None = None
    normalize: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.protocol not in ("stationary", "nonstationary"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; expected one of {list(ABLATIONS)}")
        if self.lambda_init < 2:
            raise ValueError(f"lambda_init must be >= 2, got {self.lambda_init}")
        self.seeds = [int(s) for s in self.seeds]

    def model_config(self) -> IdatConfig:
        return IdatConfig.for_ablation(self.ablation, self.lambda_init)


SEED_METRICS = ("ari", "ami", "n_nodes", "n_clusters", "total_nodes", "total_components", "cluster_error")
INCREMENTAL_METRICS = ("ai_ari", "ai_ami", "bwt_ari", "bwt_ami")


def aggregate(per_seed: list[dict], keys) -> dict:
    """Mean and sample standard deviation (ddof=1; 0 for one seed) per key."""
    out = {}
    for key in keys:
        vals = np.array([float(entry[key]) for entry in per_seed])
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out[key] = {"mean": float(np.mean(vals)), "std": std}
    return out


@dataclass
class RunReport:
    config: dict
    dataset: str
    per_seed: list
    aggregates: dict
    histories: dict

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(data["config"], data["dataset"], data["per_seed"], data["aggregates"], data["histories"])

    def mean(self, key: str) -> float:
        return self.aggregates[key]["mean"]


def _metric_keys(protocol: str) -> tuple:
    return SEED_METRICS + (INCREMENTAL_METRICS if protocol == "nonstationary" else ())


def _build_report(dataset: Dataset, config: ExperimentConfig, per_seed: list[dict]) -> RunReport:
    keys = _metric_keys(config.protocol)
    # traces of the median-ARI seed keep the report small
    order = sorted(range(len(per_seed)), key=lambda i: (per_seed[i]["ari"], per_seed[i]["seed"]))
    pick = per_seed[order[(len(order) - 1) // 2]]
    histories = {"seed": pick["seed"], "lambda": pick.pop("_lambda"), "v_threshold": pick.pop("_v")}
    for entry in per_seed:
        entry.pop("_lambda", None)
        entry.pop("_v", None)
    return RunReport(asdict(config), dataset.name, per_seed, aggregate(per_seed, keys), histories)


def write_report(report, path) -> None:
    """Write one report, or a dict of named reports, as sorted-key JSON."""
    if isinstance(report, RunReport):
        if not report.per_seed:
            raise ValueError("report has no seed entries")
        payload = report.to_dict()
    else:
        if not report or any(not r.per_seed for r in report.values()):
            raise ValueError("report set is empty or has a report without seed entries")
        payload = {"reports": {name: r.to_dict() for name, r in report.items()}}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_report(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "reports" in data:
        return {name: RunReport.from_dict(r) for name, r in data["reports"].items()}
    return RunReport.from_dict(data)


# -- protocols ---------------------------------------------------------------------

def effective_topology(model: IdatModel) -> tuple[int, int]:
    """Nodes and clusters that prediction can reach.

    Prediction matches against active nodes only (all nodes when none is
    active), so immature or demoted nodes never label anything. Returns the
    number of matchable nodes and of components that contain one.
    """
    labels, _ = connected_components(model.edges)
    usable = model.active if model.active.any() else np.ones(model.K, dtype=bool)
    return int(usable.sum()), int(np.unique(labels[usable]).size)


def _topology_stats(model: IdatModel, n_classes: int) -> dict:
    nodes, clusters = effective_topology(model)
    _, total_components = connected_components(model.edges)
    return {
        "n_nodes": nodes,
        "n_clusters": clusters,
        "total_nodes": int(model.K),
        "total_components": int(total_components),
        "cluster_error": cluster_error(clusters, n_classes),
    }


def _stationary_seed(dataset: Dataset, config: ExperimentConfig, seed: int) -> dict:
    start = time.perf_counter()
    rng = make_rng(seed)
    order = rng.permutation(dataset.n) if config.shuffle else np.arange(dataset.n)
    model = IdatModel(config.model_config())
    history = History()
    train(model, dataset.features[order], history)
    pred = predict_batch(model, dataset.features)
    entry = {"seed": seed, "ari": ari(dataset.labels, pred), "ami": ami(dataset.labels, pred)}
    entry.update(_topology_stats(model, dataset.class_count))
    entry["wall_clock_s"] = time.perf_counter() - start
    entry["_lambda"], entry["_v"] = history.lam, history.v_threshold
    return entry


def class_stages(dataset: Dataset, rng: np.random.Generator, shuffle: bool = True) -> tuple[list[int], list[np.ndarray]]:
    """Random class order and the (shuffled) sample indices of each stage."""
    order = [int(c) for c in rng.permutation(dataset.class_count)]
    stages = []
    for c in order:
        idx = np.flatnonzero(dataset.labels == c)
        stages.append(rng.permutation(idx) if shuffle else idx)
    return order, stages


def _nonstationary_seed(dataset: Dataset, config: ExperimentConfig, seed: int) -> dict:
    start = time.perf_counter()
    rng = make_rng(seed)
    order, stages = class_stages(dataset, rng, config.shuffle)
    model = IdatModel(config.model_config())
    history = History()
    stage_preds = []
    for idx in stages:
        train(model, dataset.features[idx], history)
        stage_preds.append(predict_batch(model, dataset.features))
    final = stage_preds[-1]
    rec_ari = evaluate_incremental_run(stage_preds, dataset.labels, order, "ari")
    rec_ami = evaluate_incremental_run(stage_preds, dataset.labels, order, "ami")
    entry = {
        "seed": seed,
        "class_order": order,
        "ari": ari(dataset.labels, final),
        "ami": ami(dataset.labels, final),
        "ai_ari": average_incremental(rec_ari.stage_scores),
        "ai_ami": average_incremental(rec_ami.stage_scores),
        "bwt_ari": backward_transfer(rec_ari),
        "bwt_ami": backward_transfer(rec_ami),
    }
    entry.update(_topology_stats(model, dataset.class_count))
    entry["wall_clock_s"] = time.perf_counter() - start
    entry["_lambda"], entry["_v"] = history.lam, history.v_threshold
    return entry


def _run_seeds(worker, dataset: Dataset, config: ExperimentConfig) -> list[dict]:
    if config.jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(worker, dataset, config, s) for s in config.seeds]
            return [f.result() for f in futures]
    return [worker(dataset, config, s) for s in config.seeds]


def _prepare(dataset: Dataset, config: ExperimentConfig) -> Dataset:
    return dataset.normalized() if config.normalize else dataset


def run_stationary(dataset: Dataset, config: ExperimentConfig) -> RunReport:
    """Shuffle, train on everything, and score predictions on the same data."""
    data = _prepare(dataset, config)
    return _build_report(data, config, _run_seeds(_stationary_seed, data, config))


def run_nonstationary(dataset: Dataset, config: ExperimentConfig) -> RunReport:
    """Present classes one at a time in a seed-dependent order."""
    if dataset.class_count < 2:
        raise ValueError("the class-incremental protocol needs at least two classes")
    data = _prepare(dataset, config)
    return _build_report(data, config, _run_seeds(_nonstationary_seed, data, config))


def run_ablation_suite(dataset: Dataset, config: ExperimentConfig, lambdas=ABLATION_LAMBDAS) -> dict[str, RunReport]:
    """Every ablation variant at every initial interval, on shared seeds.

    Keys look like ``"no_inc@500"``.
    """
    reports = {}
    for lam in lambdas:
        for name in ABLATIONS:
            cfg = ExperimentConfig(**{**asdict(config), "protocol": "nonstationary",
                                      "ablation": name, "lambda_init": lam})
            reports[f"{name}@{lam}"] = run_nonstationary(dataset, cfg)
    return reports


# -- model snapshots ---------------------------------------------------------------

def model_to_dict(model: IdatModel) -> dict:
    state = model.adaptive
    return {
        "config": asdict(model.config),
        "dim": model.dim,
        "samples_seen": model.samples_seen,
        "positions": model.positions.tolist(),
        "counts": model.counts.tolist(),
        "sigmas": model.sigmas.tolist(),
        "active": model.active.tolist(),
        "inactivity": model.inactivity.tolist(),
        "created_at": model.created_at.tolist(),
        "edges": model.edges.astype(int).tolist(),
        "candidates": model.candidates.tolist(),
        "prev_counts": model.prev_counts.tolist(),
        "prev_candidates": model.prev_candidates.tolist(),
        "scale": {
            "count": model.scale.count,
            "mean": None if model.scale.mean is None else model.scale.mean.tolist(),
            "m2": None if model.scale.m2 is None else model.scale.m2.tolist(),
        },
        "adaptive": {
            "lam": state.lam, "v_threshold": state.v_threshold, "q": state.q, "r": state.r,
            "buffer": [x.tolist() for x in state.buffer],
        },
    }


def model_from_dict(data: dict) -> IdatModel:
    model = IdatModel(IdatConfig(**data["config"]))
    k = len(data["counts"])
    dim = data["dim"]
    model.samples_seen = int(data["samples_seen"])
    if dim is not None:
        model.dim = int(dim)
        model._alloc(model.dim, max(8, k))
        model.K = k
        model._pos[:k] = np.array(data["positions"], dtype=float).reshape(k, model.dim)
        model._counts[:k] = data["counts"]
        model._sigma[:k] = data["sigmas"]
        model._active[:k] = data["active"]
        model._inactivity[:k] = data["inactivity"]
        model._created[:k] = data["created_at"]
        model._prev_counts[:k] = data["prev_counts"]
        if k:
            model._edges[:k, :k] = np.array(data["edges"], dtype=bool)
            model._cand[:k, :k] = np.array(data["candidates"], dtype=np.int64)
            model._prev_cand[:k, :k] = np.array(data["prev_candidates"], dtype=np.int64)
        model.recount_candidates()
    sc = data["scale"]
    model.scale.count = int(sc["count"])
    model.scale.mean = None if sc["mean"] is None else np.array(sc["mean"], dtype=float)
    model.scale.m2 = None if sc["m2"] is None else np.array(sc["m2"], dtype=float)
    ad = data["adaptive"]
    model.adaptive.lam = int(ad["lam"])
    model.adaptive.v_threshold = float(ad["v_threshold"])
    model.adaptive.q = float(ad["q"])
    model.adaptive.r = int(ad["r"])
    model.adaptive.buffer.extend(np.array(x, dtype=float) for x in ad["buffer"])
    return model


def save_model(model: IdatModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> IdatModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_model(dataset: Dataset, config: ExperimentConfig, seed: int) -> IdatModel:
    """Train one model the way the stationary protocol does for ``seed``."""
    data = _prepare(dataset, config)
    order = make_rng(seed).permutation(data.n) if config.shuffle else np.arange(data.n)
    return train(IdatModel(config.model_config()), data.features[order])
