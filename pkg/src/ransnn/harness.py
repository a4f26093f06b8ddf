"""Experiment harness: benchmark configuration, single runs, parameter
sweeps, method comparison, and metrics emission.

A run is fully determined by its configuration (including the seed), so
re-running one reproduces every number except wall-clock timings. Dataset
files are user-supplied IDX files, located either by explicit paths or under
the directory named by the RANSNN_DATA_DIR environment variable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .encoding import EncoderConfig
from .idx import LabeledDataset, load_dataset, make_batches
from .network import (LifParams, Normal, Uniform, WeightDistribution,
                      fan_in_uniform, init_weights)
from .numerics import ENCODE_TEST_STREAM, ENCODE_TRAIN_STREAM
from .readout import (FeatureCache, IterationMetrics, TrainConfig, evaluate,
                      extract_features, feature_digest, train_readout)
from .sg import init_sg_model, train_sg

DATASETS = ("mnist", "fmnist", "kmnist", "emnist")
METHODS = ("ransnn", "sg")
SWEEP_PARAMETERS = ("beta", "hidden_size", "time_steps", "dist_param")
DATA_DIR_ENV = "RANSNN_DATA_DIR"

# Full held-out evaluation for the baseline means re-simulating the whole
# test selection, so its curves are sampled rather than per-iteration.
SG_EVAL_EVERY = 50

_DATASET_CLASSES = {"mnist": 10, "fmnist": 10, "kmnist": 10, "emnist": 62}
_MNIST_STYLE_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
_DATASET_FILES = {
    "mnist": _MNIST_STYLE_FILES,
    "fmnist": _MNIST_STYLE_FILES,
    "kmnist": _MNIST_STYLE_FILES,
    "emnist": {
        "train_images": "emnist-byclass-train-images-idx3-ubyte",
        "train_labels": "emnist-byclass-train-labels-idx1-ubyte",
        "test_images": "emnist-byclass-test-images-idx3-ubyte",
        "test_labels": "emnist-byclass-test-labels-idx1-ubyte",
    },
}


class ConfigError(ValueError):
    """A configuration that cannot describe a runnable experiment."""


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class DataPaths:
    """Explicit dataset file locations; unset roles fall back to the
    standard filenames under the data directory."""

    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark run. Defaults reproduce the standard setup: one hidden
    layer of 2000 neurons, beta 0.95, threshold 1.0, 25 time steps, fan-in
    uniform weights, 400 train / 50 test batches of 128."""

    dataset: str = "mnist"
    method: str = "ransnn"
    hidden_sizes: tuple[int, ...] = (2000,)
    beta: float = 0.95
    u_thr: float = 1.0
    time_steps: int = 25
    dist: WeightDistribution | None = None  # None -> U(-sqrt(6/n_in), +sqrt(6/n_in))
    train_batches: int = 400
    test_batches: int = 50
    batch_size: int = 128
    seed: int | None = None
    adam: AdamConfig = AdamConfig()
    paths: DataPaths = DataPaths()

    def validate(self) -> None:
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}, expected one of {DATASETS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden_sizes must be nonempty positive ints, got {self.hidden_sizes}")
        if self.method == "sg" and len(self.hidden_sizes) != 1:
            raise ConfigError("the sg baseline supports exactly one hidden layer")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.u_thr > 0:
            raise ConfigError(f"u_thr must be positive, got {self.u_thr}")
        if self.time_steps < 1:
            raise ConfigError(f"time_steps must be >= 1, got {self.time_steps}")
        if self.train_batches < 1 or self.test_batches < 1:
            raise ConfigError("train_batches and test_batches must be >= 1")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seed is None:
            raise ConfigError("seed must be set (config file field or --seed)")


_DIST_LITERAL = re.compile(
    r"^\s*(U|N|uniform|normal)\s*\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$", re.IGNORECASE)


def parse_dist(value) -> WeightDistribution | None:
    """Accept a distribution as None, an instance, a literal like
    "U(-0.05,0.05)" / "N(0,0.05)", or a JSON object {"kind": ...}."""
    if value is None or isinstance(value, (Uniform, Normal)):
        return value
    if isinstance(value, str):
        m = _DIST_LITERAL.match(value)
        if not m:
            raise ConfigError(
                f"cannot parse distribution literal {value!r}; expected "
                "U(low,high) or N(mean,std)")
        kind, a, b = m.group(1).lower()[0], float(m.group(2)), float(m.group(3))
        try:
            return Uniform(a, b) if kind == "u" else Normal(a, b)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if isinstance(value, dict):
        kind = value.get("kind")
        try:
            if kind == "uniform":
                return Uniform(float(value["low"]), float(value["high"]))
            if kind == "normal":
                return Normal(float(value["mean"]), float(value["std"]))
        except KeyError as exc:
            raise ConfigError(f"distribution object missing field {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"distribution kind must be 'uniform' or 'normal', got {kind!r}")
    raise ConfigError(f"cannot interpret {value!r} as a weight distribution")


def dist_to_json(dist: WeightDistribution | None):
    if dist is None:
        return None
    if isinstance(dist, Uniform):
        return {"kind": "uniform", "low": dist.low, "high": dist.high}
    return {"kind": "normal", "mean": dist.mean, "std": dist.std}


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a flat mapping whose keys are exactly the
    ExperimentConfig field names; unknown keys are rejected."""
    unknown = set(data) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    kwargs = dict(data)
    try:
        if "hidden_sizes" in kwargs:
            kwargs["hidden_sizes"] = tuple(int(h) for h in kwargs["hidden_sizes"])
        if "dist" in kwargs:
            kwargs["dist"] = parse_dist(kwargs["dist"])
        if "adam" in kwargs and kwargs["adam"] is not None:
            adam = kwargs["adam"]
            bad = set(adam) - {f.name for f in dataclasses.fields(AdamConfig)}
            if bad:
                raise ConfigError(f"unknown adam fields: {sorted(bad)}")
            kwargs["adam"] = AdamConfig(**{k: float(v) for k, v in adam.items()})
        if "paths" in kwargs and kwargs["paths"] is not None:
            paths = kwargs["paths"]
            bad = set(paths) - {f.name for f in dataclasses.fields(DataPaths)}
            if bad:
                raise ConfigError(f"unknown paths fields: {sorted(bad)}")
            kwargs["paths"] = DataPaths(**paths)
        if kwargs.get("seed") is not None:
            kwargs["seed"] = int(kwargs["seed"])
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc


def config_from_file(path) -> ExperimentConfig:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    return config_from_dict(data)


def resolved_config_dict(cfg: ExperimentConfig, dist: WeightDistribution) -> dict:
    """The semantically meaningful fields with the weight distribution made
    explicit; file locations are deliberately excluded so the same experiment
    digests identically on different machines."""
    return {
        "dataset": cfg.dataset,
        "method": cfg.method,
        "hidden_sizes": list(cfg.hidden_sizes),
        "beta": cfg.beta,
        "u_thr": cfg.u_thr,
        "time_steps": cfg.time_steps,
        "dist": dist_to_json(dist),
        "train_batches": cfg.train_batches,
        "test_batches": cfg.test_batches,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "adam": dataclasses.asdict(cfg.adam),
    }


def config_digest(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def resolve_dataset_paths(cfg: ExperimentConfig) -> dict[str, Path]:
    """Locate the four IDX files for cfg.dataset.

    Explicit paths win; otherwise the standard filename (optionally .gz) is
    searched under <data_dir>/<dataset>/ and <data_dir>/.
    """
    base = data_dir()
    out: dict[str, Path] = {}
    for role, default_name in _DATASET_FILES[cfg.dataset].items():
        explicit = getattr(cfg.paths, role)
        if explicit is not None:
            p = Path(explicit)
            if not p.exists():
                raise FileNotFoundError(f"{role} file not found: {p}")
            out[role] = p
            continue
        candidates = [base / cfg.dataset / default_name,
                      base / cfg.dataset / (default_name + ".gz"),
                      base / default_name,
                      base / (default_name + ".gz")]
        for cand in candidates:
            if cand.exists():
                out[role] = cand
                break
        else:
            raise FileNotFoundError(
                f"no {role} file for dataset {cfg.dataset!r}: looked for "
                f"{default_name}[.gz] under {base / cfg.dataset} and {base} "
                f"(set {DATA_DIR_ENV} or the paths config field)")
    return out


@dataclass
class RunRecord:
    """Everything one run produced: identity, timings, and the curve.

    training_seconds excludes feature extraction (reported separately) and
    metric evaluation; total_seconds is the whole run including data loading.
    """

    run_id: str
    dataset: str
    method: str
    final_accuracy: float
    feature_extraction_seconds: float
    training_seconds: float
    total_seconds: float
    metrics: list[IterationMetrics]
    config: dict


def _load_datasets(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    paths = resolve_dataset_paths(cfg)
    num_classes = _DATASET_CLASSES[cfg.dataset]
    ds_train = load_dataset(paths["train_images"], paths["train_labels"], num_classes)
    ds_test = load_dataset(paths["test_images"], paths["test_labels"], num_classes)
    return ds_train, ds_test


def _cached_extract(net, enc, ds, master_seed, indices, stream_base, dataset_id,
                    cache_dir) -> FeatureCache:
    digest = feature_digest(net, enc, dataset_id, master_seed, stream_base)
    if cache_dir is not None:
        path = Path(cache_dir) / f"{digest:016x}.rsnnfc"
        if path.exists():
            cache = FeatureCache.load(path, expected_digest=digest)
            # The on-disk layout carries no class count; the dataset does.
            cache.num_classes = ds.num_classes
            return cache
    cache = extract_features(net, enc, ds, master_seed, indices=indices,
                             stream_base=stream_base, dataset_id=dataset_id)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        cache.save(Path(cache_dir) / f"{digest:016x}.rsnnfc")
    return cache


def run_experiment(cfg: ExperimentConfig, cache_dir=None) -> RunRecord:
    """Execute the full pipeline for cfg and collect its RunRecord.

    Deterministic given cfg: identical configs reproduce every metric and
    the final accuracy bit-for-bit; only the wall-clock fields vary.
    """
    cfg.validate()
    t_start = time.perf_counter()
    ds_train, ds_test = _load_datasets(cfg)
    n_in = ds_train.images.shape[1]
    dist = cfg.dist if cfg.dist is not None else fan_in_uniform(n_in)
    lif = LifParams(beta=cfg.beta, u_thr=cfg.u_thr)
    enc = EncoderConfig(time_steps=cfg.time_steps, normalization="divide_by_max")
    resolved = resolved_config_dict(cfg, dist)
    run_id = config_digest(resolved)

    train_sel = make_batches(ds_train, cfg.batch_size, cfg.train_batches, cfg.seed).order
    test_sel = make_batches(ds_test, cfg.batch_size, cfg.test_batches, cfg.seed).order

    if cfg.method == "ransnn":
        net = init_weights((n_in, *cfg.hidden_sizes), dist, cfg.seed, lif=lif)
        t0 = time.perf_counter()
        cache_train = _cached_extract(net, enc, ds_train, cfg.seed, train_sel,
                                      ENCODE_TRAIN_STREAM, f"{cfg.dataset}/train",
                                      cache_dir)
        cache_test = _cached_extract(net, enc, ds_test, cfg.seed, test_sel,
                                     ENCODE_TEST_STREAM, f"{cfg.dataset}/test",
                                     cache_dir)
        feature_seconds = time.perf_counter() - t0
        tcfg = TrainConfig(epochs=1, lr=cfg.adam.lr, beta1=cfg.adam.beta1,
                           beta2=cfg.adam.beta2, eps=cfg.adam.eps,
                           batch_size=cfg.batch_size, seed=cfg.seed)
        model, metrics = train_readout(cache_train, cache_test, tcfg)
        final_accuracy = evaluate(model, cache_test)
    else:
        sgm = init_sg_model(n_in, cfg.hidden_sizes[0], _DATASET_CLASSES[cfg.dataset],
                            cfg.seed, lif=lif, dist=dist)
        tcfg = TrainConfig(epochs=1, lr=cfg.adam.lr, beta1=cfg.adam.beta1,
                           beta2=cfg.adam.beta2, eps=cfg.adam.eps,
                           batch_size=cfg.batch_size, seed=cfg.seed,
                           eval_every=SG_EVAL_EVERY)
        feature_seconds = 0.0
        model, metrics = train_sg(sgm, ds_train, ds_test, enc, tcfg,
                                  train_indices=train_sel,
                                  test_indices=test_sel)
        final_accuracy = metrics[-1].test_accuracy

    training_seconds = metrics[-1].elapsed if metrics else 0.0
    total_seconds = time.perf_counter() - t_start
    return RunRecord(run_id=run_id, dataset=cfg.dataset, method=cfg.method,
                     final_accuracy=final_accuracy,
                     feature_extraction_seconds=feature_seconds,
                     training_seconds=training_seconds,
                     total_seconds=total_seconds, metrics=metrics,
                     config=resolved)


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, the values to try, and repeats per value (each
    repeat offsets the seed so error bars reflect RNG variability)."""

    parameter: str
    values: tuple
    repeats: int = 3

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(
                f"unknown sweep parameter {self.parameter!r}, expected one of {SWEEP_PARAMETERS}")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")


def apply_sweep_value(cfg: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    if parameter == "beta":
        return replace(cfg, beta=float(value))
    if parameter == "hidden_size":
        return replace(cfg, hidden_sizes=(int(value),))
    if parameter == "time_steps":
        return replace(cfg, time_steps=int(value))
    if parameter == "dist_param":
        return replace(cfg, dist=parse_dist(value))
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


def run_sweep(base: ExperimentConfig, sweep: SweepSpec, cache_dir=None) -> list[RunRecord]:
    """One run per (value, repeat), varying only the swept parameter and the
    repeat's seed offset. Records are ordered value-major, repeat-minor."""
    base.validate()
    records = []
    for value in sweep.values:
        for r in range(sweep.repeats):
            cfg = apply_sweep_value(base, sweep.parameter, value)
            cfg = replace(cfg, seed=base.seed + r)
            records.append(run_experiment(cfg, cache_dir=cache_dir))
    return records


def summarize_sweep(records: list[RunRecord], sweep: SweepSpec) -> list[dict]:
    """Mean/std of final accuracy per swept value (population std)."""
    out = []
    for i, value in enumerate(sweep.values):
        accs = [r.final_accuracy
                for r in records[i * sweep.repeats:(i + 1) * sweep.repeats]]
        out.append({
            "parameter": sweep.parameter,
            "value": str(value),
            "mean_accuracy": float(np.mean(accs)),
            "std_accuracy": float(np.std(accs)),
            "runs": len(accs),
        })
    return out


@dataclass
class MethodComparison:
    """Both methods on the same seed/dataset/topology, plus the ratio of
    the baseline's training time to the readout's."""

    ransnn: RunRecord
    sg: RunRecord
    speedup: float


def compare_methods(cfg_base: ExperimentConfig, cache_dir=None) -> MethodComparison:
    rec_ransnn = run_experiment(replace(cfg_base, method="ransnn"), cache_dir=cache_dir)
    rec_sg = run_experiment(replace(cfg_base, method="sg"), cache_dir=cache_dir)
    denom = rec_ransnn.training_seconds
    speedup = rec_sg.training_seconds / denom if denom > 0 else float("inf")
    return MethodComparison(ransnn=rec_ransnn, sg=rec_sg, speedup=speedup)


CSV_HEADER = ("run_id", "dataset", "method", "iteration", "train_acc",
              "test_acc", "loss", "elapsed_s")


def record_to_dict(record: RunRecord) -> dict:
    d = dataclasses.asdict(record)
    d["metrics"] = [dataclasses.asdict(m) for m in record.metrics]
    return d


def emit_metrics(records: list[RunRecord], path, format: str = "csv") -> None:
    """Write per-iteration curves as CSV rows or mirror the records as JSON."""
    if format == "csv":
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in records:
                for m in rec.metrics:
                    writer.writerow([rec.run_id, rec.dataset, rec.method,
                                     m.iteration, repr(m.train_accuracy),
                                     repr(m.test_accuracy), repr(m.loss),
                                     repr(m.elapsed)])
    elif format == "json":
        with open(path, "w") as fh:
            json.dump([record_to_dict(r) for r in records], fh, indent=2)
    else:
        raise ConfigError(f"unknown metrics format {format!r}, expected csv or json")
