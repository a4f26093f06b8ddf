"""Spike-count feature extraction and the trained linear readout.

The hidden network is fixed, so every sample's spike-count vector is computed
exactly once and cached; training then touches only the cached features. That
single pass is what makes readout training orders of magnitude cheaper than
training the whole network. The readout itself is a linear map plus softmax,
trained with Adam on mean cross-entropy.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import EncoderConfig, encode_sample
from .idx import LabeledDataset
from .network import NetworkTopology, accumulate_spikes, simulate_forward
from .numerics import (AdamState, ENCODE_TRAIN_STREAM, PROB_FLOOR, Rng,
                       adam_step, softmax)

CACHE_MAGIC = b"RSNNFC01"


def feature_digest(net: NetworkTopology, enc: EncoderConfig, dataset_id: str,
                   master_seed: int, stream_base: int) -> int:
    """64-bit fingerprint of everything that determines a feature cache.

    Two caches with equal digests were produced by the same network seed and
    topology, distribution, LIF constants, encoder settings, dataset split,
    and encoding streams, so reusing one in place of re-simulation is safe.
    """
    parts = [
        f"seed={net.seed}",
        f"sizes={net.layer_sizes}",
        f"dist={net.dist!r}",
        "lif=" + ";".join(f"{p.beta!r},{p.u_thr!r}" for p in net.params),
        f"T={enc.time_steps}",
        f"norm={enc.normalization}",
        f"dataset={dataset_id}",
        f"master_seed={master_seed}",
        f"stream_base={stream_base}",
    ]
    h = hashlib.blake2b("|".join(parts).encode(), digest_size=8)
    return struct.unpack("<Q", h.digest())[0]


@dataclass
class FeatureCache:
    """Per-sample spike counts for one dataset split under one fixed network.

    features is (num_samples, n_L) uint16 with entries in [0, time_steps];
    source_config_digest fingerprints the producing configuration so a stale
    cache cannot silently stand in for a different one.
    """

    features: np.ndarray
    labels: np.ndarray
    time_steps: int
    source_config_digest: int
    num_classes: int

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def save(self, path) -> None:
        """Write the flat binary layout: magic, four little-endian u64
        fields (num_samples, n_L, T, digest), u16 features row-major, then
        u16 labels."""
        n, f = self.features.shape
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 0xFFFF):
            raise ValueError("labels do not fit the u16 on-disk layout")
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<QQQQ", n, f, self.time_steps,
                                 self.source_config_digest))
            fh.write(self.features.astype("<u2").tobytes())
            fh.write(self.labels.astype("<u2").tobytes())

    @classmethod
    def load(cls, path, expected_digest: int | None = None) -> "FeatureCache":
        raw = Path(path).read_bytes()
        if raw[:8] != CACHE_MAGIC:
            raise ValueError(f"{path}: not a feature cache (bad magic)")
        n, f, t, digest = struct.unpack("<QQQQ", raw[8:40])
        if expected_digest is not None and digest != expected_digest:
            raise ValueError(
                f"{path}: cache digest {digest:#x} does not match expected "
                f"{expected_digest:#x}; it was built from a different configuration")
        body = raw[40:]
        need = 2 * n * f + 2 * n
        if len(body) != need:
            raise ValueError(f"{path}: truncated cache (have {len(body)} payload "
                             f"bytes, need {need})")
        feats = np.frombuffer(body[:2 * n * f], dtype="<u2").reshape(n, f)
        labels = np.frombuffer(body[2 * n * f:], dtype="<u2").astype(np.int64)
        num_classes = int(labels.max()) + 1 if n else 0
        return cls(features=feats.astype(np.uint16), labels=labels,
                   time_steps=int(t), source_config_digest=int(digest),
                   num_classes=num_classes)


def extract_features(net: NetworkTopology, enc: EncoderConfig,
                     dataset: LabeledDataset, master_seed: int, *,
                     indices=None, stream_base: int = ENCODE_TRAIN_STREAM,
                     dataset_id: str = "") -> FeatureCache:
    """Encode, simulate, and count spikes for each selected sample, once.

    Row k of the cache comes from dataset sample indices[k]. Each sample's
    encoder stream is keyed by its own dataset index, so the result is
    independent of selection order, batching, and scheduling: any grouping
    of the same indices yields bit-identical rows.
    """
    if dataset.images.shape[1] != net.layer_sizes[0]:
        raise ValueError(
            f"dataset samples have {dataset.images.shape[1]} pixels, network "
            f"expects {net.layer_sizes[0]} inputs")
    if enc.time_steps > 0xFFFF:
        raise ValueError("time_steps exceeds the u16 count range")
    if indices is None:
        indices = np.arange(len(dataset))
    indices = np.asarray(indices, dtype=np.int64)
    feats = np.zeros((len(indices), net.layer_sizes[-1]), dtype=np.uint16)
    for k, idx in enumerate(indices):
        rng = Rng(master_seed, stream_base + int(idx))
        train = encode_sample(dataset.images[idx], enc, rng)
        feats[k] = accumulate_spikes(simulate_forward(net, train))
    digest = feature_digest(net, enc, dataset_id, master_seed, stream_base)
    return FeatureCache(features=feats, labels=dataset.labels[indices].copy(),
                        time_steps=enc.time_steps, source_config_digest=digest,
                        num_classes=dataset.num_classes)


@dataclass
class ReadoutModel:
    """Linear map from spike counts to class logits, plus optional bias."""

    weights: np.ndarray  # (num_classes, n_features)
    bias: np.ndarray  # (num_classes,)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Adam settings and batch structure for readout (and baseline) training.

    eval_every controls how often full held-out accuracy is measured; 1
    records it at every iteration. use_bias switches the readout's bias term.
    """

    epochs: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    seed: int = 0
    use_bias: bool = True
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass(frozen=True)
class IterationMetrics:
    """One training-curve point.

    train_accuracy is measured on the iteration's minibatch; test_accuracy on
    the full held-out cache. elapsed is cumulative training seconds up to and
    including this iteration, with metric evaluation excluded.
    """

    iteration: int
    train_accuracy: float
    test_accuracy: float
    loss: float
    elapsed: float


def readout_forward(model: ReadoutModel, features) -> np.ndarray:
    """Class probabilities for one spike-count vector."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape != (model.num_features,):
        raise ValueError(
            f"feature vector shape {f.shape} does not match model width "
            f"{model.num_features}")
    return softmax(model.weights @ f + model.bias)


def readout_grad(model: ReadoutModel, features, y_true) -> tuple[np.ndarray, np.ndarray]:
    """Analytic softmax cross-entropy gradients for one sample.

    Returns (d_weights, d_bias); d_logits is softmax - y_true, the weight
    gradient is its outer product with the features.
    """
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(y_true, dtype=np.float64)
    if y.shape != (model.num_classes,):
        raise ValueError(
            f"target shape {y.shape} does not match class count {model.num_classes}")
    d_logits = readout_forward(model, f) - y
    return np.outer(d_logits, f), d_logits


def _batch_loss_probs(weights, bias, x, labels):
    """(mean clamped cross-entropy, softmax probabilities) for one batch."""
    probs = softmax(x @ weights.T + bias)
    picked = probs[np.arange(len(labels)), labels]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    return loss, probs


def train_readout(cache_train: FeatureCache, cache_test: FeatureCache,
                  cfg: TrainConfig) -> tuple[ReadoutModel, list[IterationMetrics]]:
    """Train the linear readout on cached features with Adam.

    Batches are consecutive blocks of the training cache, visited in order
    (one Adam step per batch, any trailing partial block dropped); the whole
    procedure is a pure function of (caches, cfg). The elapsed field times
    only the forward/backward/update work, not metric evaluation.
    """
    if len(cache_train) == 0 or len(cache_test) == 0:
        raise ValueError("training requires non-empty train and test caches")
    if cache_train.num_features != cache_test.num_features:
        raise ValueError(
            f"feature width mismatch: train {cache_train.num_features} vs "
            f"test {cache_test.num_features}")
    num_classes = max(cache_train.num_classes, cache_test.num_classes,
                      int(cache_train.labels.max()) + 1,
                      int(cache_test.labels.max()) + 1)
    n_feat = cache_train.num_features
    batches_per_epoch = len(cache_train) // cfg.batch_size
    if batches_per_epoch == 0:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds the {len(cache_train)}-sample cache")

    n_w = num_classes * n_feat
    theta = np.zeros(n_w + (num_classes if cfg.use_bias else 0))
    state = AdamState.zeros(theta.size, lr=cfg.lr, beta1=cfg.beta1,
                            beta2=cfg.beta2, eps=cfg.eps)
    x_test = cache_test.features.astype(np.float64)
    y_test = cache_test.labels

    metrics: list[IterationMetrics] = []
    total_iters = cfg.epochs * batches_per_epoch
    iteration = 0
    elapsed = 0.0
    for _epoch in range(cfg.epochs):
        for b in range(batches_per_epoch):
            rows = slice(b * cfg.batch_size, (b + 1) * cfg.batch_size)
            t0 = time.perf_counter()
            xb = cache_train.features[rows].astype(np.float64)
            yb = cache_train.labels[rows]
            weights = theta[:n_w].reshape(num_classes, n_feat)
            bias = theta[n_w:] if cfg.use_bias else np.zeros(num_classes)
            loss, probs = _batch_loss_probs(weights, bias, xb, yb)
            d_logits = probs.copy()
            d_logits[np.arange(len(yb)), yb] -= 1.0
            d_logits /= len(yb)
            grad = np.empty_like(theta)
            grad[:n_w] = (d_logits.T @ xb).ravel()
            if cfg.use_bias:
                grad[n_w:] = d_logits.sum(axis=0)
            theta, state = adam_step(theta, grad, state)
            elapsed += time.perf_counter() - t0

            iteration += 1
            if iteration % cfg.eval_every == 0 or iteration == total_iters:
                batch_acc = float((probs.argmax(axis=1) == yb).mean())
                weights = theta[:n_w].reshape(num_classes, n_feat)
                bias = theta[n_w:] if cfg.use_bias else np.zeros(num_classes)
                test_acc = _accuracy(weights, bias, x_test, y_test)
                metrics.append(IterationMetrics(
                    iteration=iteration, train_accuracy=batch_acc,
                    test_accuracy=test_acc, loss=loss, elapsed=elapsed))

    weights = theta[:n_w].reshape(num_classes, n_feat).copy()
    bias = theta[n_w:].copy() if cfg.use_bias else np.zeros(num_classes)
    return ReadoutModel(weights=weights, bias=bias), metrics


def _accuracy(weights, bias, x, labels) -> float:
    preds = (x @ weights.T + bias).argmax(axis=1)
    return float((preds == labels).mean())


def evaluate(model: ReadoutModel, cache: FeatureCache, chunk: int = 4096) -> float:
    """Fraction of cache samples whose argmax class matches the label.

    Ties resolve to the lowest class index (argmax takes the first maximum).
    """
    if len(cache) == 0:
        raise ValueError("cannot evaluate on an empty cache")
    if cache.num_features != model.num_features:
        raise ValueError(
            f"cache width {cache.num_features} does not match model width "
            f"{model.num_features}")
    hits = 0
    for start in range(0, len(cache), chunk):
        x = cache.features[start:start + chunk].astype(np.float64)
        preds = (x @ model.weights.T + model.bias).argmax(axis=1)
        hits += int((preds == cache.labels[start:start + chunk]).sum())
    return hits / len(cache)
