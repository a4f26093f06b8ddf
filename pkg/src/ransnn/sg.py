"""Surrogate-gradient baseline: a fully trainable two-layer LIF network
optimized by backpropagation through time.

Instead of counting spikes and training a readout, this method wires the
hidden layer straight into a LIF output layer and trains both weight
matrices. The loss sums, over every time step, the cross-entropy between the
softmax of the output layer's pre-reset membrane potentials and the target.
During the reverse pass the hard spike step function is replaced by an
arctan-shaped surrogate derivative wherever it appears, which makes the
unrolled recursion differentiable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .encoding import EncoderConfig, SpikeTrain, encode_sample
from .idx import LabeledDataset
from .network import LifParams, WeightDistribution, fan_in_uniform, sample_weights
from .numerics import (AdamState, ENCODE_TEST_STREAM, ENCODE_TRAIN_STREAM,
                       PROB_FLOOR, Rng, WEIGHT_STREAM, adam_step, softmax)
from .readout import IterationMetrics, TrainConfig


@dataclass(frozen=True)
class SurrogateParams:
    """Arctan surrogate: the spike derivative is 1 / (1 + (slope*pi*x)^2),
    peaking at 1 when the pre-reset potential sits exactly at threshold."""

    slope: float = 1.0

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError(f"surrogate slope must be positive, got {self.slope}")


def surrogate_grad(x, sp: SurrogateParams = SurrogateParams()):
    """Surrogate derivative of the spike step at x = u_pre - u_thr."""
    z = sp.slope * np.pi * np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + z * z)


@dataclass
class SgModel:
    """Trainable weights of the baseline: input->hidden and hidden->output,
    both layers sharing the same LIF constants.

    version increments on every parameter update; tapes record the version
    they were produced under so a stale tape cannot be backpropagated.
    """

    w_hidden: np.ndarray  # (n_hidden, n_in)
    w_out: np.ndarray  # (num_classes, n_hidden)
    lif: LifParams
    version: int = 0

    @property
    def n_in(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w_hidden.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w_out.shape[0]


def init_sg_model(n_in: int, n_hidden: int, num_classes: int, seed: int,
                  lif: LifParams = LifParams(),
                  dist: WeightDistribution | None = None) -> SgModel:
    """Initial weights for the baseline.

    The hidden matrix draws from the same stream and distribution as a fixed
    random network built from the same seed, so both methods start from
    bit-identical hidden weights; the output matrix uses the fan-in rule
    U(-sqrt(6/n_hidden), sqrt(6/n_hidden)) on the next stream.
    """
    if dist is None:
        dist = fan_in_uniform(n_in)
    w_hidden = sample_weights(dist, Rng(seed, WEIGHT_STREAM + 0), n_hidden, n_in)
    w_out = sample_weights(fan_in_uniform(n_hidden), Rng(seed, WEIGHT_STREAM + 1),
                           num_classes, n_hidden)
    return SgModel(w_hidden=w_hidden, w_out=w_out, lif=lif)


@dataclass
class BpttTape:
    """Everything the reverse pass needs, recorded per step during forward.

    Arrays are batched (B, T, ...); pre-reset potentials are stored because
    both the surrogate derivative and the loss are functions of them.
    """

    input_bits: np.ndarray  # (B, T, n_in) uint8
    hidden_u_pre: np.ndarray  # (B, T, n_hidden) float64
    hidden_bits: np.ndarray  # (B, T, n_hidden) uint8
    output_u_pre: np.ndarray  # (B, T, C) float64
    output_bits: np.ndarray  # (B, T, C) uint8
    model_version: int


def _run_layer_batch(currents: np.ndarray, lif: LifParams,
                     want_u_pre: bool = True):
    """Batched LIF recursion over (B, T, n) currents from zero potentials.

    Returns (pre-reset potential history or None, spike bits). Elementwise
    per neuron, so batching cannot change any sample's trajectory.
    """
    n_batch, steps, n = currents.shape
    u = np.zeros((n_batch, n))
    u_pre = np.empty_like(currents) if want_u_pre else None
    bits = np.empty((n_batch, steps, n), dtype=np.uint8)
    beta, thr = lif.beta, lif.u_thr
    for t in range(steps):
        u = beta * u + currents[:, t]
        spikes = u > thr
        if want_u_pre:
            u_pre[:, t] = u
        bits[:, t] = spikes
        u = u - thr * spikes
    return u_pre, bits


def _forward_batch(model: SgModel, input_bits: np.ndarray) -> BpttTape:
    n_batch, steps, n_in = input_bits.shape
    s0 = input_bits.reshape(n_batch * steps, n_in).astype(np.float64)
    c1 = (s0 @ model.w_hidden.T).reshape(n_batch, steps, model.n_hidden)
    hidden_u_pre, hidden_bits = _run_layer_batch(c1, model.lif)
    s1 = hidden_bits.reshape(n_batch * steps, model.n_hidden).astype(np.float64)
    c2 = (s1 @ model.w_out.T).reshape(n_batch, steps, model.num_classes)
    output_u_pre, output_bits = _run_layer_batch(c2, model.lif)
    return BpttTape(input_bits=input_bits, hidden_u_pre=hidden_u_pre,
                    hidden_bits=hidden_bits, output_u_pre=output_u_pre,
                    output_bits=output_bits, model_version=model.version)


def sg_forward(model: SgModel, train: SpikeTrain) -> tuple[np.ndarray, BpttTape]:
    """Run one input train through both LIF layers.

    Returns the output layer's (T, C) pre-reset membrane trace (the quantity
    the loss sees) and the tape for the reverse pass. The hidden dynamics are
    identical to the fixed-network simulator's, bit for bit.
    """
    if train.neurons != model.n_in:
        raise ValueError(
            f"input train has {train.neurons} neurons, model expects {model.n_in}")
    tape = _forward_batch(model, train.bits[None])
    return tape.output_u_pre[0], tape


def sg_loss(trace, y_true) -> float:
    """Per-step softmax cross-entropy against the target, summed over steps.

    The returned value is the training loss; reporting conventions divide it
    by the number of steps. With a single step this is plain softmax
    cross-entropy on one membrane vector.
    """
    trace = np.asarray(trace, dtype=np.float64)
    y = np.asarray(y_true, dtype=np.float64)
    if trace.ndim != 2 or y.ndim != 1 or trace.shape[1] != y.shape[0]:
        raise ValueError(
            f"trace shape {trace.shape} incompatible with target shape {y.shape}")
    log_probs = np.log(np.maximum(softmax(trace), PROB_FLOOR))
    return float(-(log_probs @ y).sum())


def bptt_backward(model: SgModel, tape: BpttTape, y_true,
                  sp: SurrogateParams = SurrogateParams(), *,
                  reduction: str = "mean",
                  detach_reset: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode gradients of the summed per-step cross-entropy with
    respect to both weight matrices.

    Wherever a spike enters the recursion -- as the next layer's input and in
    the subtractive reset term -- its local derivative is the arctan
    surrogate evaluated at that step's pre-reset potential; the beta*u
    recurrence carries gradient across steps. detach_reset=True stops the
    gradient at the reset term instead. reduction "mean" divides by the batch
    size, "sum" does not.
    """
    if tape.model_version != model.version:
        raise ValueError(
            f"stale tape: recorded under model version {tape.model_version}, "
            f"model is now at {model.version}")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    n_batch, steps, n_cls = tape.output_u_pre.shape
    y = np.asarray(y_true, dtype=np.float64)
    if y.ndim == 1:
        if n_batch != 1:
            raise ValueError("1-D target given for a batched tape")
        y = y[None]
    if y.shape != (n_batch, n_cls):
        raise ValueError(f"target shape {y.shape} does not match tape batch "
                         f"({n_batch}, {n_cls})")

    beta, thr = model.lif.beta, model.lif.u_thr
    probs = softmax(tape.output_u_pre)
    d_direct = probs - y[:, None, :]
    if reduction == "mean":
        d_direct /= n_batch
    g_out = surrogate_grad(tape.output_u_pre - thr, sp)
    g_hid = surrogate_grad(tape.hidden_u_pre - thr, sp)

    # lam(t) = dL/du_pre(t), accumulated backward through leak and reset.
    lam_out = np.empty_like(d_direct)
    carry = np.zeros((n_batch, n_cls))
    for t in reversed(range(steps)):
        if detach_reset:
            cur = d_direct[:, t] + beta * carry
        else:
            cur = d_direct[:, t] + beta * (1.0 - thr * g_out[:, t]) * carry
        lam_out[:, t] = cur
        carry = cur

    flat_hidden = tape.hidden_bits.reshape(n_batch * steps, -1).astype(np.float64)
    d_w_out = lam_out.reshape(n_batch * steps, n_cls).T @ flat_hidden

    d_spikes = (lam_out.reshape(n_batch * steps, n_cls) @ model.w_out)
    d_spikes = d_spikes.reshape(n_batch, steps, model.n_hidden)
    lam_hid = np.empty_like(d_spikes)
    carry = np.zeros((n_batch, model.n_hidden))
    for t in reversed(range(steps)):
        if detach_reset:
            cur = g_hid[:, t] * d_spikes[:, t] + beta * carry
        else:
            cur = g_hid[:, t] * d_spikes[:, t] + beta * (1.0 - thr * g_hid[:, t]) * carry
        lam_hid[:, t] = cur
        carry = cur

    flat_input = tape.input_bits.reshape(n_batch * steps, -1).astype(np.float64)
    d_w_hidden = lam_hid.reshape(n_batch * steps, -1).T @ flat_input
    return d_w_hidden, d_w_out


def _encode_batch(ds: LabeledDataset, idxs, enc: EncoderConfig,
                  master_seed: int, stream_base: int) -> np.ndarray:
    """Stack per-sample encodings; streams are keyed by dataset index, so
    the realization of each sample never depends on its batch."""
    bits = np.empty((len(idxs), enc.time_steps, ds.images.shape[1]), dtype=np.uint8)
    for k, i in enumerate(idxs):
        rng = Rng(master_seed, stream_base + int(i))
        bits[k] = encode_sample(ds.images[i], enc, rng).bits
    return bits


def _forward_spike_counts(model: SgModel, input_bits: np.ndarray) -> np.ndarray:
    """Output-layer spike counts (B, C) without recording a tape."""
    n_batch, steps, n_in = input_bits.shape
    s0 = input_bits.reshape(n_batch * steps, n_in).astype(np.float64)
    c1 = (s0 @ model.w_hidden.T).reshape(n_batch, steps, model.n_hidden)
    _, hidden_bits = _run_layer_batch(c1, model.lif, want_u_pre=False)
    s1 = hidden_bits.reshape(n_batch * steps, model.n_hidden).astype(np.float64)
    c2 = (s1 @ model.w_out.T).reshape(n_batch, steps, model.num_classes)
    _, output_bits = _run_layer_batch(c2, model.lif, want_u_pre=False)
    return output_bits.sum(axis=1, dtype=np.int64)


def _batch_loss(output_u_pre: np.ndarray, labels: np.ndarray) -> float:
    """Batch mean of the per-sample summed cross-entropy."""
    n_batch, steps, _ = output_u_pre.shape
    probs = softmax(output_u_pre)
    idx = np.broadcast_to(labels[:, None, None], (n_batch, steps, 1))
    picked = np.take_along_axis(probs, idx, axis=2)[..., 0]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).sum(axis=1).mean())


def evaluate_sg(model: SgModel, ds: LabeledDataset, enc: EncoderConfig,
                master_seed: int, indices=None,
                stream_base: int = ENCODE_TEST_STREAM, chunk: int = 128) -> float:
    """Accuracy with predictions by largest output spike count (ties to the
    lowest class index)."""
    if indices is None:
        indices = np.arange(len(ds))
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ValueError("cannot evaluate on an empty selection")
    hits = 0
    for start in range(0, len(indices), chunk):
        sel = indices[start:start + chunk]
        bits = _encode_batch(ds, sel, enc, master_seed, stream_base)
        preds = _forward_spike_counts(model, bits).argmax(axis=1)
        hits += int((preds == ds.labels[sel]).sum())
    return hits / len(indices)


def train_sg(model: SgModel, ds_train: LabeledDataset, ds_test: LabeledDataset,
             enc: EncoderConfig, cfg: TrainConfig, *,
             train_indices=None, test_indices=None,
             surrogate: SurrogateParams = SurrogateParams(),
             detach_reset: bool = False) -> tuple[SgModel, list[IterationMetrics]]:
    """Train both weight matrices by BPTT with the arctan surrogate.

    Every batch is encoded on the fly from the same per-sample streams the
    readout path uses, so both methods see identical spike trains. One Adam
    step per batch over epochs * (len(train_indices) // batch_size)
    iterations; metrics are recorded every eval_every iterations and at the
    end, with held-out accuracy measured on the full test selection. elapsed
    covers encoding, forward, backward, and the update, but not metrics.
    """
    if ds_train.images.shape[1] != model.n_in:
        raise ValueError(
            f"dataset samples have {ds_train.images.shape[1]} pixels, model "
            f"expects {model.n_in}")
    if train_indices is None:
        train_indices = np.arange(len(ds_train))
    if test_indices is None:
        test_indices = np.arange(len(ds_test))
    train_indices = np.asarray(train_indices, dtype=np.int64)
    batches_per_epoch = len(train_indices) // cfg.batch_size
    if batches_per_epoch == 0:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds the {len(train_indices)}-sample selection")

    theta = np.concatenate([model.w_hidden.ravel(), model.w_out.ravel()])
    state = AdamState.zeros(theta.size, lr=cfg.lr, beta1=cfg.beta1,
                            beta2=cfg.beta2, eps=cfg.eps)
    n_wh = model.w_hidden.size
    hidden_shape, out_shape = model.w_hidden.shape, model.w_out.shape

    metrics: list[IterationMetrics] = []
    total_iters = cfg.epochs * batches_per_epoch
    iteration = 0
    elapsed = 0.0
    for _epoch in range(cfg.epochs):
        for b in range(batches_per_epoch):
            sel = train_indices[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            labels = ds_train.labels[sel]
            t0 = time.perf_counter()
            bits = _encode_batch(ds_train, sel, enc, cfg.seed, ENCODE_TRAIN_STREAM)
            tape = _forward_batch(model, bits)
            y = np.zeros((len(sel), model.num_classes))
            y[np.arange(len(sel)), labels] = 1.0
            d_wh, d_wo = bptt_backward(model, tape, y, surrogate,
                                       reduction="mean", detach_reset=detach_reset)
            grad = np.concatenate([d_wh.ravel(), d_wo.ravel()])
            theta, state = adam_step(theta, grad, state)
            model.w_hidden = theta[:n_wh].reshape(hidden_shape)
            model.w_out = theta[n_wh:].reshape(out_shape)
            model.version += 1
            elapsed += time.perf_counter() - t0

            iteration += 1
            if iteration % cfg.eval_every == 0 or iteration == total_iters:
                loss = _batch_loss(tape.output_u_pre, labels) / enc.time_steps
                counts = tape.output_bits.sum(axis=1, dtype=np.int64)
                batch_acc = float((counts.argmax(axis=1) == labels).mean())
                test_acc = evaluate_sg(model, ds_test, enc, cfg.seed,
                                       test_indices)
                metrics.append(IterationMetrics(
                    iteration=iteration, train_accuracy=batch_acc,
                    test_accuracy=test_acc, loss=loss, elapsed=elapsed))
    return model, metrics
