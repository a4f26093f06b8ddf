"""The spiking network core: LIF layer dynamics, fixed random weights, and
discrete-time forward simulation.

A network is a stack of LIF layers whose weight matrices are sampled once
from a chosen distribution and then frozen; only the readout trained on top
of its spike counts ever changes. Each simulation step updates a layer as

    u_pre  = beta * u + W s_in(t)
    s      = 1 where u_pre > u_thr   (strict)
    u_post = u_pre - u_thr * s       (subtractive reset)

with layers consuming the spikes their predecessor emitted at the same step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import SpikeTrain
from .numerics import Rng, WEIGHT_STREAM


@dataclass(frozen=True)
class LifParams:
    """Per-layer neuron constants: membrane retention beta and firing
    threshold u_thr. 1 - beta is the per-step leak."""

    beta: float = 0.95
    u_thr: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.u_thr > 0.0:
            raise ValueError(f"u_thr must be positive, got {self.u_thr}")


@dataclass
class LifLayerState:
    """Mutable membrane potentials of one layer, one float64 per neuron."""

    u: np.ndarray


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"uniform bounds must satisfy low < high, got [{self.low}, {self.high})")


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"normal std must be >= 0, got {self.std}")


WeightDistribution = Uniform | Normal


def fan_in_uniform(n_in: int) -> Uniform:
    """The default weight distribution U(-a, a) with a = sqrt(6 / fan_in)."""
    a = float(np.sqrt(6.0 / n_in))
    return Uniform(-a, a)


def sample_weights(dist: WeightDistribution, rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Sample a (rows, cols) matrix i.i.d. from dist, filled row-major."""
    if isinstance(dist, Uniform):
        vals = rng.uniform(dist.low, dist.high, rows * cols)
    elif isinstance(dist, Normal):
        vals = rng.normal(dist.mean, dist.std, rows * cols)
    else:
        raise TypeError(f"unknown weight distribution: {dist!r}")
    return vals.reshape(rows, cols)


@dataclass(frozen=True)
class NetworkTopology:
    """Layer sizes plus the fixed random weights connecting them.

    weights[i] has shape (layer_sizes[i+1], layer_sizes[i]) and is read-only:
    the hidden representation never changes after construction. params holds
    one LifParams per layer of neurons.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    params: tuple[LifParams, ...]
    dist: WeightDistribution
    seed: int


def init_weights(layer_sizes, dist: WeightDistribution, seed: int,
                 lif: LifParams = LifParams()) -> NetworkTopology:
    """Build a network with every weight matrix sampled from dist and frozen.

    Matrix i draws from stream i of the seed, so a topology rebuilds
    bit-identically from (layer_sizes, dist, seed) and shallower networks
    share their prefix matrices with deeper ones.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and one hidden layer")
    if any(s < 1 for s in sizes):
        raise ValueError(f"all layer sizes must be >= 1, got {sizes}")
    weights = []
    for i in range(len(sizes) - 1):
        w = sample_weights(dist, Rng(seed, WEIGHT_STREAM + i), sizes[i + 1], sizes[i])
        w.setflags(write=False)
        weights.append(w)
    n_layers = len(sizes) - 1
    return NetworkTopology(layer_sizes=sizes, weights=tuple(weights),
                           params=(lif,) * n_layers, dist=dist, seed=int(seed))


def lif_step(state: LifLayerState, params: LifParams,
             input_current) -> tuple[np.ndarray, LifLayerState]:
    """Advance one layer by one step: leak + integrate, fire, subtract.

    The spike decision uses the pre-reset potential of the current step, so
    after the step every potential is <= u_thr and firing neurons keep their
    overshoot above threshold.
    """
    current = np.asarray(input_current, dtype=np.float64)
    if current.shape != state.u.shape:
        raise ValueError(
            f"input current shape {current.shape} does not match layer shape {state.u.shape}")
    u_pre = params.beta * state.u + current
    spikes = u_pre > params.u_thr
    u_post = u_pre - params.u_thr * spikes
    return spikes.astype(np.uint8), LifLayerState(u=u_post)


def _run_layer(currents: np.ndarray, lif: LifParams) -> np.ndarray:
    """LIF recursion over a (T, n) current matrix; potentials start at 0.

    Returns the (T, n) float64 spike raster. Elementwise only, so it matches
    a per-step lif_step composition bit-for-bit.
    """
    beta, thr = lif.beta, lif.u_thr
    out = np.empty_like(currents)
    u = np.zeros(currents.shape[1])
    for t in range(currents.shape[0]):
        u = beta * u + currents[t]
        spikes = u > thr
        u = u - thr * spikes
        out[t] = spikes
    return out


def simulate_forward(net: NetworkTopology, train: SpikeTrain) -> SpikeTrain:
    """Run an input spike train through the network and return the last
    hidden layer's spike train.

    All membrane potentials start at 0 for each input, and layer i at step t
    consumes layer i-1's spikes from the same step, so a layer's full raster
    can be computed before the next layer starts. Purely deterministic.
    """
    if train.neurons != net.layer_sizes[0]:
        raise ValueError(
            f"input train has {train.neurons} neurons, network expects {net.layer_sizes[0]}")
    s = train.bits.astype(np.float64)
    for w, lif in zip(net.weights, net.params):
        currents = s @ w.T
        s = _run_layer(currents, lif)
    return SpikeTrain(bits=s.astype(np.uint8))


def accumulate_spikes(train: SpikeTrain) -> np.ndarray:
    """Total spikes per neuron over the window: an integer count vector in
    [0, T]."""
    return train.bits.sum(axis=0, dtype=np.int64)
