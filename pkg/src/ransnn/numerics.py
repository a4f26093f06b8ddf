"""Shared numeric substrate: seeded RNG streams, small dense linear algebra,
softmax / cross-entropy, and the Adam optimizer.

Everything here is deterministic given its inputs. The generator is
counter-based (Philox, keyed by ``(seed, stream_id)``), so any piece of the
pipeline can derive its own independent stream from one master seed and
reproduce it bit-for-bit regardless of execution order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF

# Stream-id layout for the whole pipeline. Bases are spaced 2**32 apart so
# per-sample streams (offset by the sample's dataset index) never collide
# with per-layer weight streams or with each other.
WEIGHT_STREAM = 0  # + weight-matrix index (0-based)
ENCODE_TRAIN_STREAM = 1 << 32  # + sample index within the train split
ENCODE_TEST_STREAM = 2 << 32  # + sample index within the test split
SHUFFLE_STREAM = 3 << 32  # batch-selection permutations

# Probabilities are clamped to this floor before any log, so a confidently
# wrong prediction yields a large finite loss instead of -inf.
PROB_FLOOR = 1e-12


class Rng:
    """Deterministic random stream addressed by ``(seed, stream_id)``.

    Backed by numpy's Philox4x64 counter-based generator with the two ids as
    its 128-bit key: the same pair always reproduces the same sequence, and
    distinct stream_ids give statistically independent sequences. Gaussian
    variates are produced by Box-Muller on top of the uniform stream rather
    than numpy's ziggurat, so the exact draw sequence is pinned down here.

    An Rng is single-owner mutable state; concurrent workers must each build
    their own from a distinct stream_id instead of sharing one.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _U64
        self.stream_id = int(stream_id) & _U64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream_id={self.stream_id})"

    def random(self, size=None):
        """Uniform float64 draws in [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        """n i.i.d. draws from U[low, high)."""
        if not low < high:
            raise ValueError(f"uniform bounds must satisfy low < high, got [{low}, {high})")
        out = low + self._gen.random(n) * (high - low)
        # low + u*(high-low) can round up to exactly `high`; keep the
        # interval half-open.
        np.minimum(out, np.nextafter(high, low), out=out)
        return out

    def normal(self, mean: float, std: float, n: int) -> np.ndarray:
        """n i.i.d. Gaussian draws via the Box-Muller transform."""
        if std < 0:
            raise ValueError(f"normal std must be >= 0, got {std}")
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1]: keeps the log finite
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + std * z[:n]

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with a pinned summation order.

    Accumulates strictly left to right over columns, which makes the result
    bit-identical to a naive scalar triple loop. Batched hot paths elsewhere
    use BLAS and agree with this only up to rounding.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ValueError(f"matvec shape mismatch: W is {w.shape}, x is {x.shape}")
    acc = np.zeros(w.shape[0])
    for j in range(w.shape[1]):
        acc += w[:, j] * x[j]
    return acc


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis (max-subtraction)."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax requires finite input")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(y_true: np.ndarray, output: np.ndarray) -> float:
    """-sum(y_true * log(output)) with probabilities clamped to >= 1e-12.

    ``y_true`` is a one-hot vector and ``output`` a probability vector of the
    same length. Callers that work on batches average this over the batch.
    """
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(output, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"cross_entropy shape mismatch: {y.shape} vs {p.shape}")
    return float(-(y * np.log(np.maximum(p, PROB_FLOOR))).sum())


@dataclass
class AdamState:
    """Adam first/second moments for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, *, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0, lr=lr, beta1=beta1,
                   beta2=beta2, eps=eps)


def adam_step(params: np.ndarray, grads: np.ndarray,
              state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; the denominator is sqrt(v_hat) + eps.

    Returns the updated parameters and a new state with ``t`` incremented;
    the inputs are not mutated.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"adam_step shape mismatch: params {params.shape}, grads "
            f"{grads.shape}, moments {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, dataclasses.replace(state, m=m, v=v, t=t)
