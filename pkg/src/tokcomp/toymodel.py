"""Deterministic toy transformer blocks used by the pipeline simulator.

There are no trained weights anywhere: every tensor is generated from a
splitmix64 counter hash keyed by (seed, stage, layer, slot), so any
implementation of the same recipe reproduces the exact float64 weights.
Recipe: value i of a tensor is mix64(tensor_seed + (i+1) * 0x9E3779B97F4A7C15)
mapped to [0, 1) via the top 53 bits, then to uniform(-a, a) with
a = 1/sqrt(fan_in).  tensor_seed chains mix64 over the tag integers.

A block is pre-norm-free and minimal: multi-head softmax attention with the
merged-size value boost (see merging.value_enhance) plus a two-layer ReLU
feed-forward, both with residuals.  Position information enters once, as
additive sinusoidal encodings before layer 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1

STAGE_ENCODER = 0
STAGE_LLM = 1
STAGE_TEXT = 2
STAGE_CONNECTOR = 3

FF_EXPANSION = 2


def _mix64_scalar(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def tensor_seed(seed: int, *tags: int) -> int:
    s = seed & _MASK
    for t in tags:
        s = _mix64_scalar((s + _GOLDEN + t) & _MASK)
    return s


def uniform_tensor(seed: int, shape: tuple[int, ...], scale: float) -> np.ndarray:
    """uniform(-scale, scale) values from the counter hash, row-major."""
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    idx = np.arange(1, count + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
    z = _mix64(np.uint64(seed) + idx)
    u = (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return ((2.0 * u - 1.0) * scale).reshape(shape)


@dataclass(frozen=True)
class ToyModelConfig:
    d: int = 32
    heads: int = 4
    seed: int = 0
    text_len: int = 8

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.d % self.heads != 0:
            raise ShapeError(f"d={self.d} must be a positive multiple of heads={self.heads}")
        if self.text_len < 0:
            raise ShapeError("text_len must be non-negative")


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


def layer_weights(cfg: ToyModelConfig, stage: int, layer: int) -> LayerWeights:
    d = cfg.d
    ff = FF_EXPANSION * d

    def mat(slot, rows, cols):
        s = tensor_seed(cfg.seed, stage, layer, slot)
        return uniform_tensor(s, (rows, cols), 1.0 / np.sqrt(rows))

    return LayerWeights(mat(0, d, d), mat(1, d, d), mat(2, d, d),
                        mat(3, d, d), mat(4, d, ff), mat(5, ff, d))


def sinusoidal_positions(positions: np.ndarray, d: int) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, i / d)
    pe = np.zeros((pos.shape[0], d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d // 2])
    return pe


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention(x: np.ndarray, lw: LayerWeights, heads: int,
              sizes: np.ndarray | None = None) -> np.ndarray:
    """Multi-head softmax attention; sizes trigger the log-size value boost."""
    n, d = x.shape
    if n == 0:
        return x.copy()
    dh = d // heads
    q = x @ lw.wq
    k = x @ lw.wk
    v = x @ lw.wv
    if sizes is not None and not np.all(sizes == 1.0):
        v = v + np.log(np.asarray(sizes, dtype=np.float64))[:, None]
    qh = q.reshape(n, heads, dh).transpose(1, 0, 2)
    kh = k.reshape(n, heads, dh).transpose(1, 0, 2)
    vh = v.reshape(n, heads, dh).transpose(1, 0, 2)
    scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
    out = softmax_rows(scores) @ vh
    return out.transpose(1, 0, 2).reshape(n, d) @ lw.wo


def feed_forward(x: np.ndarray, lw: LayerWeights) -> np.ndarray:
    return np.maximum(x @ lw.w1, 0.0) @ lw.w2


def block_forward(x: np.ndarray, lw: LayerWeights, heads: int,
                  sizes: np.ndarray | None = None) -> np.ndarray:
    x = x + attention(x, lw, heads, sizes)
    return x + feed_forward(x, lw)


def text_tokens(cfg: ToyModelConfig, text_len: int | None = None) -> np.ndarray:
    """Synthetic text features, uniform(-1, 1), (text_len, d)."""
    t = cfg.text_len if text_len is None else text_len
    return uniform_tensor(tensor_seed(cfg.seed, STAGE_TEXT, 0, 0), (t, cfg.d), 1.0)


def connector_matrix(cfg: ToyModelConfig, d_in: int) -> np.ndarray:
    """Seeded linear map from projector output width back to model width."""
    s = tensor_seed(cfg.seed, STAGE_CONNECTOR, 0, d_in)
    return uniform_tensor(s, (d_in, cfg.d), 1.0 / np.sqrt(d_in))
