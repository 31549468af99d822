"""Deterministic float64 numerics: tensor layout, reductions, convolutions.

Conventions
-----------
* A feature map ("grid tensor") is a C-contiguous float64 array of shape
  ``(channels, height, width)``: channel-major, then row-major.  The batch
  dimension is fixed at one and never materialized.
* A token matrix is a float64 array of shape ``(tokens, channels)`` where
  token ``t`` corresponds to grid cell ``(t // width, t % width)``.
* Every reduction runs through ``np.einsum(..., optimize=False)``.  That
  keeps a fixed summation order independent of BLAS backend and thread
  count, which is what makes encoder and decoder bit-identical: both sides
  recompute the same context tensors from the same inputs.

Weight generation uses the SplitMix64 sequence, evaluated as a pure
function of ``(seed, index)``, so a weight file can always be reproduced
from an 8-byte seed on any platform.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, StateError

__all__ = [
    "as_grid",
    "as_matrix",
    "to_tokens",
    "from_tokens",
    "matmul",
    "softmax_rows",
    "softmax_cols",
    "conv2d",
    "depthwise_conv2d",
    "leaky_relu",
    "splitmix64",
    "uniform_from_bits",
    "gen_weights",
    "alloc_meter",
    "note_alloc",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def as_grid(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate a (channels, height, width) float64 grid tensor."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"{name}: expected 3 dims (C,H,W), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name}: all dims must be >= 1, got shape {x.shape}")
    return x


def as_matrix(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D float64 token matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2 dims, got shape {m.shape}")
    return m


def to_tokens(x: np.ndarray) -> np.ndarray:
    """Reshape (C,H,W) to (H*W, C) with token index t = h*W + w."""
    x = as_grid(x)
    c, h, w = x.shape
    return np.ascontiguousarray(x.transpose(1, 2, 0).reshape(h * w, c))


def from_tokens(m: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`to_tokens`; pure data movement, bit exact."""
    m = as_matrix(m)
    tokens, c = m.shape
    if tokens != height * width:
        raise ShapeError(
            f"token count {tokens} does not factor as {height}x{width}"
        )
    return np.ascontiguousarray(m.reshape(height, width, c).transpose(2, 0, 1))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2-D matrix product with a fixed reduction order."""
    a = as_matrix(a, "matmul lhs")
    b = as_matrix(b, "matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction; rows sum to one."""
    m = as_matrix(m, "softmax input")
    if not np.all(np.isfinite(m)):
        raise DomainError("softmax input must be finite")
    if m.shape[0] == 0:
        return m.copy()
    shifted = m - np.max(m, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def softmax_cols(m: np.ndarray) -> np.ndarray:
    """Column-wise softmax, defined as the transpose dual of row softmax."""
    m = as_matrix(m, "softmax input")
    return softmax_rows(m.T).T.copy()


def _windows(x: np.ndarray, kernel: int, pad: int, stride: int) -> np.ndarray:
    """Zero-pad and return a strided view (C, H_out, W_out, K, K)."""
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, pad : pad + h, pad : pad + w] = x
    view = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(1, 2))
    return view[:, ::stride, ::stride]


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    padding: int | None = None,
) -> np.ndarray:
    """2-D convolution (cross-correlation) with zero padding.

    ``weight`` has shape (C_out, C_in, K, K) with K odd.  The default
    padding (K-1)//2 keeps spatial dims at stride 1 and maps size n to
    ceil(n / stride) otherwise.
    """
    x = as_grid(x, "conv input")
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv weight must be (O,I,K,K), got {weight.shape}")
    kernel = weight.shape[2]
    if kernel % 2 != 1:
        raise ConfigError(f"conv kernel must be odd, got {kernel}")
    if weight.shape[1] != x.shape[0]:
        raise ShapeError(
            f"conv: input has {x.shape[0]} channels, weight expects {weight.shape[1]}"
        )
    if stride < 1:
        raise ConfigError(f"conv stride must be >= 1, got {stride}")
    pad = (kernel - 1) // 2 if padding is None else padding
    win = _windows(x, kernel, pad, stride)
    out = np.einsum("ihwkl,oikl->ohw", win, weight, optimize=False)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"conv bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias[:, None, None]
    return out


def depthwise_conv2d(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Per-channel convolution; ``weight`` has shape (C, K, K), K odd."""
    x = as_grid(x, "depthwise input")
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 3 or weight.shape[1] != weight.shape[2]:
        raise ShapeError(f"depthwise weight must be (C,K,K), got {weight.shape}")
    if weight.shape[0] != x.shape[0]:
        raise ShapeError(
            f"depthwise: {x.shape[0]} channels vs {weight.shape[0]} kernels"
        )
    kernel = weight.shape[1]
    if kernel % 2 != 1:
        raise ConfigError(f"depthwise kernel must be odd, got {kernel}")
    win = _windows(x, kernel, (kernel - 1) // 2, 1)
    return np.einsum("chwkl,ckl->chw", win, weight, optimize=False)


def leaky_relu(x: np.ndarray, slope: float = 0.01) -> np.ndarray:
    """Pointwise max(x, slope*x) for 0 < slope < 1."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def splitmix64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset .. offset+count-1`` of the SplitMix64 stream.

    Output j (0-based) equals the finalizer applied to
    ``seed + (j+1) * golden`` in uint64 arithmetic, matching the reference
    sequential generator.  Evaluated vectorized; wraparound is intended.
    """
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def uniform_from_bits(bits: np.ndarray) -> np.ndarray:
    """Map uint64 words to float64 in [0, 1) using the top 53 bits."""
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def gen_weights(
    seed: int, shape: tuple[int, ...], fan_in: int | None = None, offset: int = 0
) -> np.ndarray:
    """Deterministic uniform(-a, a) parameter tensor with a = 1/sqrt(fan_in).

    ``fan_in`` defaults to the product of all dims after the first (the
    receptive-field size of a conv kernel or the input width of a matrix);
    rank-0/1 tensors must pass it explicitly.  ``offset`` selects where in
    the seed's SplitMix64 stream this tensor starts, so a whole parameter
    set can be carved out of one stream.
    """
    size = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if fan_in is None:
        if len(shape) < 2:
            raise ConfigError("fan_in is required for tensors of rank < 2")
        fan_in = int(np.prod(shape[1:], dtype=np.int64))
    if fan_in < 1:
        raise ConfigError(f"fan_in must be >= 1, got {fan_in}")
    u = uniform_from_bits(splitmix64(seed, size, offset))
    a = 1.0 / np.sqrt(float(fan_in))
    return (a * (2.0 * u - 1.0)).reshape(shape)


class _AllocMeter:
    """Accumulates element counts of intermediates reported via note_alloc."""

    def __init__(self) -> None:
        self.elements = 0


_ACTIVE_METER: _AllocMeter | None = None


@contextmanager
def alloc_meter() -> Iterator[_AllocMeter]:
    """Collect intermediate-storage tallies from kernels run inside.

    Meters do not nest and are not thread safe; they exist for the scaling
    benchmarks and tests, which run single threaded.
    """
    global _ACTIVE_METER
    if _ACTIVE_METER is not None:
        raise StateError("alloc_meter does not nest")
    meter = _AllocMeter()
    _ACTIVE_METER = meter
    try:
        yield meter
    finally:
        _ACTIVE_METER = None


def note_alloc(elements: int) -> None:
    """Record ``elements`` float64 slots if a meter is active."""
    if _ACTIVE_METER is not None:
        _ACTIVE_METER.elements += int(elements)
