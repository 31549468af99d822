"""Attention kernels: masked window attention and two global forms.

Two distinct global attentions live here on purpose:

* :func:`vanilla_global_attention` applies one softmax to the joint score
  matrix q k^T / sqrt(d).  It is quadratic in sequence length and serves
  as the reference formulation only.
* :func:`linear_global_attention` applies separate softmaxes to q (rows)
  and k (columns) and multiplies ``softmax_cols(k)^T v`` first, so no
  L x L matrix is ever formed.  This is the production kernel.

The two are different functions of (q, k, v); nothing here asserts they
agree, and tests must not either.  What is exactly equivalent (up to
float associativity) is the *bracketing*:
``(softmax_rows(q) softmax_cols(k)^T) v`` versus
``softmax_rows(q) (softmax_cols(k)^T v)``; see
:func:`decomposed_attention_quadratic` for the unbracketed form used in
equivalence tests and as the benchmark's quadratic oracle.

The implicit attention map of the decomposed form,
``A = softmax_rows(q) softmax_cols(k)^T``, is row stochastic: every entry
lies in [0, 1] and every row sums to 1, because each row of A is a convex
combination (weights from the q softmax) of columns of k's softmax, each
of which sums to 1 across keys... and that is what keeps the linear form
a proper weighted average over values.  :func:`implicit_map_row`
materializes single rows of A so tests can check this directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkerboard import anchor_mask
from .errors import ConfigError, IndexingError, ShapeError
from .numerics import (
    as_grid,
    as_matrix,
    matmul,
    note_alloc,
    softmax_cols,
    softmax_rows,
)

__all__ = [
    "QKV",
    "WindowMask",
    "window_mask",
    "vanilla_global_attention",
    "linear_global_attention",
    "decomposed_attention_quadratic",
    "implicit_map_row",
    "window_checkerboard_attention",
]


@dataclass(frozen=True)
class QKV:
    """A query/key/value triple in token-matrix form.

    Queries and keys share a feature width; keys and values share a row
    count.  Query rows may differ from key rows (cross attention).
    """

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        q = as_matrix(self.q, "q")
        k = as_matrix(self.k, "k")
        v = as_matrix(self.v, "v")
        if q.shape[1] != k.shape[1]:
            raise ShapeError(f"q cols {q.shape[1]} != k cols {k.shape[1]}")
        if k.shape[0] != v.shape[0]:
            raise ShapeError(f"k rows {k.shape[0]} != v rows {v.shape[0]}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @property
    def head_dim(self) -> int:
        return self.q.shape[1]


def vanilla_global_attention(qkv: QKV) -> np.ndarray:
    """Joint-softmax attention: softmax_rows(q k^T / sqrt(d)) v.

    Materializes the full score matrix; quadratic time and storage.
    """
    scale = 1.0 / np.sqrt(float(qkv.head_dim))
    logits = matmul(qkv.q, qkv.k.T) * scale
    note_alloc(logits.size)
    weights = softmax_rows(logits)
    note_alloc(weights.size)
    out = matmul(weights, qkv.v)
    note_alloc(out.size)
    return out


def linear_global_attention(qkv: QKV) -> np.ndarray:
    """Decomposed attention with the key/value product taken first.

    Computes softmax_rows(q) (softmax_cols(k)^T v).  Time and intermediate
    storage are linear in max(rows); no rows x rows matrix exists.
    """
    sq = softmax_rows(qkv.q)
    note_alloc(sq.size)
    sk = softmax_cols(qkv.k)
    note_alloc(sk.size)
    kv = matmul(sk.T, qkv.v)
    note_alloc(kv.size)
    out = matmul(sq, kv)
    note_alloc(out.size)
    return out


def decomposed_attention_quadratic(qkv: QKV) -> np.ndarray:
    """Same function as :func:`linear_global_attention`, opposite bracketing.

    Computes (softmax_rows(q) softmax_cols(k)^T) v, materializing the
    q-rows x k-rows map.  Used to verify bracketing equivalence and as the
    quadratic kernel in scaling benchmarks.
    """
    sq = softmax_rows(qkv.q)
    note_alloc(sq.size)
    sk = softmax_cols(qkv.k)
    note_alloc(sk.size)
    amap = matmul(sq, sk.T)
    note_alloc(amap.size)
    out = matmul(amap, qkv.v)
    note_alloc(out.size)
    return out


def implicit_map_row(qkv: QKV, row: int) -> np.ndarray:
    """Row ``row`` of the implicit map softmax_rows(q) softmax_cols(k)^T.

    Returns a length-k_rows vector.  Entries lie in [0, 1] and sum to 1.
    """
    q = qkv.q
    if not 0 <= row < q.shape[0]:
        raise IndexingError(f"row {row} out of range [0, {q.shape[0]})")
    sq_row = softmax_rows(q[row : row + 1])[0]
    sk = softmax_cols(qkv.k)
    return np.einsum("c,jc->j", sq_row, sk, optimize=False)


@dataclass(frozen=True)
class WindowMask:
    """Checkerboard key-visibility pattern for odd square windows.

    ``allow[cls, dh, dw]`` says whether the key at relative offset
    (dh - r, dw - r), r = (window-1)//2, is visible to a query of parity
    class ``cls`` (0 = anchor query, 1 = non-anchor query).  Visibility
    depends only on the key: a key cell is visible iff it is an anchor.
    Consequently anchor->anchor and anchor-key->non-anchor-query entries
    are allowed while any interaction sourced from a non-anchor key is
    not.  Out-of-bounds cells are additionally masked at run time.
    """

    window: int
    allow: np.ndarray

    @property
    def radius(self) -> int:
        return (self.window - 1) // 2


def window_mask(window: int) -> WindowMask:
    """Build the two parity classes of the K x K checkerboard mask."""
    if window < 1 or window % 2 != 1:
        raise ConfigError(f"window must be odd and >= 1, got {window}")
    dh = np.arange(window)[:, None]
    dw = np.arange(window)[None, :]
    even = (dh + dw) % 2 == 0
    # Key parity relative to the query flips with (dh + dw - 2r), and 2r
    # is even, so an anchor query (class 0) sees anchors exactly at even
    # offset sums.
    allow = np.stack([even, ~even])
    return WindowMask(window=window, allow=allow)


def window_checkerboard_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, window: int
) -> np.ndarray:
    """Attention over K x K zero-padded neighborhoods, anchor keys only.

    ``q``, ``k``, ``v`` are (C, H, W) grids with matching spatial dims;
    ``q`` and ``k`` share a channel count.  Every cell issues a query over
    the K x K neighborhood centred on it; only in-bounds anchor cells act
    as keys/values.  Logits are scaled by 1/sqrt(C_q); masked entries get
    exactly zero weight, and a query whose whole window is masked yields
    an exactly zero output vector.
    """
    q = as_grid(q, "window q")
    k = as_grid(k, "window k")
    v = as_grid(v, "window v")
    if q.shape[1:] != k.shape[1:] or q.shape[1:] != v.shape[1:]:
        raise ShapeError(
            f"q/k/v spatial dims differ: {q.shape} {k.shape} {v.shape}"
        )
    if q.shape[0] != k.shape[0]:
        raise ShapeError(f"q channels {q.shape[0]} != k channels {k.shape[0]}")
    if k.shape[1:] != v.shape[1:]:
        raise ShapeError(f"k/v spatial dims differ: {k.shape} {v.shape}")
    if window < 1 or window % 2 != 1:
        raise ConfigError(f"window must be odd and >= 1, got {window}")

    cq, h, w = q.shape
    cv = v.shape[0]
    r = (window - 1) // 2

    def padded_windows(grid: np.ndarray) -> np.ndarray:
        c = grid.shape[0]
        buf = np.zeros((c, h + 2 * r, w + 2 * r), dtype=grid.dtype)
        buf[:, r : r + h, r : r + w] = grid
        return np.lib.stride_tricks.sliding_window_view(
            buf, (window, window), axis=(1, 2)
        )

    kwin = padded_windows(k)
    vwin = padded_windows(v)
    mask = anchor_mask(h, w)
    mbuf = np.zeros((1, h + 2 * r, w + 2 * r), dtype=bool)
    mbuf[0, r : r + h, r : r + w] = mask
    allow = np.lib.stride_tricks.sliding_window_view(
        mbuf, (window, window), axis=(1, 2)
    )[0]

    scale = 1.0 / np.sqrt(float(cq))
    logits = np.einsum("chwkl,chw->hwkl", kwin, q, optimize=False) * scale
    note_alloc(logits.size)
    masked = np.where(allow, logits, -np.inf)
    rowmax = np.max(masked, axis=(2, 3), keepdims=True)
    safe_max = np.where(np.isfinite(rowmax), rowmax, 0.0)
    weights = np.exp(masked - safe_max)
    note_alloc(weights.size)
    denom = np.sum(weights, axis=(2, 3))
    numer = np.einsum("hwkl,chwkl->chw", weights, vwin, optimize=False)
    note_alloc(numer.size)
    denom_safe = np.where(denom > 0.0, denom, 1.0)
    out = np.where(denom[None] > 0.0, numer / denom_safe[None], 0.0)
    if out.shape != (cv, h, w):
        raise ShapeError(f"window attention produced {out.shape}")
    return out
