"""Checkerboard partition of a grid into anchor and non-anchor cells.

A cell (h, w) is an anchor iff (h + w) is even, so (0, 0) is always an
anchor and the two classes tile the grid like a checkerboard.  Anchors are
coded first from spatially blind contexts; non-anchors are coded second
and may condition on the already-decoded anchor half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndexingError, ShapeError
from .numerics import as_grid, to_tokens

__all__ = [
    "CheckerboardPartition",
    "partition",
    "anchor_mask",
    "gather",
    "scatter",
    "keep_anchors",
    "keep_nonanchors",
]


@dataclass(frozen=True)
class CheckerboardPartition:
    """Index sets of the two checkerboard classes in token order.

    Both index arrays are strictly increasing, disjoint, and together
    cover ``range(height * width)``.  ``anchor_index`` has ceil(H*W/2)
    entries.
    """

    height: int
    width: int
    anchor_index: np.ndarray = field(repr=False)
    nonanchor_index: np.ndarray = field(repr=False)

    @property
    def tokens(self) -> int:
        return self.height * self.width


def anchor_mask(height: int, width: int) -> np.ndarray:
    """Boolean (H, W) grid, True where (h + w) is even."""
    if height < 1 or width < 1:
        raise ShapeError(f"grid dims must be >= 1, got {height}x{width}")
    hh = np.arange(height)[:, None]
    ww = np.arange(width)[None, :]
    return (hh + ww) % 2 == 0


def partition(height: int, width: int) -> CheckerboardPartition:
    """Build the checkerboard index sets for an H x W grid."""
    mask = anchor_mask(height, width).reshape(-1)
    return CheckerboardPartition(
        height=height,
        width=width,
        anchor_index=np.flatnonzero(mask),
        nonanchor_index=np.flatnonzero(~mask),
    )


def _check_index(index: np.ndarray, tokens: int) -> np.ndarray:
    index = np.asarray(index)
    if index.ndim != 1:
        raise IndexingError(f"index must be 1-D, got shape {index.shape}")
    if not np.issubdtype(index.dtype, np.integer):
        raise IndexingError(f"index must be integer, got dtype {index.dtype}")
    if index.size and (index.min() < 0 or index.max() >= tokens):
        raise IndexingError(
            f"index out of range [0, {tokens}): [{index.min()}, {index.max()}]"
        )
    return index.astype(np.int64)


def gather(x: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Select token rows of a (C,H,W) grid; returns (len(index), C)."""
    x = as_grid(x, "gather input")
    index = _check_index(index, x.shape[1] * x.shape[2])
    return to_tokens(x)[index]


def scatter(dst: np.ndarray, rows: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Copy ``dst`` and overwrite token rows at ``index`` with ``rows``.

    Indices must be unique: an overlapping scatter is always a bug in a
    two-pass codec, never a reduction.
    """
    dst = as_grid(dst, "scatter destination")
    c, h, w = dst.shape
    rows = np.asarray(rows, dtype=np.float64)
    index = _check_index(index, h * w)
    if rows.shape != (index.size, c):
        raise ShapeError(f"scatter rows shape {rows.shape} != ({index.size}, {c})")
    if np.unique(index).size != index.size:
        raise IndexingError("scatter index contains duplicates")
    tokens = to_tokens(dst)
    tokens[index] = rows
    return tokens.reshape(h, w, c).transpose(2, 0, 1).copy()


def _keep(x: np.ndarray, keep_anchor: bool) -> np.ndarray:
    x = as_grid(x)
    mask = anchor_mask(x.shape[1], x.shape[2])
    if not keep_anchor:
        mask = ~mask
    return np.where(mask[None, :, :], x, 0.0)


def keep_anchors(x: np.ndarray) -> np.ndarray:
    """Zero every non-anchor cell (exact +0.0, not a multiply by 0)."""
    return _keep(x, True)


def keep_nonanchors(x: np.ndarray) -> np.ndarray:
    """Zero every anchor cell."""
    return _keep(x, False)
