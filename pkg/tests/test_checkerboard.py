"""Anchor/non-anchor geometry: partition, gather/scatter, masking."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrec.checkerboard import (
    anchor_mask,
    gather,
    keep_anchors,
    keep_nonanchors,
    partition,
    scatter,
)
from mrec.errors import IndexingError, ShapeError
from mrec.numerics import to_tokens

from conftest import rand


class TestPartition:
    def test_2x2(self):
        part = partition(2, 2)
        assert list(part.anchor_index) == [0, 3]
        assert list(part.nonanchor_index) == [1, 2]

    def test_3x3_counts(self):
        part = partition(3, 3)
        assert len(part.anchor_index) == 5
        assert len(part.nonanchor_index) == 4

    def test_1x1_degenerate(self):
        part = partition(1, 1)
        assert list(part.anchor_index) == [0]
        assert len(part.nonanchor_index) == 0

    def test_zero_dim_rejected(self):
        with pytest.raises(ShapeError):
            partition(0, 3)
        with pytest.raises(ShapeError):
            partition(3, 0)

    @given(h=st.integers(1, 64), w=st.integers(1, 64))
    def test_partition_property(self, h, w):
        part = partition(h, w)
        a = np.asarray(part.anchor_index)
        n = np.asarray(part.nonanchor_index)
        both = np.concatenate([a, n])
        assert np.array_equal(np.sort(both), np.arange(h * w))
        assert len(a) == (h * w + 1) // 2
        assert np.all(np.diff(a) > 0)
        assert len(n) == 0 or np.all(np.diff(n) > 0)
        mask = anchor_mask(h, w)
        hh, ww = np.divmod(a, w)
        assert np.all((hh + ww) % 2 == 0)
        assert mask.sum() == len(a)


class TestGatherScatter:
    def test_full_ascending_equals_reshape(self):
        x = rand(21, 3, 4, 5)
        full = np.arange(20)
        assert np.array_equal(gather(x, full), to_tokens(x))

    def test_partition_rows_cover_all_tokens(self):
        x = rand(22, 2, 5, 3)
        part = partition(5, 3)
        rows = np.concatenate(
            [gather(x, part.anchor_index), gather(x, part.nonanchor_index)]
        )
        order = np.concatenate([part.anchor_index, part.nonanchor_index])
        assert np.array_equal(rows[np.argsort(order)], to_tokens(x))

    def test_2x2_anchor_values(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        rows = gather(x, partition(2, 2).anchor_index)
        assert np.array_equal(rows, [[1.0], [4.0]])

    def test_out_of_range_index(self):
        x = rand(23, 1, 2, 2)
        with pytest.raises(IndexingError):
            gather(x, np.array([0, 4]))
        with pytest.raises(IndexingError):
            gather(x, np.array([-1]))

    def test_scatter_round_trip_100_cases(self):
        for trial in range(100):
            h = 1 + trial % 7
            w = 1 + (trial * 3) % 7
            c = 1 + trial % 4
            x = rand(trial + 500, c, h, w)
            part = partition(h, w)
            rebuilt = scatter(
                np.zeros_like(x), gather(x, part.anchor_index), part.anchor_index
            )
            rebuilt = scatter(
                rebuilt, gather(x, part.nonanchor_index), part.nonanchor_index
            )
            assert np.array_equal(rebuilt, x)

    def test_scatter_preserves_untouched(self):
        x = rand(24, 2, 4, 4)
        part = partition(4, 4)
        out = scatter(
            x, np.zeros((len(part.anchor_index), 2)), part.anchor_index
        )
        rows = gather(out, part.nonanchor_index)
        assert np.array_equal(rows, gather(x, part.nonanchor_index))

    def test_duplicate_index_rejected(self):
        x = rand(25, 1, 2, 2)
        with pytest.raises(IndexingError):
            scatter(x, np.zeros((2, 1)), np.array([1, 1]))

    def test_row_count_mismatch(self):
        x = rand(26, 1, 2, 2)
        with pytest.raises(ShapeError):
            scatter(x, np.zeros((3, 1)), np.array([0, 1]))


class TestMasks:
    def test_keep_split_reassembles(self):
        x = rand(27, 3, 5, 6)
        assert np.array_equal(keep_anchors(x) + keep_nonanchors(x), x)

    def test_keep_anchors_zeroes_nonanchors(self):
        x = rand(28, 2, 4, 5)
        kept = keep_anchors(x)
        part = partition(4, 5)
        assert np.all(gather(kept, part.nonanchor_index) == 0.0)
        assert np.array_equal(
            gather(kept, part.anchor_index), gather(x, part.anchor_index)
        )

    def test_keep_nonanchors_zeroes_anchors(self):
        x = rand(29, 2, 4, 5)
        kept = keep_nonanchors(x)
        part = partition(4, 5)
        assert np.all(gather(kept, part.anchor_index) == 0.0)

    def test_zeroed_cells_are_positive_zero(self):
        x = -np.ones((1, 2, 2))
        kept = keep_anchors(x)
        assert np.signbit(kept[0, 0, 1]) == False  # noqa: E712
