"""Context extractors feeding the entropy parameter head.

Five conditioning sources exist per slice i of the latent grid:

* hyper context: side-information features, 2M channels, slice independent;
* channel context: three 3x3 convs over the concatenation of previously
  decoded slices (slice indices < i);
* local spatial context: checkerboard window attention over the current
  slice's decoded anchors, fused by a KxK conv and a residual FFN;
* intra-slice global context: decomposed-softmax cross attention where
  the previous slice provides queries (at non-anchor cells) and keys (at
  anchor cells) and the current slice's anchors provide values;
* inter-slice global context: decomposed-softmax self attention over the
  concatenated previous slices.

The anchor coding pass may condition on hyper, channel, and inter-slice
contexts only; the non-anchor pass adds the local and intra-slice
contexts, which exist only once the anchors are decoded.  Slice 0 and
pass-level absences are zero tensors.  Every function here is a pure
function of explicit inputs and weights, which is what lets encoder and
decoder rebuild identical Gaussian fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import QKV, linear_global_attention, window_checkerboard_attention
from .checkerboard import (
    CheckerboardPartition,
    gather,
    keep_anchors,
    keep_nonanchors,
    scatter,
)
from .entropy import GaussianField
from .errors import ShapeError, StateError
from .numerics import (
    as_grid,
    conv2d,
    depthwise_conv2d,
    from_tokens,
    leaky_relu,
    to_tokens,
)
from .profiles import Profile
from .weights import WeightSet

__all__ = [
    "ContextBundle",
    "ANCHOR_PASS",
    "NONANCHOR_PASS",
    "position_embed",
    "depth_rb",
    "channel_context",
    "local_context",
    "intra_global_context",
    "inter_global_context",
    "entropy_params",
    "lrp_refine",
]

ANCHOR_PASS = "anchor"
NONANCHOR_PASS = "nonanchor"
_SIGMA_CLAMP = 10.0


@dataclass(frozen=True)
class ContextBundle:
    """The five context grids of one (slice, pass); zeros where absent."""

    phi_h: np.ndarray
    phi_ch: np.ndarray
    phi_lc: np.ndarray
    phi_gc_intra: np.ndarray
    phi_gc_inter: np.ndarray

    def __post_init__(self) -> None:
        grids = [
            as_grid(g, name)
            for name, g in (
                ("phi_h", self.phi_h),
                ("phi_ch", self.phi_ch),
                ("phi_lc", self.phi_lc),
                ("phi_gc_intra", self.phi_gc_intra),
                ("phi_gc_inter", self.phi_gc_inter),
            )
        ]
        spatial = {g.shape[1:] for g in grids}
        if len(spatial) != 1:
            raise ShapeError(f"bundle spatial dims differ: {sorted(spatial)}")
        for field_name, g in zip(
            ("phi_h", "phi_ch", "phi_lc", "phi_gc_intra", "phi_gc_inter"), grids
        ):
            object.__setattr__(self, field_name, g)


def _conv(ws: WeightSet, name: str, x: np.ndarray, stride: int = 1) -> np.ndarray:
    return conv2d(x, ws[f"{name}.w"], ws[f"{name}.b"], stride=stride)


def position_embed(x: np.ndarray, dw_weight: np.ndarray) -> np.ndarray:
    """Learnable position embedding: x + depthwise(x), zero-pad borders."""
    return as_grid(x) + depthwise_conv2d(x, dw_weight)


def depth_rb(
    x: np.ndarray,
    w1: np.ndarray,
    b1: np.ndarray,
    dw: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
) -> np.ndarray:
    """Depthwise residual bottleneck, channel preserving.

    x + conv1x1(leaky(depthwise3x3(conv1x1(x)))); zero inner weights make
    it the identity.
    """
    t = conv2d(x, w1, b1)
    t = depthwise_conv2d(t, dw)
    t = leaky_relu(t)
    t = conv2d(t, w2, b2)
    return x + t


def _depth_rb_named(ws: WeightSet, name: str, x: np.ndarray) -> np.ndarray:
    return depth_rb(
        x,
        ws[f"{name}.conv1.w"],
        ws[f"{name}.conv1.b"],
        ws[f"{name}.dw.w"],
        ws[f"{name}.conv2.w"],
        ws[f"{name}.conv2.b"],
    )


def _embed_tokens(ws: WeightSet, name: str, grid: np.ndarray) -> np.ndarray:
    """Global-attention leg embedding: 1x1 projection, then position
    embedding on the grid, then tokenization."""
    t = _conv(ws, f"{name}.proj", grid)
    t = position_embed(t, ws[f"{name}.dw.w"])
    return to_tokens(t)


def _check_state(state: Sequence[np.ndarray], i: int, profile: Profile) -> list:
    if i < 1:
        raise StateError(f"slice {i} has no previous slices to condition on")
    if len(state) < i:
        raise StateError(f"state holds {len(state)} slices, slice {i} needs {i}")
    slices = [as_grid(s, f"state slice {j}") for j, s in enumerate(state[:i])]
    for j, s in enumerate(slices):
        if s.shape[0] != profile.slice_channels:
            raise ShapeError(
                f"state slice {j} has {s.shape[0]} channels,"
                f" expected {profile.slice_channels}"
            )
        if s.shape[1:] != slices[0].shape[1:]:
            raise ShapeError("state slices have mismatched spatial dims")
    return slices


def channel_context(
    state: Sequence[np.ndarray], i: int, ws: WeightSet, profile: Profile
) -> np.ndarray:
    """Channel-wise context of slice i from slices < i; 2S channels.

    Uses exactly the first i slices of ``state``, so later entries can
    never leak in.
    """
    slices = _check_state(state, i, profile)
    x = np.concatenate(slices, axis=0)
    x = leaky_relu(_conv(ws, f"gch.{i}.conv1", x))
    x = leaky_relu(_conv(ws, f"gch.{i}.conv2", x))
    return _conv(ws, f"gch.{i}.conv3", x)


def local_context(
    anchor_grid: np.ndarray, i: int, ws: WeightSet, profile: Profile
) -> np.ndarray:
    """Window-attention context over decoded anchors of slice i; 2S channels.

    The input's non-anchor cells are zeroed here as well as being masked
    inside the attention, so non-anchor contents can never influence the
    output.  Valid only for the non-anchor pass.
    """
    x = keep_anchors(as_grid(anchor_grid, "anchor grid"))
    if x.shape[0] != profile.slice_channels:
        raise ShapeError(
            f"anchor grid has {x.shape[0]} channels,"
            f" expected {profile.slice_channels}"
        )
    q = _conv(ws, f"glc.{i}.embq", x)
    k = _conv(ws, f"glc.{i}.embk", x)
    v = _conv(ws, f"glc.{i}.embv", x)
    attn = window_checkerboard_attention(q, k, v, profile.window)
    fused = _conv(ws, f"glc.{i}.fuse", attn)
    hidden = leaky_relu(_conv(ws, f"glc.{i}.ffn1", fused))
    return fused + _conv(ws, f"glc.{i}.ffn2", hidden)


def intra_global_context(
    prev_slice: np.ndarray,
    cur_anchor: np.ndarray,
    part: CheckerboardPartition,
    i: int,
    ws: WeightSet,
    profile: Profile,
) -> np.ndarray:
    """Cross-slice global context for the non-anchor pass of slice i >= 1.

    Query tokens sit at non-anchor cells of the previous (complete)
    slice; keys sit at its anchor cells; values are the current slice's
    decoded anchors (non-anchors zeroed defensively).  The attention
    result is scattered back to non-anchor cells, refined by a KxK conv
    and a depthwise residual block, and re-masked so anchor cells of the
    output are exactly zero.
    """
    prev = as_grid(prev_slice, "previous slice")
    cur = keep_anchors(as_grid(cur_anchor, "current anchors"))
    if prev.shape != cur.shape:
        raise ShapeError(f"slice shapes differ: {prev.shape} vs {cur.shape}")
    if prev.shape[1:] != (part.height, part.width):
        raise ShapeError("partition dims do not match the slice grid")
    if i < 1:
        raise StateError("intra-slice context requires a previous slice")

    q_tok = _embed_tokens(ws, f"ggci.{i}.embq", prev)[part.nonanchor_index]
    k_tok = _embed_tokens(ws, f"ggci.{i}.embk", prev)[part.anchor_index]
    v_tok = _embed_tokens(ws, f"ggci.{i}.embv", cur)[part.anchor_index]
    attn = linear_global_attention(QKV(q=q_tok, k=k_tok, v=v_tok))

    grid = np.zeros_like(prev)
    grid = scatter(grid, attn, part.nonanchor_index)
    out = _conv(ws, f"ggci.{i}.refine", grid)
    out = _depth_rb_named(ws, f"ggci.{i}.rb", out)
    return keep_nonanchors(out)


def inter_global_context(
    state: Sequence[np.ndarray], i: int, ws: WeightSet, profile: Profile
) -> np.ndarray:
    """Global self attention over all previously decoded slices; 2S channels."""
    slices = _check_state(state, i, profile)
    x = np.concatenate(slices, axis=0)
    q_tok = _embed_tokens(ws, f"ggce.{i}.embq", x)
    k_tok = _embed_tokens(ws, f"ggce.{i}.embk", x)
    v_tok = _embed_tokens(ws, f"ggce.{i}.embv", x)
    attn = linear_global_attention(QKV(q=q_tok, k=k_tok, v=v_tok))
    grid = from_tokens(attn, x.shape[1], x.shape[2])
    out = _conv(ws, f"ggce.{i}.refine", grid)
    return _depth_rb_named(ws, f"ggce.{i}.rb", out)


def entropy_params(
    bundle: ContextBundle,
    pass_kind: str,
    i: int,
    ws: WeightSet,
    profile: Profile,
) -> GaussianField:
    """Gaussian parameters of slice i for one coding pass.

    The anchor pass must not see the local or intra-slice contexts (they
    depend on the very anchors being coded), so those components are
    zeroed here regardless of what the caller put in the bundle.  The
    concatenation order is frozen: hyper, channel, local, intra, inter.
    Raw scales are clamped to [-10, 10] before exponentiation, bounding
    sigma away from zero.
    """
    if pass_kind not in (ANCHOR_PASS, NONANCHOR_PASS):
        raise StateError(f"unknown pass kind {pass_kind!r}")
    phi_lc = bundle.phi_lc
    phi_intra = bundle.phi_gc_intra
    if pass_kind == ANCHOR_PASS:
        phi_lc = np.zeros_like(phi_lc)
        phi_intra = np.zeros_like(phi_intra)
    x = np.concatenate(
        [bundle.phi_h, bundle.phi_ch, phi_lc, phi_intra, bundle.phi_gc_inter],
        axis=0,
    )
    x = leaky_relu(_conv(ws, f"gep.{i}.conv1", x))
    x = leaky_relu(_conv(ws, f"gep.{i}.conv2", x))
    x = _conv(ws, f"gep.{i}.conv3", x)
    s = profile.slice_channels
    mu = x[:s]
    raw = np.clip(x[s : 2 * s], -_SIGMA_CLAMP, _SIGMA_CLAMP)
    return GaussianField(mu=mu, sigma=np.exp(raw))


def lrp_refine(
    phi_h: np.ndarray,
    slices_through_i: Sequence[np.ndarray],
    i: int,
    ws: WeightSet,
    profile: Profile,
) -> np.ndarray:
    """Reconstruction-path refinement of decoded slice i.

    Predicts a bounded quantization-error correction from the hyper
    context and decoded slices 0..i and returns slice i plus that
    correction (each element of the correction lies in (-0.5, 0.5)).
    Only the synthesis path consumes the result; the coded symbols and
    every downstream coding context keep using the unrefined slice.
    """
    if len(slices_through_i) != i + 1:
        raise StateError(
            f"lrp for slice {i} needs {i + 1} slices, got {len(slices_through_i)}"
        )
    slices = [as_grid(s, f"slice {j}") for j, s in enumerate(slices_through_i)]
    x = np.concatenate([as_grid(phi_h, "phi_h"), *slices], axis=0)
    x = leaky_relu(_conv(ws, f"lrp.{i}.conv1", x))
    x = leaky_relu(_conv(ws, f"lrp.{i}.conv2", x))
    x = _conv(ws, f"lrp.{i}.conv3", x)
    return slices[i] + 0.5 * np.tanh(x)
