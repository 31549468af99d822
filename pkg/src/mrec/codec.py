"""End-to-end codec: transforms, hyper pathway, two-pass slice coding.

Bitstream container
-------------------
magic ``MEMB`` | version u8 | profile id u8 | pixel height u32 LE |
pixel width u32 LE | weights digest u64 LE | then 1 + 2 * slice_count
segments, each a u32 LE byte length followed by that many bytes.  The
segments are: the side-information stream, then for each slice in order
its anchor stream and its non-anchor stream.

The latent grid is ceil(pixels / 16) per axis (four stride-2 stages) and
the side-information grid is ceil(latent / 4); both derive from the
header, so no grid dims are stored.  Latents encoded directly (without
an image) use pixel dims of 16x the latent grid.

Within a segment, symbols run channel-major: all of channel 0's cells in
ascending token order, then channel 1, and so on.  Tables are rebuilt on
the decode side from the same Gaussian fields, never serialized.

The decoder reproduces every context from decoded values only, so all
Gaussian fields match the encoder's bit for bit; the round trip returns
the encoder's quantized latent exactly.  The bounded refinement applied
for reconstruction never feeds back into coding contexts: coded symbols
and context state use the unrefined quantized slices throughout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rangecoder
from .checkerboard import CheckerboardPartition, gather, partition, scatter
from .context import (
    ANCHOR_PASS,
    NONANCHOR_PASS,
    ContextBundle,
    channel_context,
    entropy_params,
    inter_global_context,
    intra_global_context,
    local_context,
    lrp_refine,
)
from .entropy import (
    SYMBOL_MIN,
    GaussianField,
    build_cdf_counts,
    round_half_away,
    symbol_rate_bits,
)
from .errors import ConfigError, DomainError, FormatError
from .numerics import as_grid, conv2d, leaky_relu
from .profiles import Profile, profile_by_id
from .weights import WeightSet

__all__ = [
    "MAGIC_BITSTREAM",
    "PIXELS_PER_LATENT",
    "ContextToggles",
    "SegmentRate",
    "RateReport",
    "EncodeResult",
    "DecodeResult",
    "latent_dims_for_pixels",
    "hyper_dims_for_latent",
    "toy_analysis",
    "toy_synthesis",
    "hyper_analyze",
    "hyper_synthesize",
    "hyper_sigma",
    "encode_latent",
    "decode_latent",
    "encode_image",
    "decode_image",
    "rate_report",
]

MAGIC_BITSTREAM = b"MEMB"
_VERSION = 1
PIXELS_PER_LATENT = 16
_TABLE_CHUNK = 1 << 16


@dataclass(frozen=True)
class ContextToggles:
    """Enable flags for the four conditioning modules.

    Disabled modules contribute zero tensors.  Toggles are not recorded
    in the bitstream; decoding requires the encoding-time configuration,
    exactly like the weights.
    """

    channel: bool = True
    local: bool = True
    intra: bool = True
    inter: bool = True


@dataclass(frozen=True)
class SegmentRate:
    """One coded segment: its label, ideal bits, and actual byte length."""

    label: str
    estimated_bits: float
    actual_bytes: int


@dataclass(frozen=True)
class RateReport:
    """Per-segment and total rate accounting of one bitstream.

    ``bpp`` counts the whole file (header included) against the pixel
    count.  ``mse`` is filled by the image path only.
    """

    segments: tuple[SegmentRate, ...]
    estimated_bits_total: float
    actual_bytes_total: int
    pixel_count: int
    file_bytes: int
    bpp: float
    mse: float | None = None

    @classmethod
    def build(
        cls,
        segments: list[SegmentRate],
        pixel_count: int,
        file_bytes: int,
        mse: float | None = None,
    ) -> "RateReport":
        return cls(
            segments=tuple(segments),
            estimated_bits_total=math.fsum(s.estimated_bits for s in segments),
            actual_bytes_total=sum(s.actual_bytes for s in segments),
            pixel_count=pixel_count,
            file_bytes=file_bytes,
            bpp=8.0 * file_bytes / pixel_count,
            mse=mse,
        )

    def to_dict(self) -> dict:
        d = {
            "segments": [
                {
                    "label": s.label,
                    "estimated_bits": s.estimated_bits,
                    "actual_bytes": s.actual_bytes,
                }
                for s in self.segments
            ],
            "estimated_bits_total": self.estimated_bits_total,
            "actual_bytes_total": self.actual_bytes_total,
            "pixel_count": self.pixel_count,
            "file_bytes": self.file_bytes,
            "bpp": self.bpp,
        }
        if self.mse is not None:
            d["mse"] = self.mse
        return d


@dataclass
class EncodeResult:
    """Encoder output plus the state tests need for exactness checks."""

    stream: bytes
    report: RateReport
    y_hat: np.ndarray
    refined: np.ndarray
    fields: list[GaussianField] = field(repr=False)
    recon: np.ndarray | None = None


@dataclass
class DecodeResult:
    """Decoder output with the recomputed rate accounting."""

    y_hat: np.ndarray
    refined: np.ndarray
    report: RateReport
    pixel_hw: tuple[int, int]
    fields: list[GaussianField] = field(repr=False)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def latent_dims_for_pixels(height: int, width: int) -> tuple[int, int]:
    return _ceil_div(height, PIXELS_PER_LATENT), _ceil_div(width, PIXELS_PER_LATENT)


def hyper_dims_for_latent(height: int, width: int) -> tuple[int, int]:
    return _ceil_div(height, 4), _ceil_div(width, 4)


def _upsample2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _conv(ws: WeightSet, name: str, x: np.ndarray, stride: int = 1) -> np.ndarray:
    return conv2d(x, ws[f"{name}.w"], ws[f"{name}.b"], stride=stride)


def toy_analysis(image: np.ndarray, ws: WeightSet) -> np.ndarray:
    """Four stride-2 convs: (3, H, W) image to a 16x-reduced latent."""
    x = as_grid(image, "image")
    if x.shape[0] != 3:
        raise ConfigError(f"image must have 3 channels, got {x.shape[0]}")
    for j in range(1, 5):
        x = _conv(ws, f"ta.conv{j}", x, stride=2)
        if j < 4:
            x = leaky_relu(x)
    return x


def toy_synthesis(
    latent: np.ndarray, ws: WeightSet, out_hw: tuple[int, int]
) -> np.ndarray:
    """Mirror chain: nearest 2x upsample + conv, four stages, clamp [0, 1].

    Each stage crops to the exact intermediate dims of the analysis chain
    so odd pixel dims round trip.
    """
    x = as_grid(latent, "latent")
    h, w = out_hw
    targets = [
        (_ceil_div(h, 8), _ceil_div(w, 8)),
        (_ceil_div(h, 4), _ceil_div(w, 4)),
        (_ceil_div(h, 2), _ceil_div(w, 2)),
        (h, w),
    ]
    if x.shape[1:] != (_ceil_div(h, 16), _ceil_div(w, 16)):
        raise ConfigError(
            f"latent grid {x.shape[1:]} does not match pixel dims {out_hw}"
        )
    for j, (th, tw) in enumerate(targets, start=1):
        x = _upsample2(x)[:, :th, :tw]
        x = _conv(ws, f"ts.conv{j}", x)
        if j < 4:
            x = leaky_relu(x)
    return np.clip(x, 0.0, 1.0)


def hyper_analyze(y: np.ndarray, ws: WeightSet) -> np.ndarray:
    """Two stride-2 convs from the latent to the side-information grid."""
    x = leaky_relu(_conv(ws, "ha.conv1", y, stride=2))
    return _conv(ws, "ha.conv2", x, stride=2)


def hyper_sigma(ws: WeightSet) -> np.ndarray:
    """Per-channel scales of the factorized side-information model."""
    return np.exp(ws["zprior.logsigma"])


def hyper_synthesize(
    z_hat: np.ndarray, ws: WeightSet, latent_hw: tuple[int, int]
) -> np.ndarray:
    """Decoded side info to the hyper context (2M channels, latent dims)."""
    lh, lw = latent_hw
    x = _upsample2(z_hat)[:, : _ceil_div(lh, 2), : _ceil_div(lw, 2)]
    x = leaky_relu(_conv(ws, "hs.conv1", x))
    x = _upsample2(x)[:, :lh, :lw]
    return _conv(ws, "hs.conv2", x)


def _table_column(sigma_flat: np.ndarray) -> rangecoder.TableColumn:
    """Escape-capable frequency tables for a flat sigma vector, chunked."""
    parts = [
        build_cdf_counts(sigma_flat[i : i + _TABLE_CHUNK])
        for i in range(0, len(sigma_flat), _TABLE_CHUNK)
    ]
    counts = np.vstack(parts) if parts else np.zeros((0, 0), dtype=np.int64)
    if len(counts):
        cum = np.concatenate(
            [np.zeros((len(counts), 1), dtype=np.int64), np.cumsum(counts, axis=1)],
            axis=1,
        )
    else:
        cum = np.zeros((0, 2), dtype=np.int64)
    return rangecoder.TableColumn(
        offset=SYMBOL_MIN - 1, cum=cum, has_escapes=True
    )


def _channel_major(rows: np.ndarray) -> np.ndarray:
    """(positions, channels) rows to the frozen channel-major symbol order."""
    return np.ascontiguousarray(rows.T).reshape(-1)


def _zeros_ctx(profile: Profile, h: int, w: int) -> np.ndarray:
    return np.zeros((2 * profile.slice_channels, h, w), dtype=np.float64)


def _slice_contexts(
    i: int,
    state: list[np.ndarray],
    ws: WeightSet,
    profile: Profile,
    toggles: ContextToggles,
    h: int,
    w: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Anchor-pass-visible contexts of slice i (channel and inter-slice)."""
    phi_ch = (
        channel_context(state, i, ws, profile)
        if i >= 1 and toggles.channel
        else _zeros_ctx(profile, h, w)
    )
    phi_inter = (
        inter_global_context(state, i, ws, profile)
        if i >= 1 and toggles.inter
        else _zeros_ctx(profile, h, w)
    )
    return phi_ch, phi_inter


def _nonanchor_contexts(
    i: int,
    state: list[np.ndarray],
    anchor_grid: np.ndarray,
    part: CheckerboardPartition,
    ws: WeightSet,
    profile: Profile,
    toggles: ContextToggles,
    h: int,
    w: int,
) -> tuple[np.ndarray, np.ndarray]:
    phi_lc = (
        local_context(anchor_grid, i, ws, profile)
        if toggles.local
        else _zeros_ctx(profile, h, w)
    )
    phi_intra = (
        intra_global_context(state[i - 1], anchor_grid, part, i, ws, profile)
        if i >= 1 and toggles.intra
        else _zeros_ctx(profile, h, w)
    )
    return phi_lc, phi_intra


def _pass_rate_bits(d_rows: np.ndarray, sigma_rows: np.ndarray) -> float:
    return float(np.sum(symbol_rate_bits(d_rows, 0.0, sigma_rows)))


def _pack_stream(
    profile: Profile,
    pixel_hw: tuple[int, int],
    digest: int,
    segments: list[bytes],
) -> bytes:
    head = MAGIC_BITSTREAM + struct.pack(
        "<BBIIQ",
        _VERSION,
        profile.profile_id,
        pixel_hw[0],
        pixel_hw[1],
        digest & (2**64 - 1),
    )
    body = b"".join(struct.pack("<I", len(s)) + s for s in segments)
    return head + body


def _unpack_stream(
    data: bytes,
) -> tuple[Profile, tuple[int, int], int, list[bytes]]:
    head_len = len(MAGIC_BITSTREAM) + struct.calcsize("<BBIIQ")
    if len(data) < head_len:
        raise FormatError("bitstream too short for its header")
    if data[:4] != MAGIC_BITSTREAM:
        raise FormatError(f"bad bitstream magic {data[:4]!r}")
    version, profile_id, h, w, digest = struct.unpack("<BBIIQ", data[4:head_len])
    if version != _VERSION:
        raise FormatError(f"unsupported bitstream version {version}")
    profile = profile_by_id(profile_id)
    if h < 1 or w < 1:
        raise FormatError(f"pixel dims must be >= 1, got {h}x{w}")
    segments: list[bytes] = []
    pos = head_len
    for _ in range(1 + 2 * profile.slice_count):
        if pos + 4 > len(data):
            raise FormatError("bitstream truncated inside segment table")
        (seg_len,) = struct.unpack("<I", data[pos : pos + 4])
        pos += 4
        if pos + seg_len > len(data):
            raise FormatError("bitstream truncated inside a segment")
        segments.append(data[pos : pos + seg_len])
        pos += seg_len
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last segment")
    return profile, (h, w), digest, segments


def encode_latent(
    y: np.ndarray,
    ws: WeightSet,
    pixel_hw: tuple[int, int] | None = None,
    toggles: ContextToggles = ContextToggles(),
) -> EncodeResult:
    """Quantize and code a latent grid; contexts see quantized values only."""
    profile = ws.profile
    y = as_grid(y, "latent")
    if y.shape[0] != profile.latent_channels:
        raise ConfigError(
            f"latent has {y.shape[0]} channels, profile"
            f" {profile.name} expects {profile.latent_channels}"
        )
    if not np.all(np.isfinite(y)):
        raise DomainError("latent values must be finite")
    _, h, w = y.shape
    if pixel_hw is None:
        pixel_hw = (h * PIXELS_PER_LATENT, w * PIXELS_PER_LATENT)
    if latent_dims_for_pixels(*pixel_hw) != (h, w):
        raise ConfigError(
            f"pixel dims {pixel_hw} do not map to latent grid {(h, w)}"
        )

    s = profile.slice_channels
    part = partition(h, w)

    z = hyper_analyze(y, ws)
    z_hat = round_half_away(z)
    sigma_z = hyper_sigma(ws)
    sig_z_full = np.broadcast_to(
        sigma_z[:, None, None], z_hat.shape
    ).reshape(-1)
    seg_z = rangecoder.encode(
        z_hat.reshape(-1).astype(np.int64), _table_column(sig_z_full)
    )
    est_z = float(np.sum(symbol_rate_bits(z_hat, 0.0, sigma_z[:, None, None])))

    phi_h = hyper_synthesize(z_hat, ws, (h, w))

    segments = [seg_z]
    seg_rates = [SegmentRate("z", est_z, len(seg_z))]
    state: list[np.ndarray] = []
    fields: list[GaussianField] = []
    zeros_ctx = _zeros_ctx(profile, h, w)

    for i in range(profile.slice_count):
        y_i = y[i * s : (i + 1) * s]
        phi_ch, phi_inter = _slice_contexts(i, state, ws, profile, toggles, h, w)

        bundle_a = ContextBundle(phi_h, phi_ch, zeros_ctx, zeros_ctx, phi_inter)
        field_a = entropy_params(bundle_a, ANCHOR_PASS, i, ws, profile)
        fields.append(field_a)
        mu_a = gather(field_a.mu, part.anchor_index)
        sig_a = gather(field_a.sigma, part.anchor_index)
        d_a = round_half_away(gather(y_i, part.anchor_index) - mu_a)
        seg_a = rangecoder.encode(
            _channel_major(d_a).astype(np.int64),
            _table_column(_channel_major(sig_a)),
        )
        anchor_grid = scatter(
            np.zeros_like(y_i), d_a + mu_a, part.anchor_index
        )

        phi_lc, phi_intra = _nonanchor_contexts(
            i, state, anchor_grid, part, ws, profile, toggles, h, w
        )
        bundle_n = ContextBundle(phi_h, phi_ch, phi_lc, phi_intra, phi_inter)
        field_n = entropy_params(bundle_n, NONANCHOR_PASS, i, ws, profile)
        fields.append(field_n)
        mu_n = gather(field_n.mu, part.nonanchor_index)
        sig_n = gather(field_n.sigma, part.nonanchor_index)
        d_n = round_half_away(gather(y_i, part.nonanchor_index) - mu_n)
        seg_n = rangecoder.encode(
            _channel_major(d_n).astype(np.int64),
            _table_column(_channel_major(sig_n)),
        )
        y_hat_i = scatter(anchor_grid, d_n + mu_n, part.nonanchor_index)

        state.append(y_hat_i)
        segments += [seg_a, seg_n]
        seg_rates += [
            SegmentRate(f"slice{i}.anchor", _pass_rate_bits(d_a, sig_a), len(seg_a)),
            SegmentRate(
                f"slice{i}.nonanchor", _pass_rate_bits(d_n, sig_n), len(seg_n)
            ),
        ]

    stream = _pack_stream(profile, pixel_hw, ws.digest, segments)
    refined = np.concatenate(
        [
            lrp_refine(phi_h, state[: i + 1], i, ws, profile)
            for i in range(profile.slice_count)
        ],
        axis=0,
    )
    report = RateReport.build(
        seg_rates, pixel_hw[0] * pixel_hw[1], len(stream)
    )
    return EncodeResult(
        stream=stream,
        report=report,
        y_hat=np.concatenate(state, axis=0),
        refined=refined,
        fields=fields,
    )


def decode_latent(
    data: bytes,
    ws: WeightSet,
    toggles: ContextToggles = ContextToggles(),
) -> DecodeResult:
    """Decode a bitstream back to the encoder's quantized latent."""
    profile, pixel_hw, digest, segments = _unpack_stream(data)
    if profile.profile_id != ws.profile.profile_id:
        raise FormatError(
            f"stream uses profile {profile.name!r},"
            f" weights are for {ws.profile.name!r}"
        )
    if digest != ws.digest:
        raise FormatError(
            f"weights digest mismatch: stream {digest:016x},"
            f" loaded {ws.digest:016x}"
        )
    h, w = latent_dims_for_pixels(*pixel_hw)
    zh, zw = hyper_dims_for_latent(h, w)
    s = profile.slice_channels
    n = profile.hyper_channels
    part = partition(h, w)

    sigma_z = hyper_sigma(ws)
    sig_z_full = np.broadcast_to(sigma_z[:, None, None], (n, zh, zw)).reshape(-1)
    z_syms = rangecoder.decode(segments[0], _table_column(sig_z_full))
    z_hat = np.asarray(z_syms, dtype=np.float64).reshape(n, zh, zw)
    est_z = float(np.sum(symbol_rate_bits(z_hat, 0.0, sigma_z[:, None, None])))
    seg_rates = [SegmentRate("z", est_z, len(segments[0]))]

    phi_h = hyper_synthesize(z_hat, ws, (h, w))
    state: list[np.ndarray] = []
    fields: list[GaussianField] = []
    zeros_ctx = _zeros_ctx(profile, h, w)

    for i in range(profile.slice_count):
        phi_ch, phi_inter = _slice_contexts(i, state, ws, profile, toggles, h, w)

        bundle_a = ContextBundle(phi_h, phi_ch, zeros_ctx, zeros_ctx, phi_inter)
        field_a = entropy_params(bundle_a, ANCHOR_PASS, i, ws, profile)
        fields.append(field_a)
        mu_a = gather(field_a.mu, part.anchor_index)
        sig_a = gather(field_a.sigma, part.anchor_index)
        seg_a = segments[1 + 2 * i]
        syms_a = rangecoder.decode(seg_a, _table_column(_channel_major(sig_a)))
        d_a = (
            np.asarray(syms_a, dtype=np.float64)
            .reshape(s, len(part.anchor_index))
            .T
        )
        anchor_grid = scatter(
            np.zeros((s, h, w), dtype=np.float64), d_a + mu_a, part.anchor_index
        )

        phi_lc, phi_intra = _nonanchor_contexts(
            i, state, anchor_grid, part, ws, profile, toggles, h, w
        )
        bundle_n = ContextBundle(phi_h, phi_ch, phi_lc, phi_intra, phi_inter)
        field_n = entropy_params(bundle_n, NONANCHOR_PASS, i, ws, profile)
        fields.append(field_n)
        mu_n = gather(field_n.mu, part.nonanchor_index)
        sig_n = gather(field_n.sigma, part.nonanchor_index)
        seg_n = segments[2 + 2 * i]
        syms_n = rangecoder.decode(seg_n, _table_column(_channel_major(sig_n)))
        d_n = (
            np.asarray(syms_n, dtype=np.float64)
            .reshape(s, len(part.nonanchor_index))
            .T
        )
        y_hat_i = scatter(anchor_grid, d_n + mu_n, part.nonanchor_index)

        state.append(y_hat_i)
        seg_rates += [
            SegmentRate(f"slice{i}.anchor", _pass_rate_bits(d_a, sig_a), len(seg_a)),
            SegmentRate(
                f"slice{i}.nonanchor", _pass_rate_bits(d_n, sig_n), len(seg_n)
            ),
        ]

    refined = np.concatenate(
        [
            lrp_refine(phi_h, state[: i + 1], i, ws, profile)
            for i in range(profile.slice_count)
        ],
        axis=0,
    )
    report = RateReport.build(
        seg_rates, pixel_hw[0] * pixel_hw[1], len(data)
    )
    return DecodeResult(
        y_hat=np.concatenate(state, axis=0),
        refined=refined,
        report=report,
        pixel_hw=pixel_hw,
        fields=fields,
    )


def encode_image(
    img: np.ndarray,
    ws: WeightSet,
    toggles: ContextToggles = ContextToggles(),
) -> EncodeResult:
    """Encode an RGB image; lossy in pixels, lossless in the latent."""
    img = as_grid(img, "image")
    if not np.all(np.isfinite(img)):
        raise DomainError("image values must be finite")
    _, h, w = img.shape
    y = toy_analysis(img, ws)
    result = encode_latent(y, ws, pixel_hw=(h, w), toggles=toggles)
    recon = toy_synthesis(result.refined, ws, (h, w))
    mse = float(np.mean((img - recon) ** 2))
    result.report = RateReport.build(
        list(result.report.segments),
        result.report.pixel_count,
        result.report.file_bytes,
        mse=mse,
    )
    result.recon = recon
    return result


def decode_image(
    data: bytes,
    ws: WeightSet,
    toggles: ContextToggles = ContextToggles(),
) -> tuple[np.ndarray, DecodeResult]:
    """Decode a bitstream to the reconstructed image."""
    result = decode_latent(data, ws, toggles=toggles)
    img = toy_synthesis(result.refined, ws, result.pixel_hw)
    return img, result


def rate_report(data: bytes, ws: WeightSet) -> RateReport:
    """Recompute the rate accounting of a bitstream by decoding it."""
    return decode_latent(data, ws).report
