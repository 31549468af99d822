"""Scaling benchmarks: attention kernel complexity and codec throughput.

The attention bench times the production linear kernel against the
quadratic-bracketing oracle on square grids and records the intermediate
element counts reported by the kernels themselves.  Element counts are
deterministic, so the linearity claim rests on them; wall-time
thresholds carry generous slack.  Every run first re-verifies on its
smallest instance that the two bracketings agree (relative error
<= 1e-9), so speed numbers can never detach from correctness.

Benchmarks are single threaded by construction: every reduction runs
through fixed-order einsum with no internal threading.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from statistics import median
from typing import Callable, Sequence

import numpy as np

from .attention import (
    QKV,
    decomposed_attention_quadratic,
    linear_global_attention,
)
from .codec import decode_latent, encode_latent
from .errors import ConfigError, DomainError
from .numerics import alloc_meter, splitmix64, uniform_from_bits
from .profiles import Profile
from .weights import WeightSet

__all__ = [
    "ORACLE_TOKEN_CAP",
    "ScalingRow",
    "CodecRow",
    "ATTENTION_CSV_FIELDS",
    "CODEC_CSV_FIELDS",
    "rel_err",
    "fit_r2",
    "bench_attention",
    "bench_codec",
    "write_attention_csv",
    "write_codec_csv",
]

ORACLE_TOKEN_CAP = 16384
ATTENTION_CSV_FIELDS = (
    "resolution",
    "tokens",
    "linear_time_s",
    "quad_time_s",
    "linear_elems",
    "quad_elems",
)
CODEC_CSV_FIELDS = ("resolution", "tokens", "encode_time_s", "decode_time_s", "bpp")
_SLOW_SAMPLE_S = 2.0


@dataclass(frozen=True)
class ScalingRow:
    """One attention measurement; quad fields are NaN when the oracle is
    skipped past the token cap."""

    resolution: int
    tokens: int
    linear_time_s: float
    quad_time_s: float
    linear_elems: float
    quad_elems: float
    oracle_skipped: bool


@dataclass(frozen=True)
class CodecRow:
    resolution: int
    tokens: int
    encode_time_s: float
    decode_time_s: float
    bpp: float


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference normalized by the reference's max magnitude."""
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


def fit_r2(x: Sequence[float], y: Sequence[float]) -> float:
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def _uniform_matrix(seed: int, rows: int, cols: int, offset: int) -> np.ndarray:
    u = uniform_from_bits(splitmix64(seed, rows * cols, offset))
    return (2.0 * u - 1.0).reshape(rows, cols)


def _make_qkv(seed: int, tokens: int, cols: int) -> QKV:
    return QKV(
        q=_uniform_matrix(seed, tokens, cols, 0),
        k=_uniform_matrix(seed, tokens, cols, tokens * cols),
        v=_uniform_matrix(seed, tokens, cols, 2 * tokens * cols),
    )


def _time_kernel(fn: Callable[[], object], repeats: int) -> float:
    """Median wall time; a sample beyond a couple of seconds stands alone."""
    fn()  # warm caches outside the timed samples
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        times.append(dt)
        if dt > _SLOW_SAMPLE_S:
            break
    return median(times)


def _check_sizes(resolutions: Sequence[int]) -> list[int]:
    sizes = [int(r) for r in resolutions]
    if not sizes:
        raise ConfigError("at least one resolution is required")
    if any(r < 1 for r in sizes):
        raise ConfigError(f"resolutions must be >= 1, got {sizes}")
    if sorted(sizes) != sizes:
        raise ConfigError(f"resolutions must be sorted ascending, got {sizes}")
    return sizes


def bench_attention(
    resolutions: Sequence[int],
    repeats: int = 3,
    seed: int = 0,
    cols: int = 32,
    oracle_cap: int | None = None,
) -> list[ScalingRow]:
    """Measure both kernels over square grids of the given side lengths."""
    sizes = _check_sizes(resolutions)
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    if oracle_cap is None:
        oracle_cap = ORACLE_TOKEN_CAP

    probe = _make_qkv(seed, sizes[0] * sizes[0], cols)
    err = rel_err(
        linear_global_attention(probe), decomposed_attention_quadratic(probe)
    )
    if err > 1e-9:
        raise DomainError(
            f"bracketing equivalence failed on the smallest instance: {err:.3e}"
        )

    rows = []
    for res in sizes:
        tokens = res * res
        qkv = _make_qkv(seed, tokens, cols)
        with alloc_meter() as meter:
            linear_global_attention(qkv)
        linear_elems = float(meter.elements)
        linear_time = _time_kernel(lambda: linear_global_attention(qkv), repeats)

        if tokens <= oracle_cap:
            with alloc_meter() as meter:
                decomposed_attention_quadratic(qkv)
            quad_elems = float(meter.elements)
            quad_time = _time_kernel(
                lambda: decomposed_attention_quadratic(qkv), repeats
            )
            skipped = False
        else:
            quad_elems = float("nan")
            quad_time = float("nan")
            skipped = True
        rows.append(
            ScalingRow(
                resolution=res,
                tokens=tokens,
                linear_time_s=linear_time,
                quad_time_s=quad_time,
                linear_elems=linear_elems,
                quad_elems=quad_elems,
                oracle_skipped=skipped,
            )
        )
    return rows


def bench_codec(
    resolutions: Sequence[int],
    profile: Profile,
    seed: int = 0,
    repeats: int = 1,
) -> list[CodecRow]:
    """Encode/decode random latents per grid size; round trip gates timing."""
    sizes = _check_sizes(resolutions)
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    ws = WeightSet.generate(profile, seed)
    rows = []
    for res in sizes:
        y = 4.0 * _uniform_matrix(seed + res, profile.latent_channels, res * res, 0)
        y = y.reshape(profile.latent_channels, res, res)

        enc = encode_latent(y, ws)
        dec = decode_latent(enc.stream, ws)
        if not np.array_equal(enc.y_hat, dec.y_hat):
            raise DomainError(f"round trip failed at resolution {res}")

        encode_time = _time_kernel(lambda: encode_latent(y, ws), repeats)
        decode_time = _time_kernel(lambda: decode_latent(enc.stream, ws), repeats)
        rows.append(
            CodecRow(
                resolution=res,
                tokens=res * res,
                encode_time_s=encode_time,
                decode_time_s=decode_time,
                bpp=enc.report.bpp,
            )
        )
    return rows


def write_attention_csv(rows: Sequence[ScalingRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTENTION_CSV_FIELDS)
        for r in rows:
            writer.writerow(
                [
                    r.resolution,
                    r.tokens,
                    f"{r.linear_time_s:.9f}",
                    f"{r.quad_time_s:.9f}",
                    f"{r.linear_elems:.0f}",
                    f"{r.quad_elems:.0f}",
                ]
            )


def write_codec_csv(rows: Sequence[CodecRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CODEC_CSV_FIELDS)
        for r in rows:
            writer.writerow(
                [
                    r.resolution,
                    r.tokens,
                    f"{r.encode_time_s:.9f}",
                    f"{r.decode_time_s:.9f}",
                    f"{r.bpp:.6f}",
                ]
            )
