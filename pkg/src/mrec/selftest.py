"""Fast built-in health checks shared by the CLI and the service.

Each check exercises one load-bearing guarantee at a size that finishes
in well under a second, so `selftest` can run on every deployment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rangecoder
from .attention import (
    QKV,
    decomposed_attention_quadratic,
    implicit_map_row,
    linear_global_attention,
)
from .bench import rel_err
from .codec import decode_latent, encode_latent
from .entropy import build_cdf, symbol_rate_bits
from .numerics import gen_weights, softmax_rows, splitmix64, uniform_from_bits
from .profiles import profile_by_name
from .weights import WeightSet

__all__ = ["CheckResult", "run_selftest"]

# -log2 of the unit-bin mass at d=0 under sigma=1, frozen from a
# high-precision evaluation of the Gaussian integral.
UNIT_BIN_BITS = 1.3848665342909897


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _mat(seed: int, rows: int, cols: int) -> np.ndarray:
    u = uniform_from_bits(splitmix64(seed, rows * cols))
    return (2.0 * u - 1.0).reshape(rows, cols)


def _check_weight_determinism() -> str:
    a = gen_weights(7, (4, 2, 2), fan_in=4)
    b = gen_weights(7, (4, 2, 2), fan_in=4)
    if a.tobytes() != b.tobytes():
        raise AssertionError("same seed produced different weights")
    if np.max(np.abs(a)) > 0.5:
        raise AssertionError("fan_in-4 weights exceeded the 0.5 bound")
    return "seeded generation reproducible and bounded"


def _check_softmax() -> str:
    m = _mat(11, 64, 16)
    sums = np.sum(softmax_rows(m), axis=1)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > 1e-12:
        raise AssertionError(f"row sums off by {worst:.3e}")
    return f"row sums within {worst:.1e}"


def _check_bracketing() -> str:
    qkv = QKV(q=_mat(21, 128, 16), k=_mat(22, 128, 16), v=_mat(23, 128, 16))
    err = rel_err(
        linear_global_attention(qkv), decomposed_attention_quadratic(qkv)
    )
    if err > 1e-9:
        raise AssertionError(f"bracketing divergence {err:.3e}")
    return f"bracketing equivalence at {err:.1e}"


def _check_implicit_map() -> str:
    qkv = QKV(q=_mat(31, 96, 8), k=_mat(32, 64, 8), v=_mat(33, 64, 8))
    for j in (0, 47, 95):
        row = implicit_map_row(qkv, j)
        if abs(float(np.sum(row)) - 1.0) > 1e-9 or row.min() < 0.0:
            raise AssertionError(f"row {j} is not a distribution")
    return "sampled implicit map rows are distributions"


def _check_range_coder() -> str:
    table = build_cdf(0.0, 1.5)
    bits = splitmix64(41, 512)
    symbols = (bits % np.uint64(9)).astype(np.int64) - 4
    symbols[17] = 300  # force the escape path
    symbols[200] = -1000
    tables = [table] * len(symbols)
    decoded = rangecoder.decode(rangecoder.encode(symbols, tables), tables)
    if list(symbols) != decoded:
        raise AssertionError("round trip mismatch")
    return f"{len(symbols)} symbols round tripped incl. escapes"


def _check_rate_constant() -> str:
    got = symbol_rate_bits(0.0, 0.0, 1.0)
    if abs(got - UNIT_BIN_BITS) > 1e-9:
        raise AssertionError(f"unit-bin rate {got!r}")
    return f"unit-bin rate {got:.12f} bits"


def _check_codec_round_trip() -> str:
    profile = profile_by_name("toy")
    ws = WeightSet.generate(profile, 3)
    y = 3.0 * _mat(51, profile.latent_channels, 30).reshape(
        profile.latent_channels, 6, 5
    )
    enc = encode_latent(y, ws)
    dec = decode_latent(enc.stream, ws)
    if not np.array_equal(enc.y_hat, dec.y_hat):
        raise AssertionError("latent round trip mismatch")
    est = enc.report.estimated_bits_total
    parts = sum(s.estimated_bits for s in enc.report.segments)
    if abs(est - parts) > 1e-6:
        raise AssertionError("rate decomposition mismatch")
    return f"6x5 latent round trip exact, {enc.report.actual_bytes_total} bytes"


_CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("weights.determinism", _check_weight_determinism),
    ("numerics.softmax_rows", _check_softmax),
    ("attention.bracketing", _check_bracketing),
    ("attention.implicit_map", _check_implicit_map),
    ("rangecoder.round_trip", _check_range_coder),
    ("entropy.unit_bin_rate", _check_rate_constant),
    ("codec.round_trip", _check_codec_round_trip),
]


def run_selftest() -> list[CheckResult]:
    results = []
    for name, fn in _CHECKS:
        try:
            results.append(CheckResult(name=name, passed=True, detail=fn()))
        except Exception as exc:  # report, never raise: selftest must finish
            results.append(CheckResult(name=name, passed=False, detail=str(exc)))
    return results
