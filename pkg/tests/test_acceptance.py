"""End-to-end acceptance suite.

One test per shipped guarantee, each printing a single
``ACCEPTANCE <n> PASS/FAIL`` line on the real terminal so a full run
reads as a checklist.  Tolerances are pinned here; the module tests may
check tighter bounds but never looser ones.
"""

from __future__ import annotations

import time
from typing import Callable

import numpy as np
import pytest

from mrec.attention import (
    QKV,
    decomposed_attention_quadratic,
    implicit_map_row,
    linear_global_attention,
    window_checkerboard_attention,
)
from mrec.bench import fit_r2, rel_err
from mrec.checkerboard import keep_anchors, keep_nonanchors, partition
from mrec.codec import decode_latent, encode_latent, rate_report
from mrec.context import (
    ANCHOR_PASS,
    NONANCHOR_PASS,
    ContextBundle,
    channel_context,
    entropy_params,
    inter_global_context,
    intra_global_context,
    local_context,
)
from mrec.entropy import build_cdf, symbol_rate_bits
from mrec.fileio import read_tensor
from mrec.numerics import alloc_meter, splitmix64, uniform_from_bits
from mrec.profiles import profile_by_name
from mrec.rangecoder import decode as rc_decode
from mrec.rangecoder import encode as rc_encode

from conftest import GOLDEN_DIR, rand
from oracles import window_attention_oracle

TOY = profile_by_name("toy")
BUNDLE_FIELDS = ("phi_h", "phi_ch", "phi_lc", "phi_gc_intra", "phi_gc_inter")


def _emit(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")


def _run(capsys, number: int, body: Callable[[], str]) -> None:
    try:
        detail = body()
    except BaseException as exc:
        _emit(capsys, number, False, str(exc) or repr(exc))
        raise
    _emit(capsys, number, True, detail)


def _ints(seed: int, n: int, low: int, high: int) -> list[int]:
    span = np.uint64(high - low + 1)
    return [int(b % span) + low for b in splitmix64(seed, n)]


def _normal(seed: int, n: int) -> np.ndarray:
    u1 = uniform_from_bits(splitmix64(seed, n))
    u2 = uniform_from_bits(splitmix64(seed + 1, n))
    u1 = np.maximum(u1, 1e-12)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def test_criterion_01_implicit_map_rows(capsys):
    """Sampled implicit-map rows are probability distributions."""

    def body() -> str:
        start = time.perf_counter()
        lengths = _ints(101, 200, 16, 1024)
        lengths[0], lengths[-1] = 16, 1024
        cols = _ints(102, 200, 4, 32)
        worst = 0.0
        for case, (length, c) in enumerate(zip(lengths, cols)):
            qkv = QKV(
                q=rand(3 * case + 1, length, c, low=-2.0, high=2.0),
                k=rand(3 * case + 2, length, c, low=-2.0, high=2.0),
                v=rand(3 * case + 3, length, c),
            )
            for j in (0, length // 2, length - 1):
                row = implicit_map_row(qkv, j)
                worst = max(worst, abs(float(np.sum(row)) - 1.0))
                assert row.min() >= 0.0 and row.max() <= 1.0, (case, j)
        assert worst <= 1e-9, worst
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"{elapsed:.1f} s"
        return (
            f"600 rows over 200 maps sum to 1 within {worst:.1e},"
            f" entries in [0,1], {elapsed:.1f} s"
        )

    _run(capsys, 1, body)


def test_criterion_02_bracketing_equivalence(capsys):
    """kv-first evaluation matches the quadratic order to 1e-9."""

    def body() -> str:
        start = time.perf_counter()
        lengths = _ints(201, 200, 16, 512)
        cols = _ints(202, 200, 4, 48)
        worst = 0.0
        for case, (length, c) in enumerate(zip(lengths, cols)):
            qkv = QKV(
                q=rand(7000 + 3 * case, length, c, low=-2.0, high=2.0),
                k=rand(7001 + 3 * case, length, c, low=-2.0, high=2.0),
                v=rand(7002 + 3 * case, length, c, low=-3.0, high=3.0),
            )
            err = rel_err(
                linear_global_attention(qkv),
                decomposed_attention_quadratic(qkv),
            )
            worst = max(worst, err)
        assert worst <= 1e-9, worst
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"{elapsed:.1f} s"
        return f"200 instances, max relative error {worst:.1e}, {elapsed:.1f} s"

    _run(capsys, 2, body)


def test_criterion_03_window_attention_oracle(capsys):
    """Windowed attention matches the per-query brute-force oracle."""

    def body() -> str:
        heights = _ints(301, 50, 1, 16)
        widths = _ints(302, 50, 1, 16)
        chans = [(4, 8, 16)[i % 3] for i in range(50)]
        worst = 0.0
        for case, (h, w, c) in enumerate(zip(heights, widths, chans)):
            q = rand(8000 + 3 * case, c, h, w, low=-2.0, high=2.0)
            k = rand(8001 + 3 * case, c, h, w, low=-2.0, high=2.0)
            v = rand(8002 + 3 * case, c, h, w, low=-3.0, high=3.0)
            got = window_checkerboard_attention(q, k, v, 5)
            want = window_attention_oracle(q, k, v, 5)
            worst = max(worst, float(np.abs(got - want).max()))
        assert worst <= 1e-10, worst
        return f"50 grids to 16x16 at window 5, max abs diff {worst:.1e}"

    _run(capsys, 3, body)


def test_criterion_04_causality_matrix(capsys, ws_toy):
    """Out-of-cone perturbations are bit-silent, in-cone ones are not."""

    h, w = 6, 5
    s2 = 2 * TOY.slice_channels

    def grids(seed: int, n: int) -> list[np.ndarray]:
        return [
            rand(seed + j, TOY.slice_channels, h, w, low=-2.0, high=2.0)
            for j in range(n)
        ]

    def bundle(seed: int) -> ContextBundle:
        return ContextBundle(
            phi_h=rand(seed, 2 * TOY.latent_channels, h, w),
            phi_ch=rand(seed + 1, s2, h, w),
            phi_lc=rand(seed + 2, s2, h, w),
            phi_gc_intra=rand(seed + 3, s2, h, w),
            phi_gc_inter=rand(seed + 4, s2, h, w),
        )

    def body() -> str:
        part = partition(h, w)
        failures: list[str] = []
        checks = 0

        def check(label: str, ok: bool) -> None:
            nonlocal checks
            checks += 1
            if not ok:
                failures.append(label)

        for i in range(1, TOY.slice_count):
            state = grids(40 * i, TOY.slice_count)
            base = channel_context(state, i, ws_toy, TOY)
            poked = [g.copy() for g in state]
            for j in range(i, TOY.slice_count):
                poked[j] += 3.0
            got = channel_context(poked, i, ws_toy, TOY)
            check(f"channel[i={i}] later slices", np.array_equal(got, base))
            for j in range(i):
                poked = [g.copy() for g in state]
                poked[j][0, 0, 0] += 0.5
                got = channel_context(poked, i, ws_toy, TOY)
                check(f"channel[i={i}] slice {j}", not np.array_equal(got, base))

        for i in range(TOY.slice_count):
            x = grids(400 + 10 * i, 1)[0]
            base = local_context(x, i, ws_toy, TOY)
            poked = x + keep_nonanchors(np.full_like(x, 5.0))
            got = local_context(poked, i, ws_toy, TOY)
            check(f"local[i={i}] non-anchors", np.array_equal(got, base))
            poked = x.copy()
            poked[0, 0, 0] += 0.5
            got = local_context(poked, i, ws_toy, TOY)
            check(f"local[i={i}] anchor cell", not np.array_equal(got, base))

        for i in range(1, TOY.slice_count):
            prev, cur = grids(800 + 10 * i, 2)
            base = intra_global_context(prev, cur, part, i, ws_toy, TOY)
            poked = cur + keep_nonanchors(np.full_like(cur, 5.0))
            got = intra_global_context(prev, poked, part, i, ws_toy, TOY)
            check(f"intra[i={i}] current non-anchors", np.array_equal(got, base))
            poked = prev.copy()
            poked[0, 0, 1] += 0.5
            got = intra_global_context(poked, cur, part, i, ws_toy, TOY)
            check(
                f"intra[i={i}] previous slice", not np.array_equal(got, base)
            )
            poked = cur.copy()
            poked[0, 0, 0] += 0.5
            got = intra_global_context(prev, poked, part, i, ws_toy, TOY)
            check(
                f"intra[i={i}] current anchors", not np.array_equal(got, base)
            )
            got = intra_global_context(prev, cur, part, i, ws_toy, TOY)
            check(
                f"intra[i={i}] anchor rows zero",
                np.array_equal(keep_anchors(got), np.zeros_like(got)),
            )

        for i in range(1, TOY.slice_count):
            state = grids(1200 + 10 * i, TOY.slice_count)
            base = inter_global_context(state, i, ws_toy, TOY)
            poked = [g.copy() for g in state]
            for j in range(i, TOY.slice_count):
                poked[j] -= 3.0
            got = inter_global_context(poked, i, ws_toy, TOY)
            check(f"inter[i={i}] later slices", np.array_equal(got, base))
            for j in range(i):
                poked = [g.copy() for g in state]
                poked[j][0, 1, 1] += 0.5
                got = inter_global_context(poked, i, ws_toy, TOY)
                check(f"inter[i={i}] slice {j}", not np.array_equal(got, base))

        for i in range(TOY.slice_count):
            b = bundle(1600 + 10 * i)
            base = entropy_params(b, ANCHOR_PASS, i, ws_toy, TOY)
            poked = ContextBundle(
                phi_h=b.phi_h,
                phi_ch=b.phi_ch,
                phi_lc=b.phi_lc + 2.0,
                phi_gc_intra=b.phi_gc_intra - 2.0,
                phi_gc_inter=b.phi_gc_inter,
            )
            got = entropy_params(poked, ANCHOR_PASS, i, ws_toy, TOY)
            check(
                f"params[i={i}] anchor pass vs local+intra",
                np.array_equal(got.mu, base.mu)
                and np.array_equal(got.sigma, base.sigma),
            )
            for name in ("phi_h", "phi_ch", "phi_gc_inter"):
                fields = {f: getattr(b, f) for f in BUNDLE_FIELDS}
                fields[name] = fields[name] + 0.5
                got = entropy_params(
                    ContextBundle(**fields), ANCHOR_PASS, i, ws_toy, TOY
                )
                check(
                    f"params[i={i}] anchor pass vs {name}",
                    not np.array_equal(got.mu, base.mu),
                )
            base = entropy_params(b, NONANCHOR_PASS, i, ws_toy, TOY)
            for name in BUNDLE_FIELDS:
                fields = {f: getattr(b, f) for f in BUNDLE_FIELDS}
                fields[name] = fields[name] + 0.5
                got = entropy_params(
                    ContextBundle(**fields), NONANCHOR_PASS, i, ws_toy, TOY
                )
                check(
                    f"params[i={i}] non-anchor pass vs {name}",
                    not np.array_equal(got.mu, base.mu)
                    or not np.array_equal(got.sigma, base.sigma),
                )

        assert not failures, failures
        return f"{checks} cone checks bit-exact across 5 modules"

    _run(capsys, 4, body)


def test_criterion_05_round_trips_and_goldens(
    capsys, ws_toy, ws_toy_single, ws_paper
):
    """Random latents round trip bit-exactly; golden streams still decode."""

    def body() -> str:
        plans = [
            ("toy", ws_toy, 8, 5000),
            ("toy-single", ws_toy_single, 8, 5200),
            ("paper", ws_paper, 3, 5400),
        ]
        total = 0
        for name, ws, max_side, seed in plans:
            profile = ws.profile
            heights = _ints(seed, 50, 1, max_side)
            widths = _ints(seed + 1, 50, 1, max_side)
            for case, (gh, gw) in enumerate(zip(heights, widths)):
                y = 3.0 * rand(
                    seed + 2 + case, profile.latent_channels, gh, gw
                )
                enc = encode_latent(y, ws)
                dec = decode_latent(enc.stream, ws)
                assert np.array_equal(dec.y_hat, enc.y_hat), (name, case)
                total += 1
        golden = 0
        for stem, ws in (
            ("toy", ws_toy),
            ("single", ws_toy_single),
            ("paper", ws_paper),
        ):
            stream = (GOLDEN_DIR / f"{stem}.memb").read_bytes()
            want = read_tensor(str(GOLDEN_DIR / f"{stem}.memt"))
            assert np.array_equal(decode_latent(stream, ws).y_hat, want), stem
            golden += 1
        return f"{total} random round trips exact, {golden} golden streams decode"

    _run(capsys, 5, body)


def test_criterion_06_rate_fidelity(capsys):
    """Coded bytes stay within 2% + 32 bytes of the ideal estimate."""

    def body() -> str:
        n = 10_000
        details = []
        cases: list[tuple[str, np.ndarray]] = [
            ("sigma=0.2", np.full(n, 0.2)),
            ("sigma=0.5", np.full(n, 0.5)),
            ("sigma=2", np.full(n, 2.0)),
            ("sigma=8", np.full(n, 8.0)),
        ]
        pool_sigmas = np.exp(
            np.log(0.2)
            + (np.log(8.0) - np.log(0.2)) * uniform_from_bits(splitmix64(601, 64))
        )
        cases.append(("sigma in [0.2,8]", pool_sigmas[np.arange(n) % 64]))
        for idx, (label, sigmas) in enumerate(cases):
            symbols = np.clip(
                np.round(_normal(610 + 2 * idx, n) * sigmas), -64, 64
            ).astype(np.int64)
            unique = {float(s) for s in np.unique(sigmas)}
            table_for = {s: build_cdf(0.0, s) for s in unique}
            tables = [table_for[float(s)] for s in sigmas]
            stream = rc_encode(symbols, tables)
            assert rc_decode(stream, tables) == list(symbols), label
            est_bits = float(np.sum(symbol_rate_bits(symbols, 0.0, sigmas)))
            bound = est_bits / 8.0 * 1.02 + 32.0
            assert len(stream) <= bound, (label, len(stream), bound)
            details.append(f"{label}: {len(stream)}B <= {bound:.0f}B")
        scalar = symbol_rate_bits(0.0, 0.0, 1.0)
        assert abs(scalar - 1.38494) <= 1e-4, scalar
        return (
            f"5 streams of {n} symbols within bound; unit bin"
            f" {scalar:.5f} bits"
        )

    _run(capsys, 6, body)


def test_criterion_07_rate_decomposition(capsys, ws_toy, ws_paper):
    """Reported totals equal the hyper plus per-pass segment sums."""

    def body() -> str:
        checked = 0
        worst = 0.0
        for case in range(5):
            y = 3.0 * rand(660 + case, TOY.latent_channels, 4 + case % 3, 5)
            report = encode_latent(y, ws_toy).report
            labels = [s.label for s in report.segments]
            assert labels[0] == "z" and len(labels) == 1 + 2 * TOY.slice_count
            gap = abs(
                report.estimated_bits_total
                - sum(s.estimated_bits for s in report.segments)
            )
            worst = max(worst, gap)
            assert gap <= 1e-6, gap
            assert report.actual_bytes_total == sum(
                s.actual_bytes for s in report.segments
            )
            checked += 1
        stream = (GOLDEN_DIR / "paper.memb").read_bytes()
        report = rate_report(stream, ws_paper)
        gap = abs(
            report.estimated_bits_total
            - sum(s.estimated_bits for s in report.segments)
        )
        worst = max(worst, gap)
        assert gap <= 1e-6, gap
        checked += 1
        return f"{checked} reports decompose exactly (worst gap {worst:.1e} bits)"

    _run(capsys, 7, body)


class TestCriterion08Scaling:
    RESOLUTIONS = (8, 16, 32, 64, 128)
    NOISE_REL = 0.10
    SLOW_QUALIFY_S = 1.0

    @staticmethod
    def _measure(fn, budget_s: float, max_samples: int):
        """Best-of-n wall time with a noise estimate.

        The workloads are deterministic, so scheduler and cache noise is
        strictly additive and the minimum approaches the true cost.  Noise
        is the disagreement between the minimums of three sample groups;
        a size whose groups disagree by 10% is too jittery to grade.
        """
        with alloc_meter() as meter:
            fn()
        elems = float(meter.elements)
        samples: list[float] = []
        while True:
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
            if samples[-1] > 2.0 or len(samples) >= max_samples:
                break
            if len(samples) >= 9 and sum(samples) >= budget_s:
                break
        best = min(samples)
        if len(samples) >= 9:
            group_mins = [float(g.min()) for g in np.array_split(samples, 3)]
            spread = (max(group_mins) - min(group_mins)) / best
        else:
            spread = float("inf")
        return elems, best, spread

    def test_criterion_08_scaling(self, capsys):
        """Linear kernel stays linear; the quadratic oracle does not."""

        def body() -> str:
            stats: dict[tuple[str, int], tuple[float, float, float]] = {}
            for res in self.RESOLUTIONS:
                tokens = res * res
                qkv = QKV(
                    q=rand(700 + res, tokens, 32),
                    k=rand(701 + res, tokens, 32),
                    v=rand(702 + res, tokens, 32),
                )
                stats[("linear", tokens)] = self._measure(
                    lambda: linear_global_attention(qkv), 1.0, 45
                )
                stats[("quad", tokens)] = self._measure(
                    lambda: decomposed_attention_quadratic(qkv), 3.0, 9
                )

            token_grid = [r * r for r in self.RESOLUTIONS]
            r2 = fit_r2(
                token_grid, [stats[("linear", t)][0] for t in token_grid]
            )
            assert r2 >= 0.99, r2
            for t in token_grid:
                assert stats[("quad", t)][0] >= float(t) ** 2

            def qualifies(kernel: str, tokens: int) -> bool:
                _, best, spread = stats[(kernel, tokens)]
                return spread < self.NOISE_REL or best >= self.SLOW_QUALIFY_S

            pairs = [(256, 1024), (1024, 4096), (4096, 16384)]
            quad_checked = lin_checked = 0
            for small, big in pairs:
                if qualifies("quad", small) and qualifies("quad", big):
                    ratio = stats[("quad", big)][1] / stats[("quad", small)][1]
                    assert ratio >= 10.0, (small, big, ratio)
                    quad_checked += 1
                if qualifies("linear", small) and qualifies("linear", big):
                    ratio = (
                        stats[("linear", big)][1] / stats[("linear", small)][1]
                    )
                    assert ratio <= 5.5, (small, big, ratio)
                    lin_checked += 1
            assert quad_checked >= 1, "no quadrupling pair beat the noise gate"
            assert lin_checked >= 1, "no quadrupling pair beat the noise gate"
            big_ratio = stats[("quad", 16384)][1] / stats[("quad", 4096)][1]
            return (
                f"element fit R2={r2:.6f}; {quad_checked} quad pairs >=10x"
                f" (largest {big_ratio:.1f}x), {lin_checked} linear pairs"
                f" <=5.5x"
            )

        _run(capsys, 8, body)


def test_criterion_09_degenerate_inputs(capsys, ws_toy, ws_toy_single, ws_zero):
    """1x1 grids, the single-slice profile, and zero weights all code."""

    def body() -> str:
        ran = []
        y = 3.0 * rand(901, TOY.latent_channels, 1, 1)
        enc = encode_latent(y, ws_toy)
        assert np.array_equal(decode_latent(enc.stream, ws_toy).y_hat, enc.y_hat)
        ran.append("1x1 grid")

        single = ws_toy_single.profile
        y = 3.0 * rand(902, single.latent_channels, 3, 4)
        enc = encode_latent(y, ws_toy_single)
        dec = decode_latent(enc.stream, ws_toy_single)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        ran.append("single-slice profile")

        y = 3.0 * rand(903, TOY.latent_channels, 4, 4)
        enc = encode_latent(y, ws_zero)
        dec = decode_latent(enc.stream, ws_zero)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        ran.append("all-zero weights")
        return ", ".join(f"{r} round trips" for r in ran)

    _run(capsys, 9, body)
