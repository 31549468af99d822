"""End-to-end codec: transforms, framing, round trips, rate reports."""

from __future__ import annotations

import numpy as np
import pytest

from mrec.codec import (
    ContextToggles,
    decode_image,
    decode_latent,
    encode_image,
    encode_latent,
    hyper_analyze,
    hyper_dims_for_latent,
    hyper_synthesize,
    latent_dims_for_pixels,
    rate_report,
    toy_analysis,
    toy_synthesis,
)
from mrec.entropy import quantize
from mrec.errors import CoderError, ConfigError, DomainError, FormatError
from mrec.fileio import tensor_from_bytes
from mrec.profiles import profile_by_name
from mrec.weights import WeightSet

from conftest import GOLDEN_DIR, rand

TOY = profile_by_name("toy")


def latent(seed: int, h: int, w: int, profile=TOY) -> np.ndarray:
    return rand(
        seed, profile.latent_channels, h, w, low=-2.0, high=2.0
    )


class TestDims:
    def test_latent_dims(self):
        assert latent_dims_for_pixels(64, 64) == (4, 4)
        assert latent_dims_for_pixels(1, 1) == (1, 1)
        assert latent_dims_for_pixels(33, 41) == (3, 3)

    def test_hyper_dims(self):
        assert hyper_dims_for_latent(16, 16) == (4, 4)
        assert hyper_dims_for_latent(1, 1) == (1, 1)
        assert hyper_dims_for_latent(6, 7) == (2, 2)


class TestToyTransforms:
    def test_analysis_shape(self, ws_toy):
        img = rand(1, 3, 64, 64, low=0.0, high=1.0)
        assert toy_analysis(img, ws_toy).shape == (32, 4, 4)

    def test_analysis_zero_weights(self, ws_zero):
        img = rand(2, 3, 32, 32, low=0.0, high=1.0)
        assert np.array_equal(
            toy_analysis(img, ws_zero), np.zeros((32, 2, 2))
        )

    def test_analysis_channel_check(self, ws_toy):
        with pytest.raises(ConfigError):
            toy_analysis(rand(3, 1, 16, 16), ws_toy)

    def test_synthesis_mirrors_odd_dims(self, ws_toy):
        img = rand(4, 3, 33, 41, low=0.0, high=1.0)
        y = toy_analysis(img, ws_toy)
        out = toy_synthesis(y, ws_toy, (33, 41))
        assert out.shape == (3, 33, 41)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_synthesis_grid_consistency(self, ws_toy):
        with pytest.raises(ConfigError):
            toy_synthesis(np.zeros((32, 3, 3)), ws_toy, (16, 16))

    def test_deterministic(self, ws_toy):
        img = rand(5, 3, 32, 48, low=0.0, high=1.0)
        assert np.array_equal(
            toy_analysis(img, ws_toy), toy_analysis(img, ws_toy)
        )


class TestHyperPath:
    def test_shapes(self, ws_toy):
        y = latent(6, 16, 16)
        z = hyper_analyze(y, ws_toy)
        assert z.shape == (16, 4, 4)
        phi = hyper_synthesize(np.round(z), ws_toy, (16, 16))
        assert phi.shape == (64, 16, 16)

    def test_phi_recompute_identical(self, ws_toy):
        z_hat = np.round(hyper_analyze(latent(7, 6, 7), ws_toy))
        a = hyper_synthesize(z_hat, ws_toy, (6, 7))
        b = hyper_synthesize(z_hat.copy(), ws_toy, (6, 7))
        assert np.array_equal(a, b)


class TestLatentRoundTrip:
    def test_round_trip_exact(self, ws_toy):
        y = latent(8, 6, 5)
        enc = encode_latent(y, ws_toy)
        dec = decode_latent(enc.stream, ws_toy)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        assert np.array_equal(dec.refined, enc.refined)

    def test_quantization_relation(self, ws_toy):
        """Every coded value differs from its pass's mean by an integer.

        Recovering that integer by subtracting mu from y_hat = d + mu
        reintroduces one rounding step, so the check allows float noise;
        bit-exactness of the codec itself never re-derives d this way.
        """
        from mrec.checkerboard import anchor_mask

        y = latent(9, 5, 4)
        enc = encode_latent(y, ws_toy)
        mask = anchor_mask(5, 4)
        s = TOY.slice_channels
        for i in range(TOY.slice_count):
            sl = enc.y_hat[i * s : (i + 1) * s]
            d_a = (sl - enc.fields[2 * i].mu)[:, mask]
            d_n = (sl - enc.fields[2 * i + 1].mu)[:, ~mask]
            assert np.abs(d_a - np.round(d_a)).max() <= 1e-9
            assert np.abs(d_n - np.round(d_n)).max() <= 1e-9

    def test_decoder_fields_match_encoder(self, ws_toy):
        y = latent(10, 6, 5)
        enc = encode_latent(y, ws_toy)
        dec = decode_latent(enc.stream, ws_toy)
        assert len(enc.fields) == len(dec.fields)
        for fe, fd in zip(enc.fields, dec.fields):
            assert np.array_equal(fe.mu, fd.mu)
            assert np.array_equal(fe.sigma, fd.sigma)

    def test_channel_mismatch(self, ws_toy):
        with pytest.raises(ConfigError):
            encode_latent(rand(11, 16, 4, 4), ws_toy)

    def test_nonfinite_latent(self, ws_toy):
        y = latent(12, 4, 4)
        y[0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            encode_latent(y, ws_toy)

    def test_pixel_dims_must_match_grid(self, ws_toy):
        with pytest.raises(ConfigError):
            encode_latent(latent(13, 4, 4), ws_toy, pixel_hw=(16, 16))

    def test_single_slice_profile(self, ws_toy_single):
        profile = profile_by_name("toy-single")
        y = latent(14, 5, 6, profile)
        enc = encode_latent(y, ws_toy_single)
        dec = decode_latent(enc.stream, ws_toy_single)
        assert np.array_equal(dec.y_hat, enc.y_hat)

    def test_1x1_grid(self, ws_toy):
        y = latent(15, 1, 1)
        enc = encode_latent(y, ws_toy)
        dec = decode_latent(enc.stream, ws_toy)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        assert dec.y_hat.shape == (32, 1, 1)

    def test_zero_weights(self, ws_zero):
        y = latent(16, 4, 5)
        enc = encode_latent(y, ws_zero)
        dec = decode_latent(enc.stream, ws_zero)
        assert np.array_equal(dec.y_hat, enc.y_hat)
        # mu = 0 everywhere, so coded values are plain rounded latents.
        assert np.array_equal(enc.y_hat, quantize(y, np.zeros_like(y)))

    def test_zero_weights_rate_is_unit_bin(self, ws_zero):
        # With zero weights every symbol (latent and hyper) codes under
        # mu=0, sigma=1, and y inside (-0.5, 0.5) quantizes to d=0, so the
        # whole stream should cost the unit-bin rate per symbol plus small
        # per-segment flush overhead.
        y = 0.998 * rand(21, 32, 32, 32, low=-0.5, high=0.5)
        report = encode_latent(y, ws_zero).report
        n_symbols = 32 * 32 * 32 + 16 * 8 * 8  # latent plus hyper grid
        expected_bits = n_symbols * 1.38494
        actual_bits = 8.0 * report.actual_bytes_total
        assert abs(actual_bits - expected_bits) <= 0.02 * expected_bits

    def test_deterministic_bytes(self, ws_toy):
        y = latent(17, 5, 5)
        assert encode_latent(y, ws_toy).stream == encode_latent(y, ws_toy).stream


class TestRateReport:
    def test_segment_labels_and_counts(self, ws_toy):
        enc = encode_latent(latent(18, 4, 4), ws_toy)
        labels = [s.label for s in enc.report.segments]
        assert labels[0] == "z"
        assert labels[1:3] == ["slice0.anchor", "slice0.nonanchor"]
        assert len(labels) == 1 + 2 * TOY.slice_count

    def test_totals_are_sums(self, ws_toy):
        report = encode_latent(latent(19, 5, 6), ws_toy).report
        est = sum(s.estimated_bits for s in report.segments)
        act = sum(s.actual_bytes for s in report.segments)
        assert abs(report.estimated_bits_total - est) <= 1e-6
        assert report.actual_bytes_total == act

    def test_bpp_definition(self, ws_toy):
        enc = encode_latent(latent(20, 4, 4), ws_toy)
        assert enc.report.pixel_count == 64 * 64
        assert enc.report.bpp == 8.0 * len(enc.stream) / (64 * 64)

    def test_decode_report_matches(self, ws_toy):
        enc = encode_latent(latent(21, 5, 4), ws_toy)
        got = rate_report(enc.stream, ws_toy)
        assert got.file_bytes == enc.report.file_bytes
        assert got.bpp == enc.report.bpp
        for a, b in zip(got.segments, enc.report.segments):
            assert a.label == b.label
            assert a.actual_bytes == b.actual_bytes
            assert a.estimated_bits == b.estimated_bits

    def test_to_dict_structure(self, ws_toy):
        report = encode_latent(latent(22, 4, 4), ws_toy).report
        d = report.to_dict()
        assert {"segments", "estimated_bits_total", "bpp"} <= set(d)


class TestFramingErrors:
    def test_digest_mismatch(self, ws_toy):
        stream = encode_latent(latent(23, 4, 4), ws_toy).stream
        other = WeightSet.generate(TOY, 99)
        with pytest.raises(FormatError):
            decode_latent(stream, other)

    def test_profile_mismatch(self, ws_toy, ws_toy_single):
        stream = encode_latent(latent(24, 4, 4), ws_toy).stream
        with pytest.raises(FormatError):
            decode_latent(stream, ws_toy_single)

    def test_bad_magic(self, ws_toy):
        stream = bytearray(encode_latent(latent(25, 4, 4), ws_toy).stream)
        stream[0] = ord("X")
        with pytest.raises(FormatError):
            decode_latent(bytes(stream), ws_toy)

    def test_truncated_frame(self, ws_toy):
        stream = encode_latent(latent(26, 4, 4), ws_toy).stream
        with pytest.raises(FormatError):
            decode_latent(stream[:-3], ws_toy)

    def test_header_only_rejected(self, ws_toy):
        stream = encode_latent(latent(27, 4, 4), ws_toy).stream
        with pytest.raises(FormatError):
            decode_latent(stream[:18], ws_toy)

    def test_trailing_bytes_rejected(self, ws_toy):
        stream = encode_latent(latent(28, 4, 4), ws_toy).stream
        with pytest.raises(FormatError):
            decode_latent(stream + b"\x00", ws_toy)

    def test_tamper_detected(self, ws_toy):
        y = latent(29, 5, 5)
        enc = encode_latent(y, ws_toy)
        # Flip one byte inside the last segment's payload.
        data = bytearray(enc.stream)
        data[-2] ^= 0xFF
        try:
            dec = decode_latent(bytes(data), ws_toy)
        except (CoderError, FormatError):
            return
        assert not np.array_equal(dec.y_hat, enc.y_hat)


class TestToggles:
    @pytest.mark.parametrize(
        "field",
        ["channel", "local", "intra", "inter"],
    )
    def test_each_toggle_changes_stream_and_round_trips(self, ws_toy, field):
        y = latent(30, 6, 5)
        base = encode_latent(y, ws_toy)
        toggles = ContextToggles(**{field: False})
        enc = encode_latent(y, ws_toy, toggles=toggles)
        assert enc.stream != base.stream
        dec = decode_latent(enc.stream, ws_toy, toggles=toggles)
        assert np.array_equal(dec.y_hat, enc.y_hat)

    def test_all_off_round_trips(self, ws_toy):
        y = latent(31, 5, 6)
        toggles = ContextToggles(
            channel=False, local=False, intra=False, inter=False
        )
        enc = encode_latent(y, ws_toy, toggles=toggles)
        dec = decode_latent(enc.stream, ws_toy, toggles=toggles)
        assert np.array_equal(dec.y_hat, enc.y_hat)


class TestImagePath:
    def test_round_trip_and_reports(self, ws_toy):
        img = rand(32, 3, 48, 61, low=0.0, high=1.0)
        enc = encode_image(img, ws_toy)
        recon, dec = decode_image(enc.stream, ws_toy)
        assert recon.shape == img.shape
        assert np.array_equal(dec.y_hat, enc.y_hat)
        assert np.array_equal(recon, enc.recon)
        assert enc.report.mse == pytest.approx(
            float(np.mean((img - enc.recon) ** 2)), abs=0
        )
        assert enc.report.pixel_count == 48 * 61
        assert enc.report.bpp == 8.0 * len(enc.stream) / (48 * 61)

    def test_nonfinite_image(self, ws_toy):
        img = rand(33, 3, 16, 16, low=0.0, high=1.0)
        img[0, 0, 0] = np.inf
        with pytest.raises(DomainError):
            encode_image(img, ws_toy)


class TestGoldenStreams:
    @pytest.mark.parametrize(
        "stem,profile_name,lseed,h,w",
        [
            ("toy", "toy", 20260814, 6, 7),
            ("single", "toy-single", 20260815, 5, 4),
            ("paper", "paper", 20260816, 2, 3),
        ],
    )
    def test_golden(self, stem, profile_name, lseed, h, w, request):
        from mrec.numerics import splitmix64, uniform_from_bits

        profile = profile_by_name(profile_name)
        fixture = {
            "toy": "ws_toy", "toy-single": "ws_toy_single", "paper": "ws_paper"
        }[profile_name]
        ws = request.getfixturevalue(fixture)
        n = profile.latent_channels * h * w
        u = uniform_from_bits(splitmix64(lseed, n))
        y = (4.0 * (u - 0.5)).reshape(profile.latent_channels, h, w)

        golden_stream = (GOLDEN_DIR / f"{stem}.memb").read_bytes()
        golden_latent = tensor_from_bytes(
            (GOLDEN_DIR / f"{stem}.memt").read_bytes()
        )
        enc = encode_latent(y, ws)
        assert enc.stream == golden_stream
        assert np.array_equal(enc.y_hat, golden_latent)
        dec = decode_latent(golden_stream, ws)
        assert np.array_equal(dec.y_hat, golden_latent)
