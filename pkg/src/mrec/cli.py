"""Command-line front end; a thin wrapper over the library.

Subcommands: encode, decode, rate-report, selftest, bench, weights,
serve.  File kinds are chosen by extension: ``.ppm`` for images,
``.memb`` for bitstreams, anything else for raw latent tensors.  Exit
codes: 0 success, 2 usage errors (argparse), otherwise the failing
error category's code (see errors module).

When ``--input`` of encode or decode is a directory, every matching
file in it is processed into ``--output`` (a directory); the
``MREC_BATCH_THREADS`` environment variable sets the worker count for
this batch mode only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bench import (
    bench_attention,
    bench_codec,
    write_attention_csv,
    write_codec_csv,
)
from .codec import (
    RateReport,
    decode_image,
    decode_latent,
    encode_image,
    encode_latent,
    rate_report,
)
from .errors import ConfigError, FormatError, MrecError
from .fileio import read_ppm, read_tensor, write_ppm, write_tensor
from .profiles import PROFILES, profile_by_id, profile_by_name
from .selftest import run_selftest
from .weights import WeightSet

__all__ = ["main"]


def _parse_seed(text: str) -> int:
    seed = int(text, 0)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return seed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrec",
        description="multi-reference entropy codec with two-pass"
        " checkerboard coding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_weight_args(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--seed", type=_parse_seed, default=0, help="weight seed (default 0)"
        )
        p.add_argument(
            "--weights", type=Path, default=None, help="weight file (MEMW)"
        )

    p = sub.add_parser("encode", help="encode an image or latent tensor")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--profile", default="toy", choices=sorted(PROFILES))
    add_weight_args(p)

    p = sub.add_parser("decode", help="decode a bitstream")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    add_weight_args(p)

    p = sub.add_parser("rate-report", help="per-segment rate accounting")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    add_weight_args(p)

    sub.add_parser("selftest", help="run built-in health checks")

    p = sub.add_parser("bench", help="scaling benchmarks")
    bench_sub = p.add_subparsers(dest="bench_kind", required=True)
    for kind in ("attention", "codec"):
        b = bench_sub.add_parser(kind)
        b.add_argument(
            "--sizes",
            default="8,16,32" if kind == "attention" else "4,8",
            help="comma-separated ascending grid side lengths",
        )
        b.add_argument("--repeats", type=int, default=3)
        b.add_argument("--seed", type=_parse_seed, default=0)
        b.add_argument("--csv", type=Path, default=None, help="write CSV here")
        if kind == "codec":
            b.add_argument("--profile", default="toy", choices=sorted(PROFILES))

    p = sub.add_parser("weights", help="generate and save a weight file")
    p.add_argument("--profile", default="toy", choices=sorted(PROFILES))
    p.add_argument("--seed", type=_parse_seed, default=0)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _load_weights(args: argparse.Namespace, profile_name: str) -> WeightSet:
    if args.weights is not None:
        ws = WeightSet.load(str(args.weights))
        if ws.profile.name != profile_name:
            raise ConfigError(
                f"weight file is for profile {ws.profile.name!r},"
                f" expected {profile_name!r}"
            )
        return ws
    return WeightSet.generate(profile_by_name(profile_name), args.seed)


def _stream_profile(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(6)
    if len(head) < 6 or head[:4] != b"MEMB":
        raise FormatError(f"{path} is not a codec bitstream")
    return profile_by_id(head[5]).name


def _encode_one(src: Path, dst: Path, ws: WeightSet) -> None:
    if src.suffix.lower() == ".ppm":
        result = encode_image(read_ppm(str(src)), ws)
    else:
        result = encode_latent(read_tensor(str(src)), ws)
    dst.write_bytes(result.stream)
    print(f"{src} -> {dst}: {result.report.bpp:.4f} bpp")


def _decode_one(src: Path, dst: Path, ws: WeightSet) -> None:
    data = src.read_bytes()
    if dst.suffix.lower() == ".ppm":
        img, _ = decode_image(data, ws)
        write_ppm(img, str(dst))
    else:
        result = decode_latent(data, ws)
        write_tensor(result.y_hat, str(dst))
    print(f"{src} -> {dst}")


def _batch_threads() -> int:
    raw = os.environ.get("MREC_BATCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MREC_BATCH_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError("MREC_BATCH_THREADS must be >= 1")
    return n


def _run_batch(inputs: list[Path], worker) -> None:
    threads = _batch_threads()
    if threads == 1:
        for src in inputs:
            worker(src)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for future in [pool.submit(worker, src) for src in inputs]:
            future.result()


def _cmd_encode(args: argparse.Namespace) -> int:
    ws = _load_weights(args, args.profile)
    if args.input.is_dir():
        inputs = sorted(
            p
            for p in args.input.iterdir()
            if p.suffix.lower() in (".ppm", ".memt")
        )
        if not inputs:
            raise ConfigError(f"no .ppm or .memt files in {args.input}")
        args.output.mkdir(parents=True, exist_ok=True)
        _run_batch(
            inputs,
            lambda src: _encode_one(
                src, args.output / (src.stem + ".memb"), ws
            ),
        )
    else:
        _encode_one(args.input, args.output, ws)
    return 0


def _cmd_decode(args: argparse.Namespace) -> int:
    if args.input.is_dir():
        inputs = sorted(
            p for p in args.input.iterdir() if p.suffix.lower() == ".memb"
        )
        if not inputs:
            raise ConfigError(f"no .memb files in {args.input}")
        args.output.mkdir(parents=True, exist_ok=True)
        ws_cache: dict[str, WeightSet] = {}

        def worker(src: Path) -> None:
            name = _stream_profile(src)
            if name not in ws_cache:
                ws_cache[name] = _load_weights(args, name)
            _decode_one(src, args.output / (src.stem + ".memt"), ws_cache[name])

        _run_batch(inputs, worker)
    else:
        ws = _load_weights(args, _stream_profile(args.input))
        _decode_one(args.input, args.output, ws)
    return 0


def _print_report(report: RateReport, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report.to_dict(), indent=2))
        return
    width = max(len(s.label) for s in report.segments)
    for s in report.segments:
        print(
            f"{s.label:<{width}}  estimated {s.estimated_bits:12.2f} bits"
            f"  actual {s.actual_bytes:8d} bytes"
        )
    print(
        f"{'total':<{width}}  estimated {report.estimated_bits_total:12.2f} bits"
        f"  actual {report.actual_bytes_total:8d} bytes"
    )
    print(
        f"file {report.file_bytes} bytes, {report.pixel_count} pixels,"
        f" {report.bpp:.4f} bpp"
    )
    if report.mse is not None:
        print(f"reconstruction mse {report.mse:.6f}")


def _cmd_rate_report(args: argparse.Namespace) -> int:
    ws = _load_weights(args, _stream_profile(args.input))
    _print_report(rate_report(args.input.read_bytes(), ws), args.json)
    return 0


def _cmd_selftest(_: argparse.Namespace) -> int:
    checks = run_selftest()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return 0 if all(c.passed for c in checks) else 1


def _parse_sizes(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"bad --sizes value {text!r}") from None


def _cmd_bench(args: argparse.Namespace) -> int:
    sizes = _parse_sizes(args.sizes)
    if args.bench_kind == "attention":
        rows = bench_attention(sizes, repeats=args.repeats, seed=args.seed)
        print("resolution tokens linear_time_s quad_time_s linear_elems quad_elems")
        for r in rows:
            print(
                f"{r.resolution:10d} {r.tokens:6d} {r.linear_time_s:13.6f}"
                f" {r.quad_time_s:11.6f} {r.linear_elems:12.0f} {r.quad_elems:10.0f}"
            )
        if args.csv:
            write_attention_csv(rows, str(args.csv))
    else:
        rows = bench_codec(
            sizes,
            profile_by_name(args.profile),
            seed=args.seed,
            repeats=args.repeats,
        )
        print("resolution tokens encode_time_s decode_time_s bpp")
        for r in rows:
            print(
                f"{r.resolution:10d} {r.tokens:6d} {r.encode_time_s:13.6f}"
                f" {r.decode_time_s:13.6f} {r.bpp:8.4f}"
            )
        if args.csv:
            write_codec_csv(rows, str(args.csv))
    return 0


def _cmd_weights(args: argparse.Namespace) -> int:
    ws = WeightSet.generate(profile_by_name(args.profile), args.seed)
    ws.save(str(args.output))
    print(
        f"{args.output}: profile {args.profile}, seed {args.seed},"
        f" digest {ws.digest:016x}"
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "rate-report": _cmd_rate_report,
    "selftest": _cmd_selftest,
    "bench": _cmd_bench,
    "weights": _cmd_weights,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except MrecError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
