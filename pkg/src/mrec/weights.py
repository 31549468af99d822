"""Parameter inventory, deterministic generation, and the weight file.

Every trainable tensor of a profile is listed by :func:`inventory` in a
frozen order.  Generation consumes one SplitMix64 stream (seeded by an
8-byte seed) left to right, tensor by tensor, scaling each tensor's draw
to uniform(-a, a) with a = 1/sqrt(fan_in).  The weight file stores the
scaled values, so loading never depends on regenerating the stream.

Stream and file order
---------------------
1. hyper analysis: two stride-2 3x3 convs (latent -> hyper channels);
2. side-info prior log-sigmas (one per hyper channel, fan_in 1);
3. hyper synthesis: two 3x3 convs, each after 2x nearest upsampling,
   ending at twice the latent channel count;
4. channel context, slices 1..L-1: three 3x3 convs (i*S -> 2S -> 2S -> 2S);
5. local window attention context, slices 0..L-1: 1x1 q/k/v projections,
   a KxK fusion conv (S -> 2S), and a two-layer 1x1 feed-forward
   (2S -> 8S -> 2S);
6. intra-slice global context, slices 1..L-1: q/k/v embeddings (1x1 conv
   S -> S plus bias-free depthwise 3x3 each), a KxK refine conv
   (S -> 2S), and a depthwise residual block on 2S;
7. inter-slice global context, slices 1..L-1: q/k/v embeddings (1x1 conv
   i*S -> 2S plus depthwise 3x3), a KxK refine conv (2S -> 2S), and a
   depthwise residual block on 2S;
8. entropy parameter head, slices 0..L-1: three 1x1 convs
   (2*hyper-width + 8S -> 6S -> 4S -> 2S), shared by both passes;
9. latent refinement, slices 0..L-1: 1x1 conv
   (2M + (i+1)*S -> 2S), 3x3 conv (2S -> 2S), 1x1 conv (2S -> S);
10. demonstration image transforms: four stride-2 3x3 convs
    (3 -> M -> M -> M -> M) and the mirror synthesis chain of four 3x3
    convs, each after 2x nearest upsampling (M -> M -> M -> M -> 3).

Convolutions carry biases (same fan_in as their kernel); depthwise
kernels do not.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, FormatError
from .numerics import gen_weights
from .profiles import Profile, profile_by_id

__all__ = ["TensorSpec", "WeightSet", "inventory", "MAGIC_WEIGHTS"]

MAGIC_WEIGHTS = b"MEMW"
_VERSION = 1


@dataclass(frozen=True)
class TensorSpec:
    """One leaf tensor: name, shape, and the fan-in that sets its scale."""

    name: str
    shape: tuple[int, ...]
    fan_in: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


def _conv(name: str, out_ch: int, in_ch: int, k: int) -> Iterator[TensorSpec]:
    fan = in_ch * k * k
    yield TensorSpec(f"{name}.w", (out_ch, in_ch, k, k), fan)
    yield TensorSpec(f"{name}.b", (out_ch,), fan)


def _dw(name: str, ch: int, k: int = 3) -> Iterator[TensorSpec]:
    yield TensorSpec(f"{name}.w", (ch, k, k), k * k)


def inventory(profile: Profile) -> list[TensorSpec]:
    """Frozen tensor order for one profile; see the module docstring."""
    n = profile.hyper_channels
    m = profile.latent_channels
    s = profile.slice_channels
    count = profile.slice_count
    k = profile.window
    ctx = 2 * s
    specs: list[TensorSpec] = []

    specs += _conv("ha.conv1", n, m, 3)
    specs += _conv("ha.conv2", n, n, 3)
    specs.append(TensorSpec("zprior.logsigma", (n,), 1))
    specs += _conv("hs.conv1", m, n, 3)
    specs += _conv("hs.conv2", 2 * m, m, 3)

    for i in range(1, count):
        specs += _conv(f"gch.{i}.conv1", ctx, i * s, 3)
        specs += _conv(f"gch.{i}.conv2", ctx, ctx, 3)
        specs += _conv(f"gch.{i}.conv3", ctx, ctx, 3)

    for i in range(count):
        specs += _conv(f"glc.{i}.embq", s, s, 1)
        specs += _conv(f"glc.{i}.embk", s, s, 1)
        specs += _conv(f"glc.{i}.embv", s, s, 1)
        specs += _conv(f"glc.{i}.fuse", ctx, s, k)
        specs += _conv(f"glc.{i}.ffn1", 4 * ctx, ctx, 1)
        specs += _conv(f"glc.{i}.ffn2", ctx, 4 * ctx, 1)

    for i in range(1, count):
        for leg in ("embq", "embk", "embv"):
            specs += _conv(f"ggci.{i}.{leg}.proj", s, s, 1)
            specs += _dw(f"ggci.{i}.{leg}.dw", s)
        specs += _conv(f"ggci.{i}.refine", ctx, s, k)
        specs += _conv(f"ggci.{i}.rb.conv1", ctx, ctx, 1)
        specs += _dw(f"ggci.{i}.rb.dw", ctx)
        specs += _conv(f"ggci.{i}.rb.conv2", ctx, ctx, 1)

    for i in range(1, count):
        for leg in ("embq", "embk", "embv"):
            specs += _conv(f"ggce.{i}.{leg}.proj", ctx, i * s, 1)
            specs += _dw(f"ggce.{i}.{leg}.dw", ctx)
        specs += _conv(f"ggce.{i}.refine", ctx, ctx, k)
        specs += _conv(f"ggce.{i}.rb.conv1", ctx, ctx, 1)
        specs += _dw(f"ggce.{i}.rb.dw", ctx)
        specs += _conv(f"ggce.{i}.rb.conv2", ctx, ctx, 1)

    for i in range(count):
        specs += _conv(f"gep.{i}.conv1", 6 * s, 2 * m + 8 * s, 1)
        specs += _conv(f"gep.{i}.conv2", 4 * s, 6 * s, 1)
        specs += _conv(f"gep.{i}.conv3", ctx, 4 * s, 1)

    for i in range(count):
        specs += _conv(f"lrp.{i}.conv1", ctx, 2 * m + (i + 1) * s, 1)
        specs += _conv(f"lrp.{i}.conv2", ctx, ctx, 3)
        specs += _conv(f"lrp.{i}.conv3", s, ctx, 1)

    specs += _conv("ta.conv1", m, 3, 3)
    specs += _conv("ta.conv2", m, m, 3)
    specs += _conv("ta.conv3", m, m, 3)
    specs += _conv("ta.conv4", m, m, 3)
    specs += _conv("ts.conv1", m, m, 3)
    specs += _conv("ts.conv2", m, m, 3)
    specs += _conv("ts.conv3", m, m, 3)
    specs += _conv("ts.conv4", 3, m, 3)
    return specs


@dataclass
class WeightSet:
    """All parameters of one profile plus provenance (seed) and digest."""

    profile: Profile
    seed: int
    params: dict[str, np.ndarray] = field(repr=False)
    digest: int

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.params[name]
        except KeyError:
            raise ConfigError(f"unknown parameter {name!r}") from None

    @staticmethod
    def _digest_of(payload: bytes) -> int:
        return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")

    def value_bytes(self) -> bytes:
        """Concatenated little-endian float64 payload in inventory order."""
        chunks = [
            np.ascontiguousarray(self.params[spec.name], dtype="<f8").tobytes()
            for spec in inventory(self.profile)
        ]
        return b"".join(chunks)

    @classmethod
    def generate(cls, profile: Profile, seed: int) -> "WeightSet":
        params: dict[str, np.ndarray] = {}
        offset = 0
        for spec in inventory(profile):
            params[spec.name] = gen_weights(seed, spec.shape, spec.fan_in, offset)
            offset += spec.size
        ws = cls(profile=profile, seed=int(seed), params=params, digest=0)
        ws.digest = cls._digest_of(ws.value_bytes())
        return ws

    @classmethod
    def zeros(cls, profile: Profile) -> "WeightSet":
        """All-zero parameters: the codec degrades to context-free coding."""
        params = {
            spec.name: np.zeros(spec.shape, dtype=np.float64)
            for spec in inventory(profile)
        }
        ws = cls(profile=profile, seed=0, params=params, digest=0)
        ws.digest = cls._digest_of(ws.value_bytes())
        return ws

    def save_bytes(self) -> bytes:
        header = MAGIC_WEIGHTS + struct.pack(
            "<BBQ", _VERSION, self.profile.profile_id, self.seed & (2**64 - 1)
        )
        return header + self.value_bytes()

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.save_bytes())

    @classmethod
    def load_bytes(cls, data: bytes) -> "WeightSet":
        head = len(MAGIC_WEIGHTS) + struct.calcsize("<BBQ")
        if len(data) < head:
            raise FormatError("weight file too short for its header")
        if data[:4] != MAGIC_WEIGHTS:
            raise FormatError(f"bad weight magic {data[:4]!r}")
        version, profile_id, seed = struct.unpack("<BBQ", data[4:head])
        if version != _VERSION:
            raise FormatError(f"unsupported weight version {version}")
        profile = profile_by_id(profile_id)
        specs = inventory(profile)
        expected = sum(spec.size for spec in specs) * 8
        payload = data[head:]
        if len(payload) != expected:
            raise FormatError(
                f"weight payload is {len(payload)} bytes, expected {expected}"
            )
        params: dict[str, np.ndarray] = {}
        pos = 0
        for spec in specs:
            nbytes = spec.size * 8
            arr = np.frombuffer(payload[pos : pos + nbytes], dtype="<f8")
            params[spec.name] = arr.reshape(spec.shape).astype(np.float64)
            pos += nbytes
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            raise FormatError("weight payload contains non-finite values")
        return cls(
            profile=profile,
            seed=seed,
            params=params,
            digest=cls._digest_of(payload),
        )

    @classmethod
    def load(cls, path: str) -> "WeightSet":
        with open(path, "rb") as fh:
            return cls.load_bytes(fh.read())
