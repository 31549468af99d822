"""Multi-reference entropy codec with linear-complexity attention.

The package implements a two-pass checkerboard entropy coder for
channel-sliced latent grids.  Each coding pass conditions a Gaussian
entropy model on up to five context sources (hyperprior, channel,
local spatial, intra-slice global, inter-slice global); the global
context modules use a decomposed softmax attention whose cost grows
linearly with token count.  Symbols are carried by a carry-less
byte-oriented range coder over 16-bit quantized frequency tables.

Public surface: the codec entry points (:func:`encode_image`,
:func:`decode_image`, :func:`encode_latent`, :func:`decode_latent`,
:func:`rate_report`), weight handling (:class:`WeightSet`,
:func:`profile_by_name`), file formats (fileio module), the benchmark
harness (bench module), and the HTTP service (service module).
"""

from __future__ import annotations

__version__ = "0.1.0"

from .codec import (
    ContextToggles,
    DecodeResult,
    EncodeResult,
    RateReport,
    SegmentRate,
    decode_image,
    decode_latent,
    encode_image,
    encode_latent,
    rate_report,
)
from .errors import (
    CoderError,
    ConfigError,
    DomainError,
    FormatError,
    IndexingError,
    MrecError,
    ShapeError,
    StateError,
)
from .profiles import PROFILES, Profile, profile_by_id, profile_by_name
from .selftest import run_selftest
from .weights import WeightSet

__all__ = [
    "__version__",
    "ContextToggles",
    "DecodeResult",
    "EncodeResult",
    "RateReport",
    "SegmentRate",
    "decode_image",
    "decode_latent",
    "encode_image",
    "encode_latent",
    "rate_report",
    "CoderError",
    "ConfigError",
    "DomainError",
    "FormatError",
    "IndexingError",
    "MrecError",
    "ShapeError",
    "StateError",
    "PROFILES",
    "Profile",
    "profile_by_id",
    "profile_by_name",
    "run_selftest",
    "WeightSet",
]
