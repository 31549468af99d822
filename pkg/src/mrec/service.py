"""HTTP service wrapping the codec: encode, decode, rate report, selftest.

Payloads travel base64 encoded inside JSON.  ``kind`` selects the
container: ``image`` means binary PPM bytes, ``latent`` means the raw
tensor container.  Weights are regenerated from (profile, seed) on
demand and cached, so a long-running service pays generation once.

Deliberate failures surface as HTTP 400 with a stable error category;
malformed request envelopes are FastAPI's usual 422.
"""

from __future__ import annotations

import base64
import binascii
import struct
import threading
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .codec import MAGIC_BITSTREAM, RateReport, decode_image, decode_latent
from .codec import encode_image, encode_latent, rate_report
from .errors import FormatError, MrecError
from .fileio import image_to_ppm, ppm_to_image, tensor_from_bytes, tensor_to_bytes
from .profiles import PROFILES, profile_by_id, profile_by_name
from .selftest import run_selftest
from .weights import WeightSet

__all__ = ["create_app", "app"]

PayloadKind = Literal["image", "latent"]


class EncodeRequest(BaseModel):
    payload_b64: str = Field(description="base64 PPM bytes or tensor bytes")
    kind: PayloadKind = "latent"
    profile: str = "toy"
    seed: int = Field(default=0, ge=0, lt=2**64)


class SegmentModel(BaseModel):
    label: str
    estimated_bits: float
    actual_bytes: int


class ReportModel(BaseModel):
    segments: list[SegmentModel]
    estimated_bits_total: float
    actual_bytes_total: int
    pixel_count: int
    file_bytes: int
    bpp: float
    mse: float | None = None

    @classmethod
    def from_report(cls, report: RateReport) -> "ReportModel":
        return cls(**report.to_dict())


class EncodeResponse(BaseModel):
    bitstream_b64: str
    report: ReportModel


class DecodeRequest(BaseModel):
    bitstream_b64: str
    kind: PayloadKind = "latent"
    seed: int = Field(default=0, ge=0, lt=2**64)


class DecodeResponse(BaseModel):
    payload_b64: str
    kind: PayloadKind
    height: int
    width: int


class RateReportRequest(BaseModel):
    bitstream_b64: str
    seed: int = Field(default=0, ge=0, lt=2**64)


class CheckModel(BaseModel):
    name: str
    passed: bool
    detail: str


class SelftestResponse(BaseModel):
    ok: bool
    checks: list[CheckModel]


class ProfileModel(BaseModel):
    name: str
    profile_id: int
    hyper_channels: int
    latent_channels: int
    slice_channels: int
    slice_count: int
    window: int


class _WeightCache:
    """Thread-safe cache of generated weight sets keyed by (profile, seed)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._store: dict[tuple[int, int], WeightSet] = {}

    def get(self, profile_name: str, seed: int) -> WeightSet:
        profile = profile_by_name(profile_name)
        key = (profile.profile_id, seed)
        with self._lock:
            ws = self._store.get(key)
        if ws is None:
            ws = WeightSet.generate(profile, seed)
            with self._lock:
                self._store.setdefault(key, ws)
        return ws


def _b64decode(payload: str, what: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(
            status_code=400,
            detail={"category": "format", "message": f"invalid base64 {what}"},
        ) from None


def _stream_profile_name(data: bytes) -> str:
    head_len = len(MAGIC_BITSTREAM) + struct.calcsize("<BBIIQ")
    if len(data) < head_len or data[:4] != MAGIC_BITSTREAM:
        raise FormatError("not a codec bitstream")
    profile_id = data[5]
    return profile_by_id(profile_id).name


def create_app() -> FastAPI:
    app = FastAPI(
        title="multi-reference entropy codec",
        version=__version__,
        description=__doc__,
    )
    cache = _WeightCache()

    @app.exception_handler(MrecError)
    async def _mrec_error(request, exc: MrecError):  # noqa: ANN001
        return JSONResponse(
            status_code=400,
            content={"detail": {"category": exc.category, "message": str(exc)}},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/v1/profiles", response_model=list[ProfileModel])
    def profiles() -> list[ProfileModel]:
        return [ProfileModel(**vars(p)) for p in PROFILES.values()]

    @app.post("/v1/encode", response_model=EncodeResponse)
    def encode(req: EncodeRequest) -> EncodeResponse:
        payload = _b64decode(req.payload_b64, "payload")
        ws = cache.get(req.profile, req.seed)
        if req.kind == "image":
            result = encode_image(ppm_to_image(payload), ws)
        else:
            result = encode_latent(tensor_from_bytes(payload), ws)
        return EncodeResponse(
            bitstream_b64=base64.b64encode(result.stream).decode("ascii"),
            report=ReportModel.from_report(result.report),
        )

    @app.post("/v1/decode", response_model=DecodeResponse)
    def decode(req: DecodeRequest) -> DecodeResponse:
        data = _b64decode(req.bitstream_b64, "bitstream")
        ws = cache.get(_stream_profile_name(data), req.seed)
        if req.kind == "image":
            img, result = decode_image(data, ws)
            payload = image_to_ppm(img)
            height, width = result.pixel_hw
        else:
            result = decode_latent(data, ws)
            payload = tensor_to_bytes(result.y_hat)
            height, width = result.y_hat.shape[1:]
        return DecodeResponse(
            payload_b64=base64.b64encode(payload).decode("ascii"),
            kind=req.kind,
            height=height,
            width=width,
        )

    @app.post("/v1/rate-report", response_model=ReportModel)
    def report(req: RateReportRequest) -> ReportModel:
        data = _b64decode(req.bitstream_b64, "bitstream")
        ws = cache.get(_stream_profile_name(data), req.seed)
        return ReportModel.from_report(rate_report(data, ws))

    @app.get("/v1/selftest", response_model=SelftestResponse)
    def selftest() -> SelftestResponse:
        checks = run_selftest()
        return SelftestResponse(
            ok=all(c.passed for c in checks),
            checks=[CheckModel(**vars(c)) for c in checks],
        )

    return app


app = create_app()
