"""Conditional Gaussian entropy model and frequency-table construction.

Symbols are integer offsets d = quantized - mean.  Under a Gaussian with
standard deviation sigma, the probability of offset d is the unit-bin
mass P(d - 1/2 < X <= d + 1/2), evaluated through ``erfc`` in a form that
is exactly symmetric in d (it depends on |d| only), so rate estimates and
frequency tables are bit-identical for +d and -d.

Frequency tables quantize the bin masses to integer counts summing to
2**16 by largest remainder, then force every bin to hold at least one
count (stealing from the currently largest bin), so every symbol in the
support stays codable.  The same vectorized routine builds one table or a
batch, which keeps encoder and decoder tables bit-identical by
construction.  Offsets outside [-64, 64] are carried by two escape bins
plus a 16-bit raw payload handled in the range coder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import DomainError, ShapeError

__all__ = [
    "SYMBOL_MIN",
    "SYMBOL_MAX",
    "TOTAL_FREQ",
    "GaussianField",
    "CdfTable",
    "UNIFORM_BYTE",
    "round_half_away",
    "quantize",
    "bin_probability",
    "symbol_rate_bits",
    "tensor_rate_bits",
    "build_cdf",
    "build_cdf_counts",
    "loss_eval",
]

SYMBOL_MIN = -64
SYMBOL_MAX = 64
TOTAL_FREQ = 1 << 16
_N_BINS = SYMBOL_MAX - SYMBOL_MIN + 1 + 2  # symbol bins plus two escape bins
_PROB_FLOOR = 1e-300


def round_half_away(x: np.ndarray | float) -> np.ndarray | float:
    """Round to nearest integer, halves away from zero; elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.copysign(np.floor(np.abs(x) + 0.5), x)
    return float(out) if out.ndim == 0 else out


def quantize(y: np.ndarray | float, mu: np.ndarray | float) -> np.ndarray | float:
    """Quantize y to mu plus an integer: round_half_away(y - mu) + mu."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    out = round_half_away(y - mu) + mu
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GaussianField:
    """Per-element Gaussian parameters over a (C, H, W) grid."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.shape != sigma.shape:
            raise ShapeError(f"mu shape {mu.shape} != sigma shape {sigma.shape}")
        if not np.all(np.isfinite(mu)):
            raise DomainError("mu must be finite")
        if not (np.all(np.isfinite(sigma)) and np.all(sigma > 0.0)):
            raise DomainError("sigma must be finite and > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def _check_sigma(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if not (np.all(np.isfinite(sigma)) and np.all(sigma > 0.0)):
        raise DomainError("sigma must be finite and > 0")
    return sigma


def bin_probability(
    d: np.ndarray | float, sigma: np.ndarray | float
) -> np.ndarray | float:
    """Mass of the unit bin centred on d under N(0, sigma^2).

    Uses 0.5*(erfc((|d|-1/2)/(sigma*sqrt2)) - erfc((|d|+1/2)/(sigma*sqrt2))),
    which equals the bin integral for every real d and is exactly even in
    d.  Floored at a tiny positive value so rates stay finite.
    """
    d = np.asarray(d, dtype=np.float64)
    sigma = _check_sigma(sigma)
    c = sigma * np.sqrt(2.0)
    a = np.abs(d)
    p = 0.5 * (erfc((a - 0.5) / c) - erfc((a + 0.5) / c))
    p = np.maximum(p, _PROB_FLOOR)
    return float(p) if p.ndim == 0 else p


def symbol_rate_bits(
    y_hat: np.ndarray | float,
    mu: np.ndarray | float,
    sigma: np.ndarray | float,
) -> np.ndarray | float:
    """Ideal code length -log2 P(bin) of quantized values, elementwise."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    out = -np.log2(bin_probability(y_hat - mu, sigma))
    return float(out) if np.ndim(out) == 0 else out


def tensor_rate_bits(y_hat: np.ndarray, fieldp: GaussianField) -> float:
    """Total ideal bits of a quantized grid under a parameter field."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_hat.shape != fieldp.mu.shape:
        raise ShapeError(
            f"value shape {y_hat.shape} != field shape {fieldp.mu.shape}"
        )
    return float(np.sum(symbol_rate_bits(y_hat, fieldp.mu, fieldp.sigma)))


@dataclass(frozen=True)
class CdfTable:
    """Integer frequency table for the range coder.

    Bin j covers symbol value ``offset + j``.  ``cum`` holds the running
    counts: cum[0] = 0, strictly increasing, cum[-1] = 2**16, so every
    bin has frequency >= 1.  When ``has_escapes`` is set the first and
    last bins are escape codes rather than literal symbols.
    """

    offset: int
    cum: np.ndarray = field(repr=False)
    has_escapes: bool = False

    def __post_init__(self) -> None:
        cum = np.asarray(self.cum, dtype=np.int64)
        if cum.ndim != 1 or cum.size < 2:
            raise ShapeError(f"cum must be 1-D with >= 2 entries, got {cum.shape}")
        if cum[0] != 0 or cum[-1] != TOTAL_FREQ:
            raise DomainError(
                f"cum must run from 0 to {TOTAL_FREQ}, got [{cum[0]}, {cum[-1]}]"
            )
        if np.any(np.diff(cum) < 1):
            raise DomainError("cum must be strictly increasing (counts >= 1)")
        if self.has_escapes and cum.size < 4:
            raise DomainError("escape tables need at least two symbol bins")
        object.__setattr__(self, "cum", cum)

    @property
    def nbins(self) -> int:
        return self.cum.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.cum)

    def symbol_bounds(self) -> tuple[int, int]:
        """Inclusive range of directly codable symbol values."""
        lo, hi = self.offset, self.offset + self.nbins - 1
        if self.has_escapes:
            lo, hi = lo + 1, hi - 1
        return lo, hi


UNIFORM_BYTE = CdfTable(
    offset=0, cum=np.arange(0, TOTAL_FREQ + 256, 256, dtype=np.int64)
)


def build_cdf_counts(sigma: np.ndarray) -> np.ndarray:
    """Frequency rows (n, 131) for a batch of sigmas; see module docstring.

    Row layout: escape-low, symbols -64..64, escape-high.  Deterministic:
    largest-remainder rounding with ties broken toward lower bin index,
    then zero bins raised to one with the deficit taken from each row's
    largest bin.
    """
    sigma = np.atleast_1d(_check_sigma(sigma))
    if sigma.ndim != 1:
        raise ShapeError(f"sigma batch must be 1-D, got shape {sigma.shape}")
    c = (sigma * np.sqrt(2.0))[:, None]
    d = np.abs(np.arange(SYMBOL_MIN, SYMBOL_MAX + 1, dtype=np.float64))[None, :]
    body = 0.5 * (erfc((d - 0.5) / c) - erfc((d + 0.5) / c))
    tail = 0.5 * erfc((SYMBOL_MAX + 0.5) / c)
    probs = np.concatenate([tail, body, tail], axis=1)
    probs = np.maximum(probs, 0.0)

    ideal = probs * TOTAL_FREQ
    base = np.floor(ideal).astype(np.int64)
    remainder = ideal - base
    short = TOTAL_FREQ - base.sum(axis=1)
    # Stable sort on -remainder: largest remainders first, ties by index.
    order = np.argsort(-remainder, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(_N_BINS)[None, :].repeat(len(sigma), 0), 1)
    counts = base + (rank < short[:, None])

    lifted = np.maximum(counts, 1)
    deficit = lifted.sum(axis=1) - TOTAL_FREQ
    rows = np.arange(len(sigma))
    lifted[rows, np.argmax(lifted, axis=1)] -= deficit
    if np.any(lifted < 1):
        raise DomainError("frequency quantization produced an empty bin")
    return lifted


def build_cdf(mu: float, sigma: float) -> CdfTable:
    """Single frequency table for one (mu, sigma) pair.

    The mean shifts symbols before coding, so the table itself depends
    only on sigma; mu is validated but does not enter the counts.
    """
    if not np.isfinite(mu):
        raise DomainError("mu must be finite")
    counts = build_cdf_counts(np.asarray([sigma], dtype=np.float64))[0]
    cum = np.concatenate([[0], np.cumsum(counts)])
    return CdfTable(offset=SYMBOL_MIN - 1, cum=cum, has_escapes=True)


def loss_eval(rate_bpp: float, distortion_mse: float, lam: float) -> float:
    """Lagrangian objective: rate in bits per pixel plus lam times MSE."""
    if not (np.isfinite(rate_bpp) and np.isfinite(distortion_mse) and np.isfinite(lam)):
        raise DomainError("loss terms must be finite")
    if rate_bpp < 0.0 or distortion_mse < 0.0:
        raise DomainError("rate and distortion must be non-negative")
    return float(rate_bpp + lam * distortion_mse)
