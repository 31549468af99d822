"""Carry-less byte-oriented range coder over integer frequency tables.

32-bit low/range state; the classic carry-less renormalization emits the
top byte whenever it is settled and, when the range drops below 2**16
while straddling a carry boundary, truncates the range to the byte
boundary instead of propagating carries.  Encoder and decoder renormalize
under identical conditions, so a valid stream is consumed exactly.

Escapes: when a table flags its first and last bins as escape codes, any
symbol outside the table's direct support is coded as the matching escape
bin followed by the symbol's 16-bit two's-complement value as two
uniformly coded bytes.  Everything stays inside the one range-coded
stream, so segments remain self-contained byte strings.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .entropy import TOTAL_FREQ, UNIFORM_BYTE, CdfTable
from .errors import CoderError, ShapeError

__all__ = ["encode", "decode", "TableColumn"]

_TOP = 1 << 24
_BOT = 1 << 16
_MASK = 0xFFFFFFFF
_ESCAPE_PAYLOAD_MIN = -(1 << 15)
_ESCAPE_PAYLOAD_MAX = (1 << 15) - 1


class TableColumn:
    """A homogeneous batch of tables sharing offset and escape layout.

    Row i of ``cum`` is the cumulative-count vector of table i.  This is
    the bulk interface used by the codec, where every coded position has
    its own sigma; it avoids building one table object per symbol.
    """

    def __init__(self, offset: int, cum: np.ndarray, has_escapes: bool) -> None:
        cum = np.asarray(cum, dtype=np.int64)
        if cum.ndim != 2:
            raise ShapeError(f"cum batch must be 2-D, got shape {cum.shape}")
        if cum.shape[0] and (
            np.any(cum[:, 0] != 0)
            or np.any(cum[:, -1] != TOTAL_FREQ)
            or np.any(np.diff(cum, axis=1) < 1)
        ):
            raise ShapeError("every cum row must rise from 0 to 2**16 in steps >= 1")
        self.offset = int(offset)
        self.cum = cum
        self.has_escapes = bool(has_escapes)

    def __len__(self) -> int:
        return self.cum.shape[0]

    def table(self, i: int) -> CdfTable:
        return CdfTable(
            offset=self.offset, cum=self.cum[i], has_escapes=self.has_escapes
        )


def _row(tables: TableColumn | Sequence[CdfTable], i: int):
    """(cum, offset, has_escapes) of table i, as (ndarray, int, bool)."""
    if isinstance(tables, TableColumn):
        return tables.cum[i], tables.offset, tables.has_escapes
    t = tables[i]
    return t.cum, t.offset, t.has_escapes


class _Encoder:
    def __init__(self) -> None:
        self.low = 0
        self.range = _MASK
        self.out = bytearray()

    def encode_freq(self, cum_freq: int, freq: int, tot_freq: int) -> None:
        r = self.range // tot_freq
        self.low = (self.low + r * cum_freq) & _MASK
        self.range = r * freq
        self._normalize()

    def _normalize(self) -> None:
        while True:
            if (self.low ^ ((self.low + self.range) & _MASK)) < _TOP:
                pass
            elif self.range < _BOT:
                self.range = (-self.low) & (_BOT - 1)
            else:
                break
            self.out.append((self.low >> 24) & 0xFF)
            self.low = (self.low << 8) & _MASK
            self.range = (self.range << 8) & _MASK

    def flush(self) -> bytes:
        for _ in range(4):
            self.out.append((self.low >> 24) & 0xFF)
            self.low = (self.low << 8) & _MASK
        return bytes(self.out)


class _Decoder:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0
        self.low = 0
        self.range = _MASK
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self.pos >= len(self.data):
            raise CoderError("bitstream truncated")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode_freq(self, tot_freq: int) -> int:
        self._r = self.range // tot_freq
        dv = (self.code - self.low) // self._r
        if dv >= tot_freq:
            raise CoderError("corrupt bitstream: cumulative value out of range")
        return dv

    def decode_update(self, cum_freq: int, freq: int) -> None:
        self.low = (self.low + self._r * cum_freq) & _MASK
        self.range = self._r * freq
        while True:
            if (self.low ^ ((self.low + self.range) & _MASK)) < _TOP:
                pass
            elif self.range < _BOT:
                self.range = (-self.low) & (_BOT - 1)
            else:
                break
            self.code = ((self.code << 8) | self._next_byte()) & _MASK
            self.low = (self.low << 8) & _MASK
            self.range = (self.range << 8) & _MASK


def _encode_bin(enc: _Encoder, cum: np.ndarray, j: int) -> None:
    lo = int(cum[j])
    enc.encode_freq(lo, int(cum[j + 1]) - lo, TOTAL_FREQ)


def _decode_bin(dec: _Decoder, cum: np.ndarray) -> int:
    dv = dec.decode_freq(TOTAL_FREQ)
    j = int(np.searchsorted(cum, dv, side="right")) - 1
    lo = int(cum[j])
    dec.decode_update(lo, int(cum[j + 1]) - lo)
    return j


def encode(symbols: Sequence[int], tables: TableColumn | Sequence[CdfTable]) -> bytes:
    """Range code ``symbols[i]`` under ``tables[i]``; returns the stream.

    An empty symbol sequence still produces the 4-byte flush.  A symbol
    outside a table's support raises unless the table has escape bins, in
    which case the symbol must fit in 16 bits two's complement.
    """
    n = len(symbols)
    if len(tables) != n:
        raise ShapeError(f"{n} symbols but {len(tables)} tables")
    enc = _Encoder()
    ucum = UNIFORM_BYTE.cum
    for i in range(n):
        cum, offset, has_escapes = _row(tables, i)
        s = int(symbols[i])
        nbins = len(cum) - 1
        lo_s = offset + (1 if has_escapes else 0)
        hi_s = offset + nbins - 1 - (1 if has_escapes else 0)
        if lo_s <= s <= hi_s:
            _encode_bin(enc, cum, s - offset)
        elif has_escapes:
            if not _ESCAPE_PAYLOAD_MIN <= s <= _ESCAPE_PAYLOAD_MAX:
                raise CoderError(f"escape symbol {s} exceeds 16-bit payload")
            _encode_bin(enc, cum, 0 if s < lo_s else nbins - 1)
            u = s & 0xFFFF
            _encode_bin(enc, ucum, u >> 8)
            _encode_bin(enc, ucum, u & 0xFF)
        else:
            raise CoderError(
                f"symbol {s} outside support [{lo_s}, {hi_s}] and no escape bins"
            )
    return enc.flush()


def decode(
    data: bytes, tables: TableColumn | Sequence[CdfTable]
) -> list[int]:
    """Decode ``len(tables)`` symbols; the stream must be consumed exactly."""
    dec = _Decoder(data)
    out: list[int] = []
    ucum = UNIFORM_BYTE.cum
    for i in range(len(tables)):
        cum, offset, has_escapes = _row(tables, i)
        j = _decode_bin(dec, cum)
        nbins = len(cum) - 1
        if has_escapes and (j == 0 or j == nbins - 1):
            u = (_decode_bin(dec, ucum) << 8) | _decode_bin(dec, ucum)
            s = u - 0x10000 if u >= 0x8000 else u
        else:
            s = offset + j
        out.append(s)
    if dec.pos != len(data):
        raise CoderError(
            f"bitstream has {len(data) - dec.pos} unread trailing bytes"
        )
    return out
