"""Primary-HDU FITS header reading (and a minimal writer for fixtures).

Headers are 2880-byte blocks of 80-column ASCII cards terminated by an
``END`` card. Only the primary HDU is read; anything after it is ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

BLOCK = 2880
CARD = 80

FitsValue = Union[bool, int, float, str, None]

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([EeDd][+-]?\d+)?$")


class FitsError(ValueError):
    pass


class FitsFormatError(FitsError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TruncatedHeaderError(FitsError):
    pass


@dataclass(frozen=True)
class Card:
    keyword: str
    value: FitsValue
    comment: str = ""
    has_value: bool = True


class FitsHeader(Mapping[str, FitsValue]):
    """Ordered cards with dict-style access to valued keywords (last one wins)."""

    def __init__(self, cards: Sequence[Card], header_bytes: int) -> None:
        self.cards = list(cards)
        self.header_bytes = header_bytes
        self._values = {c.keyword: c.value for c in self.cards if c.has_value}

    def __getitem__(self, key: str) -> FitsValue:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def items_multiset(self) -> list[tuple[str, FitsValue]]:
        return [(c.keyword, c.value) for c in self.cards if c.has_value]


def _parse_string(field: str, offset: int) -> tuple[str, str]:
    # field starts with the opening quote; '' is an escaped quote
    out = []
    i = 1
    while i < len(field):
        ch = field[i]
        if ch == "'":
            if i + 1 < len(field) and field[i + 1] == "'":
                out.append("'")
                i += 2
                continue
            rest = field[i + 1 :]
            comment = rest.split("/", 1)[1].strip() if "/" in rest else ""
            return "".join(out).rstrip(), comment
        out.append(ch)
        i += 1
    raise FitsFormatError("unterminated string value", offset)


def parse_value(field: str, offset: int = 0) -> tuple[FitsValue, str]:
    """Typed value and comment from the value field (columns 11-80) of a card."""
    stripped = field.lstrip()
    if stripped.startswith("'"):
        return _parse_string(stripped, offset)
    value_text, _, comment = stripped.partition("/")
    token = value_text.strip()
    comment = comment.strip()
    if token == "":
        return None, comment
    if token == "T":
        return True, comment
    if token == "F":
        return False, comment
    if _INT_RE.match(token):
        return int(token), comment
    if _FLOAT_RE.match(token):
        return float(token.replace("D", "E").replace("d", "e")), comment
    return token, comment


def parse_card(card: str, offset: int = 0) -> Card:
    keyword = card[:8].rstrip()
    if card[8:10] == "= " and keyword not in ("COMMENT", "HISTORY", ""):
        value, comment = parse_value(card[10:], offset + 10)
        return Card(keyword, value, comment)
    return Card(keyword, None, card[8:].rstrip(), has_value=False)


def read_header(data: bytes) -> FitsHeader:
    if not data.startswith(b"SIMPLE  ="):
        raise FitsFormatError("file does not start with a SIMPLE card", 0)
    cards = []
    nblocks = len(data) // BLOCK
    for b in range(nblocks):
        block = data[b * BLOCK : (b + 1) * BLOCK]
        for c in range(BLOCK // CARD):
            offset = b * BLOCK + c * CARD
            raw = block[c * CARD : (c + 1) * CARD]
            bad = next((i for i, ch in enumerate(raw) if ch < 0x20 or ch > 0x7E), None)
            if bad is not None:
                raise FitsFormatError("non-ASCII byte in header card", offset + bad)
            text = raw.decode("ascii")
            if text[:8].rstrip() == "END" and text[8:].strip() == "":
                return FitsHeader(cards, (b + 1) * BLOCK)
            cards.append(parse_card(text, offset))
    raise TruncatedHeaderError(f"no END card within {len(data)} bytes")


def parse_fits_header(path: str | Path) -> FitsHeader:
    return read_header(Path(path).read_bytes())


# -- pixel data -------------------------------------------------------------------

_DTYPES = {8: ">u1", 16: ">i2", 32: ">i4", -32: ">f4"}


def read_primary_data(path: str | Path) -> tuple[FitsHeader, np.ndarray, np.ndarray]:
    """Header, raw stored pixels and BZERO/BSCALE-scaled pixels of the primary HDU."""
    data = Path(path).read_bytes()
    header = read_header(data)
    bitpix = header.get("BITPIX")
    if bitpix not in _DTYPES:
        raise FitsError(f"unsupported BITPIX {bitpix!r}")
    naxis = header.get("NAXIS", 0)
    shape = [header.get(f"NAXIS{i}") for i in range(1, int(naxis) + 1)]
    if any(not isinstance(s, int) or s < 0 for s in shape):
        raise FitsError(f"invalid axis lengths {shape}")
    count = int(np.prod(shape)) if shape else 0
    dtype = np.dtype(_DTYPES[bitpix])
    start = header.header_bytes
    need = count * dtype.itemsize
    if len(data) < start + need:
        raise FitsError(f"data unit truncated: need {need} bytes after header")
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=start)
    if shape:
        raw = raw.reshape(shape[::-1])
    bzero = float(header.get("BZERO", 0.0) or 0.0)
    bscale = float(header.get("BSCALE", 1.0) or 1.0)
    return header, raw, raw.astype(np.float64) * bscale + bzero


# -- writing (fixtures, tests) ------------------------------------------------------


def format_value(value: FitsValue) -> str:
    if isinstance(value, bool):
        return f"{'T' if value else 'F':>20}"
    if isinstance(value, int):
        return f"{value:>20d}"
    if isinstance(value, float):
        text = repr(value).upper()
        if "." not in text and "E" not in text:
            text += "."
        return f"{text:>20}"
    if value is None:
        return " " * 20
    escaped = str(value).replace("'", "''")
    return f"'{escaped:<8}'".ljust(20)


def format_card(keyword: str, value: FitsValue = None, comment: str = "", *, has_value: bool = True) -> str:
    if not has_value:
        return f"{keyword:<8}{comment}"[:CARD].ljust(CARD)
    body = f"{keyword:<8}= {format_value(value)}"
    if comment:
        body += f" / {comment}"
    if len(body) > CARD:
        raise ValueError(f"card for {keyword} exceeds 80 columns")
    return body.ljust(CARD)


def header_bytes(cards: Sequence[str]) -> bytes:
    text = "".join(cards) + "END".ljust(CARD)
    pad = (-len(text)) % BLOCK
    return (text + " " * pad).encode("ascii")


def write_fits(
    path: str | Path,
    pixels: np.ndarray,
    *,
    bitpix: int = 16,
    extra: Sequence[tuple[str, FitsValue, str]] = (),
    bzero: float | None = None,
) -> None:
    """Write a single-HDU FITS image from stored (unscaled) pixel values."""
    arr = np.asarray(pixels)
    cards = [
        format_card("SIMPLE", True, "conforms to FITS standard"),
        format_card("BITPIX", bitpix),
        format_card("NAXIS", arr.ndim),
    ]
    for i, n in enumerate(arr.shape[::-1], start=1):
        cards.append(format_card(f"NAXIS{i}", int(n)))
    if bzero is not None:
        cards.append(format_card("BZERO", bzero))
        cards.append(format_card("BSCALE", 1.0))
    cards += [format_card(k, v, c) for k, v, c in extra]
    body = arr.astype(_DTYPES[bitpix]).tobytes()
    body += b"\0" * ((-len(body)) % BLOCK)
    Path(path).write_bytes(header_bytes(cards) + body)
