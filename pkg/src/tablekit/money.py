"""Locale-aware parsing and formatting of financial numbers.

Values are kept as base-10 decimals end to end; nothing in this module ever
touches binary floating point, so sums of parsed amounts are exact and
independent of evaluation order.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from decimal import Context, Decimal
from typing import Iterable, Optional

__all__ = [
    "COMMA_DECIMAL",
    "DOT_DECIMAL",
    "Amount",
    "parse_amount",
    "format_amount",
    "detect_convention",
    "sum_amounts",
]

COMMA_DECIMAL = "comma-decimal"
DOT_DECIMAL = "dot-decimal"

# Wide enough that any realistic ledger arithmetic stays exact; the context
# exists only to rule out silent rounding at the default 28-digit precision.
_CTX = Context(prec=200)


@dataclass(frozen=True)
class Amount:
    """An exact decimal value plus where it came from.

    `convention` records which decimal mark the source used, or None when the
    source carried no mark (plain integers) or the value was computed.
    """

    value: Decimal
    source: str = ""
    convention: Optional[str] = None

    @property
    def scale(self) -> int:
        exp = self.value.as_tuple().exponent
        return -exp if isinstance(exp, int) and exp < 0 else 0

    def __add__(self, other: "Amount") -> "Amount":
        return Amount(_CTX.add(self.value, other.value))

    def __sub__(self, other: "Amount") -> "Amount":
        return Amount(_CTX.subtract(self.value, other.value))

    @classmethod
    def from_int(cls, n: int) -> "Amount":
        return cls(Decimal(n))


# Currency/percent marks stripped from the ends before number classification.
_EDGE_MARKS = re.compile(r"^(?:[\s€$£%]|eur\b)+|(?:[\s€$£%]|\beur)+$", re.IGNORECASE)
_LEAD_TEXT = re.compile(r"^[^0-9+\-.,]*")
_TRAIL_TEXT = re.compile(r"[^0-9]*$")
_NUMBER_BODY = re.compile(r"([+-]?)([0-9., ]+)")


def parse_amount(text: str) -> Optional[Amount]:
    """Parse a financial number, or return None when none is present.

    Grammar, in order: strip edge currency/percent marks, classify the decimal
    mark as the rightmost of {",", "."} followed by 1-2 trailing digits,
    validate/remove grouping marks, parse. Surrounding non-numeric text is
    stripped only at the ends, so "12 abc 34" stays unparseable.
    """
    if not text:
        return None
    s = unicodedata.normalize("NFKC", text).replace("−", "-").strip()
    s = _EDGE_MARKS.sub("", s)
    s = _LEAD_TEXT.sub("", s)
    s = _TRAIL_TEXT.sub("", s)
    m = _NUMBER_BODY.fullmatch(s)
    if m is None:
        return None
    sign, body = m.group(1), m.group(2)
    if not any(ch.isdigit() for ch in body):
        return None

    int_part, frac_part, convention = _split_decimal(body)
    digits = _strip_grouping(int_part, convention)
    if digits is None and convention is None:
        # No 1-2 digit decimal tail and the grouping reading failed. A longer
        # all-digit tail after the rightmost separator is then the only
        # reading left, so take it as the fraction ("12,3456" → 12.3456).
        int_part, frac_part, convention = _split_decimal(body, max_frac=None)
        if convention is not None:
            digits = _strip_grouping(int_part, convention)
    if digits is None:
        return None

    literal = (sign if sign == "-" else "") + (digits or "0")
    if frac_part:
        literal += "." + frac_part
    return Amount(Decimal(literal), source=text, convention=convention)


def _split_decimal(body: str, max_frac: Optional[int] = 2) -> tuple[str, str, Optional[str]]:
    """Split off the fraction, returning (int_part, frac_part, convention)."""
    last = max(body.rfind(","), body.rfind("."))
    if last >= 0:
        tail = body[last + 1 :]
        if tail.isdigit() and tail and (max_frac is None or len(tail) <= max_frac):
            mark = body[last]
            conv = COMMA_DECIMAL if mark == "," else DOT_DECIMAL
            return body[:last], tail, conv
    return body, "", None


def _strip_grouping(int_part: str, convention: Optional[str]) -> Optional[str]:
    """Validate grouping marks in the integer part and drop them.

    Space grouping is always allowed; dot grouping only when the comma is the
    decimal mark and vice versa (with no mark, either one, but never mixed).
    Non-space groups after the first must have exactly 3 digits.
    """
    if int_part == "":
        return ""
    kinds = {ch for ch in int_part if not ch.isdigit()}
    if not kinds:
        return int_part
    if len(kinds) > 1:
        return None
    mark = kinds.pop()
    if mark == "." and convention == DOT_DECIMAL:
        return None
    if mark == "," and convention == COMMA_DECIMAL:
        return None
    groups = int_part.split(mark)
    if any(g == "" for g in groups):
        return None
    if any(len(g) != 3 for g in groups[1:]) or len(groups[0]) > 3:
        return None
    return "".join(groups)


def format_amount(a: Amount, convention: str = COMMA_DECIMAL, min_scale: int = 0) -> str:
    """Render with the given decimal mark, no grouping, sign only if negative."""
    scale = max(a.scale, min_scale)
    q = _CTX.quantize(a.value, Decimal(1).scaleb(-scale))
    body = format(q.copy_abs(), "f")
    if convention == COMMA_DECIMAL:
        body = body.replace(".", ",")
    sign = "-" if q < 0 else ""
    return sign + body


def detect_convention(cells: Iterable[str]) -> str:
    """Majority decimal-mark convention among parseable cells.

    Falls back to comma-decimal on a tie or when no cell carries a mark.
    """
    comma = dot = 0
    for cell in cells:
        a = parse_amount(cell)
        if a is None:
            continue
        if a.convention == COMMA_DECIMAL:
            comma += 1
        elif a.convention == DOT_DECIMAL:
            dot += 1
    return DOT_DECIMAL if dot > comma else COMMA_DECIMAL


def sum_amounts(amounts: Iterable[Amount]) -> Amount:
    total = Amount(Decimal(0))
    for a in amounts:
        total = total + a
    return total
