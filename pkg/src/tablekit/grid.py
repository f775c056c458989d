"""HTML table sanitization, grid reconstruction, row roles, and TABLE_JSON.

The canonical dialect is table/thead/tbody/tr/td with colspan/rowspan as the
only attributes. Everything model-emitted is funneled through sanitize_html
before parsing; everything persisted (ground truth, annotations) is written
back with grid_to_html in the same dialect.
"""

from __future__ import annotations

import html as html_mod
import json
import re
import unicodedata
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from typing import Optional, Sequence

__all__ = [
    "NoTableFound",
    "MalformedHtml",
    "CellSlot",
    "TableGrid",
    "RoleKeywordConfig",
    "HEADER",
    "DATA",
    "SUBTOTAL",
    "TOTAL",
    "TableJson",
    "sanitize_html",
    "parse_table",
    "detect_row_roles",
    "to_table_json",
    "grid_to_html",
    "strip_accents",
]


class NoTableFound(ValueError):
    """Raised when the input contains no <table> opening tag at all."""


class MalformedHtml(ValueError):
    """Raised when table markup is unbalanced beyond the recovery rules."""


HEADER = "header"
DATA = "data"
SUBTOTAL = "subtotal"
TOTAL = "total"

ROW_ROLES = (HEADER, DATA, SUBTOTAL, TOTAL)


@dataclass(frozen=True)
class CellSlot:
    """One position of the dense grid.

    Anchors carry the span; covered slots point back at their anchor. A slot
    covered from above replicates the anchor text (key columns must stay
    matchable), a slot covered from the left stays empty (amounts must not be
    double-counted).
    """

    text: str = ""
    anchor: bool = True
    rowspan: int = 1
    colspan: int = 1
    covered_by: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class TableGrid:
    n_rows: int
    n_cols: int
    cells: tuple[tuple[CellSlot, ...], ...]
    header_row_count: int = 0

    def slot(self, r: int, c: int) -> CellSlot:
        return self.cells[r][c]

    def body_rows(self) -> range:
        return range(self.header_row_count, self.n_rows)

    def check_invariants(self) -> None:
        """Raise MalformedHtml when the grid breaks its own structure rules."""
        if len(self.cells) != self.n_rows:
            raise MalformedHtml("row count mismatch")
        owner: dict[tuple[int, int], tuple[int, int]] = {}
        for r, row in enumerate(self.cells):
            if len(row) != self.n_cols:
                raise MalformedHtml(f"row {r} has {len(row)} slots, expected {self.n_cols}")
            for c, slot in enumerate(row):
                if slot.anchor:
                    if slot.rowspan < 1 or slot.colspan < 1:
                        raise MalformedHtml(f"non-positive span at ({r},{c})")
                    if r + slot.rowspan > self.n_rows or c + slot.colspan > self.n_cols:
                        raise MalformedHtml(f"span exceeds grid bounds at ({r},{c})")
                    for rr in range(r, r + slot.rowspan):
                        for cc in range(c, c + slot.colspan):
                            if (rr, cc) in owner:
                                raise MalformedHtml(f"overlapping spans at ({rr},{cc})")
                            owner[(rr, cc)] = (r, c)
        for r, row in enumerate(self.cells):
            for c, slot in enumerate(row):
                anchor_at = owner.get((r, c))
                if slot.anchor:
                    if anchor_at != (r, c):
                        raise MalformedHtml(f"anchor ({r},{c}) covered by {anchor_at}")
                else:
                    if slot.covered_by is None or anchor_at != slot.covered_by:
                        raise MalformedHtml(f"covered slot ({r},{c}) points at {slot.covered_by}")
                    if slot.rowspan != 1 or slot.colspan != 1:
                        raise MalformedHtml(f"covered slot ({r},{c}) carries a span")
        if not 0 <= self.header_row_count <= self.n_rows:
            raise MalformedHtml("header_row_count out of range")


_FENCE = re.compile(r"```[a-zA-Z]*\n?|```")
_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_TABLE_OPEN = re.compile(r"<table\b[^>]*>", re.IGNORECASE)
_TABLE_CLOSE = re.compile(r"</table\s*>", re.IGNORECASE)
_TH_OPEN = re.compile(r"<th\b", re.IGNORECASE)
_TH_CLOSE = re.compile(r"</th\s*>", re.IGNORECASE)
_INLINE = re.compile(r"</?(?:b|i|strong|em|span|div|font|center)\b[^>]*>", re.IGNORECASE)
_CELL_LEAD = re.compile(r"(<td\b[^>]*>)\s+")
_CELL_TRAIL = re.compile(r"\s+(</td>)")
_BETWEEN_TAGS = re.compile(r">\s+<")


def sanitize_html(raw: str) -> str:
    """Reduce arbitrary model output to one clean <table> fragment.

    Purely syntactic: fence/wrapper/outside-text removal, <th> to <td>,
    inline-tag stripping, and whitespace trimming inside cells. Idempotent.
    """
    text = _FENCE.sub("", raw)
    text = _COMMENT.sub("", text)
    m = _TABLE_OPEN.search(text)
    if m is None:
        raise NoTableFound("no <table> opening tag in input")
    end = _TABLE_CLOSE.search(text, m.end())
    if end is not None:
        segment = text[m.start() : end.end()]
    else:
        segment = text[m.start() :] + "</table>"
    segment = _TH_OPEN.sub("<td", segment)
    segment = _TH_CLOSE.sub("</td>", segment)
    segment = _INLINE.sub("", segment)
    segment = _BETWEEN_TAGS.sub("><", segment)
    segment = _CELL_LEAD.sub(r"\1", segment)
    segment = _CELL_TRAIL.sub(r"\1", segment)
    return segment.strip()


class _TableParser(HTMLParser):
    """Event parser for the sanitized dialect.

    Collects raw rows of (text, rowspan, colspan) plus the section each row
    came from. Unclosed <td>/<tr> are closed at the next sibling/parent open
    tag, per the recovery rule.
    """

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.rows: list[tuple[str, list[tuple[str, int, int]]]] = []
        self.section = ""  # "", "thead" or "tbody"
        self.in_table = False
        self.done = False
        self.row: Optional[list[tuple[str, int, int]]] = None
        self.cell: Optional[list[str]] = None
        self.cell_spans = (1, 1)

    def handle_starttag(self, tag, attrs):
        if self.done:
            return
        if tag == "table":
            if not self.in_table:
                self.in_table = True
            return
        if not self.in_table:
            return
        if tag in ("thead", "tbody", "tfoot"):
            self._close_row()
            self.section = "tbody" if tag == "tfoot" else tag
        elif tag == "tr":
            self._close_row()
            self.row = []
        elif tag == "td":
            self._close_cell()
            if self.row is None:
                self.row = []
            spans = dict(attrs)
            self.cell = []
            self.cell_spans = (_span_of(spans.get("rowspan")), _span_of(spans.get("colspan")))

    def handle_endtag(self, tag):
        if self.done or not self.in_table:
            return
        if tag == "table":
            self._close_row()
            self.done = True
        elif tag == "tr":
            self._close_row()
        elif tag == "td":
            self._close_cell()
        elif tag in ("thead", "tbody", "tfoot"):
            self._close_row()
            self.section = ""

    def handle_data(self, data):
        if self.cell is not None:
            self.cell.append(data)

    def _close_cell(self):
        if self.cell is not None and self.row is not None:
            rs, cs = self.cell_spans
            self.row.append(("".join(self.cell).strip(), rs, cs))
        self.cell = None

    def _close_row(self):
        self._close_cell()
        if self.row is not None:
            self.rows.append((self.section, self.row))
        self.row = None


def _span_of(value) -> int:
    try:
        n = int(str(value).strip())
    except (TypeError, ValueError):
        return 1
    return max(1, n)


def parse_table(html: str) -> TableGrid:
    """Expand spans into a dense rectangular grid.

    Rows inside <thead> (or the first row when there is no <thead>) count as
    header rows. Over-wide spans are clipped; short rows are right-padded.
    """
    parser = _TableParser()
    try:
        parser.feed(html)
        parser.close()
    except Exception as exc:  # html.parser rarely throws, but keep the contract
        raise MalformedHtml(str(exc)) from exc
    if not parser.in_table:
        raise MalformedHtml("no <table> element")
    raw_rows = parser.rows
    if not raw_rows:
        return TableGrid(n_rows=0, n_cols=0, cells=(), header_row_count=0)

    saw_thead = any(section == "thead" for section, _ in raw_rows)

    # First pass: place anchors left-to-right with a pending-rowspan map
    # (col -> rows still covered, current row included) to learn the true
    # column extent of every row.
    placements: list[list[tuple[int, str, int, int]]] = []
    pending: dict[int, int] = {}
    n_cols = 0
    prev_section = None
    for section, cells in raw_rows:
        if saw_thead and prev_section == "thead" and section != "thead":
            pending.clear()  # rowspans do not cross the header/body boundary
        prev_section = section
        placed: list[tuple[int, str, int, int]] = []
        col = 0
        for text, rs, cs in cells:
            while pending.get(col, 0) > 0:
                col += 1
            placed.append((col, text, rs, cs))
            col += cs
        width = col
        for c in pending:
            width = max(width, c + 1)
        n_cols = max(n_cols, width)
        for c in list(pending):
            pending[c] -= 1
            if pending[c] <= 0:
                del pending[c]
        for anchor_col, text, rs, cs in placed:
            if rs > 1:
                for c in range(anchor_col, anchor_col + cs):
                    pending[c] = max(pending.get(c, 0), rs - 1)
        placements.append(placed)

    n_rows = len(raw_rows)
    header_row_count = (
        sum(1 for section, _ in raw_rows if section == "thead") if saw_thead else min(1, n_rows)
    )

    # Second pass: realize the dense matrix. Spans are clipped to the grid
    # bounds, and to the header/body boundary when an explicit <thead> drew
    # one; writes are guarded so conflicting spans degrade instead of
    # corrupting the matrix.
    matrix: list[list[Optional[CellSlot]]] = [[None] * n_cols for _ in range(n_rows)]
    for r, placed in enumerate(placements):
        limit = header_row_count if saw_thead and r < header_row_count else n_rows
        for col, text, rs, cs in placed:
            if col >= n_cols or matrix[r][col] is not None:
                continue
            rs = min(rs, limit - r)
            cs = min(cs, n_cols - col)
            while cs > 1 and any(matrix[r][c] is not None for c in range(col + 1, col + cs)):
                cs -= 1
            while rs > 1 and any(
                matrix[rr][cc] is not None
                for rr in range(r + 1, r + rs)
                for cc in range(col, col + cs)
            ):
                rs -= 1
            matrix[r][col] = CellSlot(text=text, anchor=True, rowspan=rs, colspan=cs)
            for rr in range(r, r + rs):
                for cc in range(col, col + cs):
                    if rr == r and cc == col:
                        continue
                    covered_text = text if cc == col else ""
                    matrix[rr][cc] = CellSlot(
                        text=covered_text, anchor=False, covered_by=(r, col)
                    )
    for r in range(n_rows):
        for c in range(n_cols):
            if matrix[r][c] is None:
                matrix[r][c] = CellSlot()

    grid = TableGrid(
        n_rows=n_rows,
        n_cols=n_cols,
        cells=tuple(tuple(row) for row in matrix),  # type: ignore[arg-type]
        header_row_count=header_row_count,
    )
    grid.check_invariants()
    return grid


@dataclass(frozen=True)
class RoleKeywordConfig:
    """Keyword lists for the role heuristic; file-loadable so the defaults
    below (French + English) are not baked into deployments."""

    subtotal_keywords: tuple[str, ...] = ("sous-total", "sous total", "subtotal")
    total_keywords: tuple[str, ...] = ("total",)

    @classmethod
    def from_file(cls, path) -> "RoleKeywordConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(
            subtotal_keywords=tuple(data.get("subtotal_keywords", cls.subtotal_keywords)),
            total_keywords=tuple(data.get("total_keywords", cls.total_keywords)),
        )


def strip_accents(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def _fold(text: str) -> str:
    return strip_accents(text).casefold()


def detect_row_roles(
    grid: TableGrid, keywords: RoleKeywordConfig = RoleKeywordConfig()
) -> list[str]:
    """Classify every row; the subtotal test runs before the total test
    because "sous-total" contains "total"."""
    sub = [_fold(k) for k in keywords.subtotal_keywords]
    tot = [_fold(k) for k in keywords.total_keywords]
    roles: list[str] = []
    for r in range(grid.n_rows):
        if r < grid.header_row_count:
            roles.append(HEADER)
            continue
        folded = [_fold(slot.text) for slot in grid.cells[r] if slot.text]
        if any(k in cell for cell in folded for k in sub):
            roles.append(SUBTOTAL)
        elif any(k in cell for cell in folded for k in tot):
            roles.append(TOTAL)
        else:
            roles.append(DATA)
    return roles


@dataclass(frozen=True)
class TableJson:
    """Planner-facing serialization: flat headers plus role-tagged body rows."""

    headers: tuple[str, ...]
    rows: tuple[dict, ...]

    def to_obj(self) -> dict:
        return {"headers": list(self.headers), "rows": [dict(r) for r in self.rows]}

    def dumps(self) -> str:
        return json.dumps(self.to_obj(), ensure_ascii=False)


def to_table_json(grid: TableGrid, roles: Optional[Sequence[str]] = None) -> TableJson:
    """Flatten headers column-wise and emit body rows in visual order."""
    if roles is None:
        roles = detect_row_roles(grid)
    headers = []
    for c in range(grid.n_cols):
        seen: list[str] = []
        for r in range(grid.header_row_count):
            slot = grid.cells[r][c]
            if slot.covered_by is not None:
                ar, ac = slot.covered_by
                # A spanning header labels every column it covers.
                text = grid.cells[ar][ac].text
            else:
                text = slot.text
            if text and text not in seen:
                seen.append(text)
        headers.append(" | ".join(seen))
    rows = []
    for index, r in enumerate(grid.body_rows(), start=1):
        rows.append(
            {
                "index": index,
                "role": roles[r],
                "cells": [grid.cells[r][c].text for c in range(grid.n_cols)],
            }
        )
    return TableJson(headers=tuple(headers), rows=tuple(rows))


def grid_to_html(grid: TableGrid) -> str:
    """Serialize back to the canonical dialect (anchors only, spans as
    attributes, thead/tbody per header_row_count).

    When a header-row anchor spans into the body, <thead> is omitted: the
    row-group boundary would clip that span on reparse. The headerless form
    reparses with an implicit single header row, which is exactly the only
    configuration parse_table can produce such a grid from.
    """
    parts = ["<table>"]

    def emit_rows(rows: range) -> None:
        for r in rows:
            parts.append("<tr>")
            for c in range(grid.n_cols):
                slot = grid.cells[r][c]
                if not slot.anchor:
                    continue
                attrs = ""
                if slot.rowspan > 1:
                    attrs += f' rowspan="{slot.rowspan}"'
                if slot.colspan > 1:
                    attrs += f' colspan="{slot.colspan}"'
                parts.append(f"<td{attrs}>{html_mod.escape(slot.text, quote=False)}</td>")
            parts.append("</tr>")

    crossing = any(
        slot.anchor and r + slot.rowspan > grid.header_row_count
        for r in range(grid.header_row_count)
        for slot in grid.cells[r]
    )
    if crossing:
        parts.append("<tbody>")
        emit_rows(range(grid.n_rows))
        parts.append("</tbody>")
    else:
        if grid.header_row_count > 0:
            parts.append("<thead>")
            emit_rows(range(grid.header_row_count))
            parts.append("</thead>")
        if grid.n_rows > grid.header_row_count:
            parts.append("<tbody>")
            emit_rows(range(grid.header_row_count, grid.n_rows))
            parts.append("</tbody>")
    parts.append("</table>")
    return "".join(parts)
