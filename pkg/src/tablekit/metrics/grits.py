"""Topology similarity between two grids (span-structure recovery score).

Every slot is described by its anchor's span rectangle in slot-relative
coordinates; slot pairs compare by area-IoU. The score aligns a row
subsequence and a column subsequence of each grid to maximize total slot
similarity. Exact 2D alignment is intractable, so this uses the standard
factored approximation: alternate sequence-alignment passes over rows and
columns until the alignment stops changing (at most 3 rounds), started from
both the row side and the column side, keeping the best consistent total.
All arithmetic is rational until the final division.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Optional

from ..grid import TableGrid
from .tree_edit import MetricScore

__all__ = ["grits_top", "slot_rectangles"]

Rect = tuple[int, int, int, int]  # row_start, row_end, col_start, col_end (inclusive, relative)


def slot_rectangles(grid: TableGrid) -> list[list[Rect]]:
    rects: list[list[Rect]] = []
    for r in range(grid.n_rows):
        row = []
        for c in range(grid.n_cols):
            slot = grid.cells[r][c]
            ar, ac = slot.covered_by if slot.covered_by is not None else (r, c)
            anchor = grid.cells[ar][ac]
            row.append((ar - r, ar + anchor.rowspan - 1 - r, ac - c, ac + anchor.colspan - 1 - c))
        rects.append(row)
    return rects


def _iou(a: Rect, b: Rect) -> Fraction:
    rows = min(a[1], b[1]) - max(a[0], b[0]) + 1
    cols = min(a[3], b[3]) - max(a[2], b[2]) + 1
    inter = rows * cols if rows > 0 and cols > 0 else 0
    area_a = (a[1] - a[0] + 1) * (a[3] - a[2] + 1)
    area_b = (b[1] - b[0] + 1) * (b[3] - b[2] + 1)
    union = area_a + area_b - inter
    return Fraction(inter, union)


Pairs = tuple[tuple[int, int], ...]


def _align(n_a: int, n_b: int, sim: Callable[[int, int], Fraction]) -> tuple[Fraction, Pairs]:
    """Max-weight non-crossing matching between two sequences."""
    zero = Fraction(0)
    dp = [[zero] * (n_b + 1) for _ in range(n_a + 1)]
    for i in range(1, n_a + 1):
        for j in range(1, n_b + 1):
            dp[i][j] = max(dp[i - 1][j], dp[i][j - 1], dp[i - 1][j - 1] + sim(i - 1, j - 1))
    pairs = []
    i, j = n_a, n_b
    while i > 0 and j > 0:
        if dp[i][j] == dp[i - 1][j - 1] + sim(i - 1, j - 1):
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif dp[i][j] == dp[i - 1][j]:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return dp[n_a][n_b], tuple(pairs)


def grits_top(pred: TableGrid, gt: TableGrid) -> MetricScore:
    slots_a = pred.n_rows * pred.n_cols
    slots_b = gt.n_rows * gt.n_cols
    if slots_a == 0 and slots_b == 0:
        return MetricScore(value=1.0)
    if slots_a == 0 or slots_b == 0:
        return MetricScore(value=0.0)

    ra = slot_rectangles(pred)
    rb = slot_rectangles(gt)
    n_a, m_a = pred.n_rows, pred.n_cols
    n_b, m_b = gt.n_rows, gt.n_cols
    iou_cache: dict[tuple[int, int, int, int], Fraction] = {}

    def iou(i: int, ip: int, j: int, jp: int) -> Fraction:
        key = (i, ip, j, jp)
        got = iou_cache.get(key)
        if got is None:
            got = iou_cache[key] = _iou(ra[i][j], rb[ip][jp])
        return got

    def align_rows(col_pairs: Optional[Pairs]) -> Pairs:
        def row_sim(i: int, ip: int) -> Fraction:
            if col_pairs is None:
                return _align(m_a, m_b, lambda j, jp: iou(i, ip, j, jp))[0]
            return sum((iou(i, ip, j, jp) for j, jp in col_pairs), Fraction(0))

        return _align(n_a, n_b, row_sim)[1]

    def align_cols(row_pairs: Optional[Pairs]) -> Pairs:
        def col_sim(j: int, jp: int) -> Fraction:
            if row_pairs is None:
                return _align(n_a, n_b, lambda i, ip: iou(i, ip, j, jp))[0]
            return sum((iou(i, ip, j, jp) for i, ip in row_pairs), Fraction(0))

        return _align(m_a, m_b, col_sim)[1]

    def total(row_pairs: Pairs, col_pairs: Pairs) -> Fraction:
        return sum(
            (iou(i, ip, j, jp) for i, ip in row_pairs for j, jp in col_pairs), Fraction(0)
        )

    best = Fraction(0)
    for start_with_rows in (True, False):
        rows = align_rows(None) if start_with_rows else None
        cols = None if start_with_rows else align_cols(None)
        for _ in range(3):
            if rows is not None:
                new_cols = align_cols(rows)
                best = max(best, total(rows, new_cols))
                if new_cols == cols:
                    break
                cols = new_cols
            new_rows = align_rows(cols)
            best = max(best, total(new_rows, cols))
            if new_rows == rows:
                break
            rows = new_rows

    return MetricScore(value=float(2 * best / (slots_a + slots_b)))
