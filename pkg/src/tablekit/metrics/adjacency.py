"""Cell-adjacency precision/recall/F1 between two grids.

An edge connects two distinct anchor cells that touch along a grid line;
only right and down directions are kept (left/up are mirrors). Edges compare
as text-keyed multisets, so no cell alignment between the grids is needed.
"""

from __future__ import annotations

import re
from collections import Counter

from ..grid import TableGrid
from .tree_edit import MetricScore

__all__ = ["adjacency_edges", "adjacency_f1"]

_WS = re.compile(r"\s+")


def _norm(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _anchor_of(grid: TableGrid, r: int, c: int) -> tuple[int, int]:
    slot = grid.cells[r][c]
    return slot.covered_by if slot.covered_by is not None else (r, c)


def adjacency_edges(grid: TableGrid) -> Counter:
    """Multiset of (from_text, to_text, direction) edges."""
    pairs: set[tuple[tuple[int, int], tuple[int, int], str]] = set()
    for r in range(grid.n_rows):
        for c in range(grid.n_cols):
            here = _anchor_of(grid, r, c)
            if c + 1 < grid.n_cols:
                right = _anchor_of(grid, r, c + 1)
                if right != here:
                    pairs.add((here, right, "right"))
            if r + 1 < grid.n_rows:
                down = _anchor_of(grid, r + 1, c)
                if down != here:
                    pairs.add((here, down, "down"))
    edges: Counter = Counter()
    for (ar, ac), (br, bc), direction in pairs:
        edges[(_norm(grid.cells[ar][ac].text), _norm(grid.cells[br][bc].text), direction)] += 1
    return edges


def adjacency_f1(pred: TableGrid, gt: TableGrid) -> MetricScore:
    pred_edges = adjacency_edges(pred)
    gt_edges = adjacency_edges(gt)
    n_pred = sum(pred_edges.values())
    n_gt = sum(gt_edges.values())
    if n_pred == 0 and n_gt == 0:
        return MetricScore(value=1.0, precision=1.0, recall=1.0)
    hits = sum((pred_edges & gt_edges).values())
    # One empty side is vacuously perfect on its own axis and zero on the other.
    precision = hits / n_pred if n_pred else 1.0
    recall = hits / n_gt if n_gt else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricScore(value=f1, precision=precision, recall=recall)
