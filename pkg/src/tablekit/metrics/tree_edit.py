"""Ordered-tree edit distance over table DOM trees, and the TEDS scores.

Distances are computed with the Zhang-Shasha keyroot algorithm. All costs are
kept as exact rationals (ints and Fractions), so distances are reproducible
bit for bit and can be compared against brute-force search in tests without
tolerances.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from html.parser import HTMLParser
from typing import Optional, Union

from ..grid import NoTableFound, sanitize_html

__all__ = [
    "EmptyGroundTruth",
    "MetricScore",
    "TreeNode",
    "build_table_tree",
    "tree_edit_distance",
    "tree_size",
    "teds",
    "s_teds",
]

Cost = Union[int, Fraction]


class EmptyGroundTruth(ValueError):
    """The reference side of a score has no table at all."""


@dataclass(frozen=True)
class MetricScore:
    value: float
    precision: Optional[float] = None
    recall: Optional[float] = None


@dataclass(frozen=True)
class TreeNode:
    tag: str
    colspan: int = 1
    rowspan: int = 1
    text: str = ""
    children: tuple["TreeNode", ...] = ()


def tree_size(node: TreeNode) -> int:
    return 1 + sum(tree_size(c) for c in node.children)


class _TreeBuilder(HTMLParser):
    """Build the DOM tree of the first table with the same recovery rules the
    grid parser uses: an open td/tr is closed by the next sibling open tag,
    tfoot counts as tbody, text outside cells is dropped, unsupported tags
    are transparent."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root: Optional[dict] = None
        self.done = False
        self.group: Optional[dict] = None
        self.row: Optional[dict] = None
        self.cell: Optional[dict] = None

    def handle_starttag(self, tag, attrs):
        if self.done:
            return
        if tag == "table":
            if self.root is None:
                self.root = {"tag": "table", "children": []}
            return
        if self.root is None:
            return
        if tag in ("thead", "tbody", "tfoot"):
            self._close_row()
            self.group = {"tag": "tbody" if tag == "tfoot" else tag, "children": []}
            self.root["children"].append(self.group)
        elif tag == "tr":
            self._close_row()
            self.row = {"tag": "tr", "children": []}
            (self.group or self.root)["children"].append(self.row)
        elif tag in ("td", "th"):
            self._close_cell()
            if self.row is None:
                self.row = {"tag": "tr", "children": []}
                (self.group or self.root)["children"].append(self.row)
            spans = dict(attrs)
            self.cell = {
                "tag": "td",
                "rowspan": _span(spans.get("rowspan")),
                "colspan": _span(spans.get("colspan")),
                "text": [],
            }
            self.row["children"].append(self.cell)

    def handle_endtag(self, tag):
        if self.done or self.root is None:
            return
        if tag == "table":
            self._close_row()
            self.done = True
        elif tag == "tr":
            self._close_row()
        elif tag in ("td", "th"):
            self._close_cell()
        elif tag in ("thead", "tbody", "tfoot"):
            self._close_row()
            self.group = None

    def handle_data(self, data):
        if self.cell is not None:
            self.cell["text"].append(data)

    def _close_cell(self):
        self.cell = None

    def _close_row(self):
        self._close_cell()
        self.row = None


def _span(value) -> int:
    try:
        n = int(str(value).strip())
    except (TypeError, ValueError):
        return 1
    return max(1, n)


def _freeze(node: dict) -> TreeNode:
    if node["tag"] == "td":
        return TreeNode(
            tag="td",
            colspan=node["colspan"],
            rowspan=node["rowspan"],
            text="".join(node["text"]).strip(),
        )
    return TreeNode(
        tag=node["tag"], children=tuple(_freeze(c) for c in node["children"])
    )


def build_table_tree(html: str) -> Optional[TreeNode]:
    """DOM tree of the first <table> in already-sanitized markup, or None."""
    builder = _TreeBuilder()
    try:
        builder.feed(html)
        builder.close()
    except Exception:
        return None
    if builder.root is None:
        return None
    return _freeze(builder.root)


_WS = re.compile(r"\s+")


def _collapse(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def _rename_cost(x: TreeNode, y: TreeNode, structure_only: bool) -> Cost:
    if x.tag != y.tag or x.colspan != y.colspan or x.rowspan != y.rowspan:
        return 1
    if structure_only or x.tag != "td":
        return 0
    a, b = _collapse(x.text), _collapse(y.text)
    if a == b:
        return 0
    return Fraction(_levenshtein(a, b), max(len(a), len(b)))


def _postorder(root: TreeNode) -> tuple[list[TreeNode], list[int]]:
    """Postordered nodes and, per node, the postorder index of its leftmost
    leaf descendant."""
    nodes: list[TreeNode] = []
    leftmost: list[int] = []

    def walk(node: TreeNode) -> int:
        first = None
        for child in node.children:
            idx = walk(child)
            if first is None:
                first = idx
        my_index = len(nodes)
        nodes.append(node)
        leftmost.append(first if first is not None else my_index)
        return leftmost[my_index]

    walk(root)
    return nodes, leftmost


def tree_edit_distance(a: TreeNode, b: TreeNode, structure_only: bool = False) -> Cost:
    """Exact ordered-tree edit distance; insert = delete = 1."""
    nodes_a, l_a = _postorder(a)
    nodes_b, l_b = _postorder(b)
    n, m = len(nodes_a), len(nodes_b)
    keyroots_a = _keyroots(l_a)
    keyroots_b = _keyroots(l_b)

    dist: list[list[Cost]] = [[0] * m for _ in range(n)]

    for ka in keyroots_a:
        for kb in keyroots_b:
            _treedist(ka, kb, nodes_a, nodes_b, l_a, l_b, dist, structure_only)
    return dist[n - 1][m - 1]


def _keyroots(leftmost: list[int]) -> list[int]:
    seen: set[int] = set()
    roots = []
    for i in range(len(leftmost) - 1, -1, -1):
        if leftmost[i] not in seen:
            roots.append(i)
            seen.add(leftmost[i])
    return sorted(roots)


def _treedist(i, j, nodes_a, nodes_b, l_a, l_b, dist, structure_only) -> None:
    ioff = l_a[i] - 1
    joff = l_b[j] - 1
    rows = i - l_a[i] + 2
    cols = j - l_b[j] + 2
    fd: list[list[Cost]] = [[0] * cols for _ in range(rows)]
    for x in range(1, rows):
        fd[x][0] = fd[x - 1][0] + 1
    for y in range(1, cols):
        fd[0][y] = fd[0][y - 1] + 1
    for x in range(1, rows):
        for y in range(1, cols):
            node_x = x + ioff
            node_y = y + joff
            if l_a[node_x] == l_a[i] and l_b[node_y] == l_b[j]:
                cost = _rename_cost(nodes_a[node_x], nodes_b[node_y], structure_only)
                fd[x][y] = min(fd[x - 1][y] + 1, fd[x][y - 1] + 1, fd[x - 1][y - 1] + cost)
                dist[node_x][node_y] = fd[x][y]
            else:
                p = l_a[node_x] - 1 - ioff
                q = l_b[node_y] - 1 - joff
                fd[x][y] = min(
                    fd[x - 1][y] + 1, fd[x][y - 1] + 1, fd[p][q] + dist[node_x][node_y]
                )


def _tree_of(html: str) -> Optional[TreeNode]:
    try:
        clean = sanitize_html(html)
    except NoTableFound:
        return None
    return build_table_tree(clean)


def teds(pred_html: str, gt_html: str, structure_only: bool = False) -> MetricScore:
    """Tree-edit-distance similarity: 1 − d / max(|T_pred|, |T_gt|).

    The ground-truth side must contain a table; a prediction without one
    scores 0. Inputs are sanitized here, so raw model output is acceptable.
    """
    gt = _tree_of(gt_html)
    if gt is None:
        raise EmptyGroundTruth("reference HTML contains no table")
    pred = _tree_of(pred_html)
    if pred is None:
        return MetricScore(value=0.0)
    distance = tree_edit_distance(pred, gt, structure_only=structure_only)
    denom = max(tree_size(pred), tree_size(gt))
    return MetricScore(value=float(1 - Fraction(distance) / denom))


def s_teds(pred_html: str, gt_html: str) -> MetricScore:
    return teds(pred_html, gt_html, structure_only=True)
