"""Oracle and property tests for the table metrics."""

import random
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

import pytest

from tablekit.grid import TableGrid, CellSlot, parse_table, sanitize_html, grid_to_html
from tablekit.metrics import (
    EmptyGroundTruth,
    TreeNode,
    adjacency_edges,
    adjacency_f1,
    build_table_tree,
    grits_top,
    s_teds,
    teds,
    tree_edit_distance,
    tree_size,
)
from tablekit.metrics.grits import slot_rectangles

from tablegen import random_grid


# --- independent brute-force tree edit distance ---------------------------
# Decomposes on rightmost roots with memoization; shares no code with the
# keyroot implementation under test.


@lru_cache(maxsize=None)
def _lev(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        _lev(a[:-1], b) + 1,
        _lev(a, b[:-1]) + 1,
        _lev(a[:-1], b[:-1]) + (a[-1] != b[-1]),
    )


def _brute_rename(x: TreeNode, y: TreeNode, structure_only: bool):
    if (x.tag, x.colspan, x.rowspan) != (y.tag, y.colspan, y.rowspan):
        return 1
    if structure_only or x.tag != "td":
        return 0
    a = " ".join(x.text.split())
    b = " ".join(y.text.split())
    if a == b:
        return 0
    return Fraction(_lev(a, b), max(len(a), len(b)))


def _forest_size(forest) -> int:
    return sum(tree_size(t) for t in forest)


def brute_tree_distance(a: TreeNode, b: TreeNode, structure_only: bool = False):
    @lru_cache(maxsize=None)
    def fdist(fa, fb):
        if not fa and not fb:
            return 0
        if not fa:
            return _forest_size(fb)
        if not fb:
            return _forest_size(fa)
        *rest_a, va = fa
        *rest_b, wb = fb
        delete = fdist(tuple(rest_a) + va.children, fb) + 1
        insert = fdist(fa, tuple(rest_b) + wb.children) + 1
        match = (
            fdist(va.children, wb.children)
            + fdist(tuple(rest_a), tuple(rest_b))
            + _brute_rename(va, wb, structure_only)
        )
        return min(delete, insert, match)

    return fdist((a,), (b,))


def random_tree(rng: random.Random, max_nodes: int = 8) -> TreeNode:
    tags = ["table", "thead", "tbody", "tr", "td"]
    texts = ["", "a", "ab", "40,00", "total", "x y"]

    def make_node():
        tag = rng.choice(tags)
        if tag == "td":
            return {
                "tag": "td",
                "colspan": rng.randint(1, 3),
                "rowspan": rng.randint(1, 2),
                "text": rng.choice(texts),
                "children": [],
            }
        return {"tag": tag, "colspan": 1, "rowspan": 1, "text": "", "children": []}

    n = rng.randint(1, max_nodes)
    root = make_node()
    nodes = [root]
    for _ in range(n - 1):
        parent = rng.choice(nodes)
        child = make_node()
        parent["children"].append(child)
        nodes.append(child)

    def freeze(d):
        return TreeNode(
            tag=d["tag"],
            colspan=d["colspan"],
            rowspan=d["rowspan"],
            text=d["text"],
            children=tuple(freeze(c) for c in d["children"]),
        )

    return freeze(root)


class TestTreeEditDistance:
    def test_identity_zero(self):
        rng = random.Random(7)
        for _ in range(20):
            t = random_tree(rng)
            assert tree_edit_distance(t, t) == 0

    def test_single_extra_td(self):
        td = TreeNode(tag="td", text="x")
        a = TreeNode(tag="table", children=(TreeNode(tag="tr", children=(td,)),))
        b = TreeNode(tag="table", children=(TreeNode(tag="tr", children=(td, td)),))
        assert tree_edit_distance(a, b) == 1

    def test_matches_brute_force_on_small_trees(self):
        rng = random.Random(20260820)
        for case in range(200):
            a = random_tree(rng)
            b = random_tree(rng)
            structure_only = case % 3 == 0
            got = tree_edit_distance(a, b, structure_only=structure_only)
            want = brute_tree_distance(a, b, structure_only=structure_only)
            assert got == want, (a, b, structure_only, got, want)

    def test_triangle_inequality(self):
        rng = random.Random(99)
        for _ in range(60):
            a, b, c = (random_tree(rng, max_nodes=6) for _ in range(3))
            ab = tree_edit_distance(a, b)
            bc = tree_edit_distance(b, c)
            ac = tree_edit_distance(a, c)
            assert ac <= ab + bc

    def test_symmetry(self):
        rng = random.Random(123)
        for _ in range(40):
            a = random_tree(rng)
            b = random_tree(rng)
            assert tree_edit_distance(a, b) == tree_edit_distance(b, a)


GT_3X2 = (
    "<table><thead><tr><td>A</td><td>B</td></tr></thead>"
    "<tbody><tr><td>1</td><td>2</td></tr><tr><td>3</td><td>4</td></tr></tbody></table>"
)
PRED_MISSING_ROW = (
    "<table><thead><tr><td>A</td><td>B</td></tr></thead>"
    "<tbody><tr><td>1</td><td>2</td></tr></tbody></table>"
)


class TestTeds:
    def test_identity(self):
        assert teds(GT_3X2, GT_3X2).value == 1.0

    def test_garbled_text_structure_intact(self):
        pred = GT_3X2.replace("<td>4</td>", "<td>9</td>")
        assert s_teds(pred, GT_3X2).value == 1.0
        assert teds(pred, GT_3X2).value < 1.0

    def test_missing_row_hand_computed(self):
        # gt has 12 nodes; removing one body row deletes tr + 2 td = 3 nodes
        gt_tree = build_table_tree(GT_3X2)
        assert tree_size(gt_tree) == 12
        score = teds(PRED_MISSING_ROW, GT_3X2)
        assert score.value == 1 - 3 / 12

    def test_pred_without_table_scores_zero(self):
        assert teds("there is no table here", GT_3X2).value == 0.0

    def test_gt_without_table_raises(self):
        with pytest.raises(EmptyGroundTruth):
            teds(GT_3X2, "nothing")

    def test_sanitizes_raw_model_output(self):
        wrapped = "```html\n<html><body>" + GT_3X2.replace("td>", "th>") + "</body></html>\n```"
        assert teds(wrapped, GT_3X2).value == 1.0

    def test_identity_on_random_grids(self):
        rng = random.Random(5)
        for _ in range(60):
            html = grid_to_html(random_grid(rng))
            assert teds(html, html).value == 1.0
            assert s_teds(html, html).value == 1.0

    def test_steds_text_invariance(self):
        rng = random.Random(6)
        for _ in range(40):
            grid = random_grid(rng)
            html = grid_to_html(grid)
            renamed = _retext(grid)
            assert s_teds(grid_to_html(renamed), html).value == 1.0

    def test_range_on_random_pairs(self):
        rng = random.Random(8)
        for _ in range(40):
            a = grid_to_html(random_grid(rng))
            b = grid_to_html(random_grid(rng))
            for score in (teds(a, b), s_teds(a, b)):
                assert 0.0 <= score.value <= 1.0


def _retext(grid: TableGrid) -> TableGrid:
    counter = [0]

    def new_slot(slot: CellSlot) -> CellSlot:
        if not slot.anchor:
            return slot
        counter[0] += 1
        return CellSlot(
            text=f"cell {counter[0]}",
            anchor=True,
            rowspan=slot.rowspan,
            colspan=slot.colspan,
        )

    cells = tuple(tuple(new_slot(s) for s in row) for row in grid.cells)
    return TableGrid(
        n_rows=grid.n_rows,
        n_cols=grid.n_cols,
        cells=cells,
        header_row_count=grid.header_row_count,
    )


def g(html: str) -> TableGrid:
    return parse_table(sanitize_html(html))


class TestAdjacency:
    def test_identity(self):
        grid = g("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td><td>d</td></tr></table>")
        score = adjacency_f1(grid, grid)
        assert score.value == score.precision == score.recall == 1.0

    def test_swapped_rows_lower_recall(self):
        gt = g("<table><tr><td>A</td></tr><tr><td>B</td></tr><tr><td>C</td></tr></table>")
        pred = g("<table><tr><td>A</td></tr><tr><td>C</td></tr><tr><td>B</td></tr></table>")
        score = adjacency_f1(pred, gt)
        assert score.recall < 1.0

    def test_single_cell_vs_2x2(self):
        pred = g("<table><tr><td>a</td></tr></table>")
        gt = g("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td><td>d</td></tr></table>")
        score = adjacency_f1(pred, gt)
        assert score.precision == 1.0
        assert score.recall == 0.0
        assert score.value == 0.0

    def test_both_empty(self):
        empty = g("<table></table>")
        score = adjacency_f1(empty, empty)
        assert score.value == score.precision == score.recall == 1.0

    def test_span_suppresses_internal_edges(self):
        merged = g('<table><tr><td colspan="2">wide</td></tr><tr><td>a</td><td>b</td></tr></table>')
        edges = adjacency_edges(merged)
        assert ("wide", "wide", "right") not in edges
        assert edges[("wide", "a", "down")] == 1
        assert edges[("wide", "b", "down")] == 1

    def test_precision_recall_swap_under_exchange(self):
        rng = random.Random(11)
        for _ in range(50):
            a = random_grid(rng)
            b = random_grid(rng)
            ab = adjacency_f1(a, b)
            ba = adjacency_f1(b, a)
            assert ab.precision == ba.recall
            assert ab.recall == ba.precision
            assert ab.value == pytest.approx(ba.value, abs=1e-12)

    def test_self_score_on_random_grids(self):
        rng = random.Random(12)
        for _ in range(60):
            grid = random_grid(rng)
            assert adjacency_f1(grid, grid).value == 1.0


def tilings(n_rows: int, n_cols: int):
    """All partitions of an n_rows×n_cols grid into axis-aligned rectangles."""

    def rec(covered: frozenset):
        first = None
        for r in range(n_rows):
            for c in range(n_cols):
                if (r, c) not in covered:
                    first = (r, c)
                    break
            if first:
                break
        if first is None:
            yield []
            return
        r, c = first
        for rs in range(1, n_rows - r + 1):
            for cs in range(1, n_cols - c + 1):
                cells = {(r + dr, c + dc) for dr in range(rs) for dc in range(cs)}
                if cells & covered:
                    continue
                for rest in rec(covered | cells):
                    yield [(r, c, rs, cs)] + rest

    yield from rec(frozenset())


def tiling_to_grid(n_rows: int, n_cols: int, rects) -> TableGrid:
    rows_html = []
    for r in range(n_rows):
        cells = [
            f'<td rowspan="{rs}" colspan="{cs}">r{ar}c{ac}</td>'
            for (ar, ac, rs, cs) in sorted(rects, key=lambda t: t[1])
            if ar == r
        ]
        rows_html.append("<tr>" + "".join(cells) + "</tr>")
    return g("<table>" + "".join(rows_html) + "</table>")


def exhaustive_grits(a: TableGrid, b: TableGrid) -> float:
    slots_a = a.n_rows * a.n_cols
    slots_b = b.n_rows * b.n_cols
    if slots_a == 0 and slots_b == 0:
        return 1.0
    if slots_a == 0 or slots_b == 0:
        return 0.0
    ra = slot_rectangles(a)
    rb = slot_rectangles(b)

    def iou(x, y):
        rows = min(x[1], y[1]) - max(x[0], y[0]) + 1
        cols = min(x[3], y[3]) - max(x[2], y[2]) + 1
        inter = rows * cols if rows > 0 and cols > 0 else 0
        union = (
            (x[1] - x[0] + 1) * (x[3] - x[2] + 1)
            + (y[1] - y[0] + 1) * (y[3] - y[2] + 1)
            - inter
        )
        return Fraction(inter, union)

    def seq_pairs(n, m):
        for k in range(min(n, m) + 1):
            for sa in combinations(range(n), k):
                for sb in combinations(range(m), k):
                    yield tuple(zip(sa, sb))

    best = Fraction(0)
    col_options = list(seq_pairs(a.n_cols, b.n_cols))
    for rp in seq_pairs(a.n_rows, b.n_rows):
        for cp in col_options:
            s = sum(
                (iou(ra[i][j], rb[ip][jp]) for i, ip in rp for j, jp in cp), Fraction(0)
            )
            if s > best:
                best = s
    return float(2 * best / (slots_a + slots_b))


class TestGrits:
    def test_identity(self):
        grid = g('<table><tr><td rowspan="2">a</td><td>b</td></tr><tr><td>c</td></tr></table>')
        assert grits_top(grid, grid).value == 1.0

    def test_2x2_merge_matches_brute_force(self):
        gt = g("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td><td>d</td></tr></table>")
        pred = g('<table><tr><td colspan="2">ab</td></tr><tr><td>c</td><td>d</td></tr></table>')
        assert grits_top(pred, gt).value == pytest.approx(exhaustive_grits(pred, gt), abs=1e-12)

    def test_empty_pred(self):
        pred = g("<table></table>")
        gt = g("<table><tr><td>a</td></tr></table>")
        assert grits_top(pred, gt).value == 0.0
        assert grits_top(pred, pred).value == 1.0

    def test_factored_equals_exhaustive_on_all_small_tilings(self):
        shapes = [(2, 2), (2, 3)]
        grids = []
        for n_rows, n_cols in shapes:
            for rects in tilings(n_rows, n_cols):
                grids.append(tiling_to_grid(n_rows, n_cols, rects))
        assert len(grids) > 10
        for a in grids:
            for b in grids:
                got = grits_top(a, b).value
                want = exhaustive_grits(a, b)
                assert got == pytest.approx(want, abs=1e-9), (
                    [(s.rowspan, s.colspan) for row in a.cells for s in row],
                    [(s.rowspan, s.colspan) for row in b.cells for s in row],
                    got,
                    want,
                )

    def test_symmetry_and_range_on_random_grids(self):
        rng = random.Random(13)
        for _ in range(40):
            a = random_grid(rng, max_rows=4, max_cols=4)
            b = random_grid(rng, max_rows=4, max_cols=4)
            ab = grits_top(a, b).value
            ba = grits_top(b, a).value
            assert 0.0 <= ab <= 1.0
            assert ab == pytest.approx(ba, abs=1e-9)

    def test_self_score_on_random_grids(self):
        rng = random.Random(14)
        for _ in range(60):
            grid = random_grid(rng)
            assert grits_top(grid, grid).value == 1.0
