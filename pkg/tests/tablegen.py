"""Seeded random table layouts shared by grid and metric tests.

These produce arbitrary rectangular span tilings (with optional header rows
and French-ish texts), independent of the semantic corpus generator shipped
in the package. Keeping this here lets property tests stress structural
edge cases the corpus generator deliberately avoids.
"""

from __future__ import annotations

import random

from tablekit.grid import CellSlot, TableGrid

WORDS = [
    "Acte",
    "Honoraires",
    "Détartrage",
    "Extraction",
    "Couronne",
    "Sous-total",
    "Total",
    "90,00",
    "40,00",
    "50,00",
    "1 234,56",
    "",
    "N/A",
    "Reste à charge",
    "x",
]


def random_grid(
    rng: random.Random,
    max_rows: int = 6,
    max_cols: int = 6,
    span_probability: float = 0.35,
    allow_empty: bool = False,
) -> TableGrid:
    n_rows = rng.randint(0 if allow_empty else 1, max_rows)
    n_cols = rng.randint(1, max_cols) if n_rows else 0
    if n_rows == 0:
        return TableGrid(n_rows=0, n_cols=0, cells=(), header_row_count=0)
    header_row_count = rng.randint(0, min(2, n_rows))

    taken = [[False] * n_cols for _ in range(n_rows)]
    matrix: list[list[CellSlot | None]] = [[None] * n_cols for _ in range(n_rows)]
    for r in range(n_rows):
        for c in range(n_cols):
            if taken[r][c]:
                continue
            rs = cs = 1
            if rng.random() < span_probability:
                # Span must stay on one side of the header/body boundary so
                # the canonical serialization can round-trip it.
                row_limit = header_row_count if r < header_row_count else n_rows
                max_rs = row_limit - r
                max_cs = n_cols - c
                while cs < max_cs and taken[r][c + cs]:
                    break
                rs = rng.randint(1, max(1, min(max_rs, 3)))
                cs = rng.randint(1, max(1, min(max_cs, 3)))
                while cs > 1 and any(taken[r][cc] for cc in range(c, c + cs)):
                    cs -= 1
                while rs > 1 and any(
                    taken[rr][cc] for rr in range(r, r + rs) for cc in range(c, c + cs)
                ):
                    rs -= 1
            text = rng.choice(WORDS)
            matrix[r][c] = CellSlot(text=text, anchor=True, rowspan=rs, colspan=cs)
            for rr in range(r, r + rs):
                for cc in range(c, c + cs):
                    taken[rr][cc] = True
                    if rr == r and cc == c:
                        continue
                    matrix[rr][cc] = CellSlot(
                        text=text if cc == c else "",
                        anchor=False,
                        covered_by=(r, c),
                    )
    grid = TableGrid(
        n_rows=n_rows,
        n_cols=n_cols,
        cells=tuple(tuple(row) for row in matrix),  # type: ignore[arg-type]
        header_row_count=header_row_count,
    )
    grid.check_invariants()
    return grid
