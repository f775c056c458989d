"""The constrained table DSL: parsing, validation, normalization, execution.

A program is a list of context ops (role filters, equality filters, sorts)
followed by exactly one terminal op. Execution is a pure function of
(program, table, format policy): selection works over body-row indices,
arithmetic goes through the exact-decimal Amount type, and every run yields
a step-by-step trace naming the rows and cells it relied on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .gateway import extract_json
from .grid import DATA, SUBTOTAL, TOTAL, TableJson, strip_accents
from .money import COMMA_DECIMAL, Amount, detect_convention, format_amount, parse_amount

__all__ = [
    "CONTEXT_OPS",
    "TERMINAL_OPS",
    "STAR_CATEGORIES",
    "ExecError",
    "ExecTrace",
    "ExecResult",
    "FormatPolicy",
    "Program",
    "NoJsonObject",
    "parse_programs",
    "parse_program_object",
    "validate",
    "normalize",
    "execute",
    "is_grounded",
]

CONTEXT_OPS = ("EXCLUDE_ROLES", "KEEP_ROLES", "FILTER_EQ", "SORT")
TERMINAL_OPS = ("LOOKUP", "KTH_ROW", "SUM", "COUNT", "ARGMAX", "DIFF")

# Categories whose programs implicitly exclude total/subtotal rows.
STAR_CATEGORIES = frozenset(
    ["aggregation_sum", "aggregation_sum_conditional", "count_equals", "consistency_diff_total"]
)

UNKNOWN_OP = "UnknownOp"
UNKNOWN_HEADER = "UnknownHeader"
BAD_SHAPE = "BadShape"
EMPTY_SELECTION = "EmptySelection"
NO_NUMERIC_VALUES = "NoNumericValues"
NON_NUMERIC_OPERAND = "NonNumericOperand"


class NoJsonObject(ValueError):
    """Planner output contained no parseable JSON object at all."""


@dataclass(frozen=True)
class ExecError:
    kind: str
    message: str


@dataclass
class TraceStep:
    op: dict
    rows_in: list[int]
    rows_out: list[int]
    note: str = ""

    def to_obj(self) -> dict:
        return {"op": self.op, "rows_in": self.rows_in, "rows_out": self.rows_out, "note": self.note}


@dataclass
class ExecTrace:
    steps: list[TraceStep] = field(default_factory=list)
    contributing_cells: list[tuple[int, str]] = field(default_factory=list)
    outcome: Optional[dict] = None

    def to_obj(self) -> dict:
        return {
            "steps": [s.to_obj() for s in self.steps],
            "contributing_cells": [[r, h] for r, h in self.contributing_cells],
            "outcome": self.outcome,
        }


@dataclass(frozen=True)
class ExecResult:
    answer: str
    trace: ExecTrace


@dataclass(frozen=True)
class FormatPolicy:
    """How numeric answers are rendered. convention=None means "match the
    majority convention of the table's own cells"."""

    convention: Optional[str] = None
    min_scale: int = 0


@dataclass(frozen=True)
class Program:
    qid: int
    ops: tuple[dict, ...]
    parse_error: Optional[ExecError] = None


def parse_programs(json_text: str) -> list[Program]:
    """Parse raw planner output into Programs.

    The reply may wrap the JSON in fences or prose; the first balanced object
    is used. Per-program problems (unknown ops, broken shapes) are bound to
    the individual Program so one bad entry cannot sink its siblings.
    """
    value = extract_json(json_text)
    if not isinstance(value, (dict, list)):
        raise NoJsonObject("no JSON object in planner output")
    if isinstance(value, dict):
        entries = value.get("programs", None)
        if entries is None:
            # A bare {"qid":..,"ops":[..]} object is accepted for symmetry
            # with the repair reply format.
            entries = [value] if "ops" in value else []
    else:
        entries = value
    if not isinstance(entries, list):
        return []
    programs = []
    for entry in entries:
        if not isinstance(entry, dict):
            continue
        qid = entry.get("qid")
        if not isinstance(qid, int):
            continue
        programs.append(parse_program_object(entry))
    return programs


def parse_program_object(entry: dict) -> Program:
    """Schema-check one {"qid", "ops"} object into a Program."""
    qid = entry.get("qid")
    qid = qid if isinstance(qid, int) else 0
    raw_ops = entry.get("ops")
    if not isinstance(raw_ops, list):
        return Program(
            qid=qid, ops=(), parse_error=ExecError(BAD_SHAPE, "ops must be a list")
        )
    ops: list[dict] = []
    error: Optional[ExecError] = None
    for raw in raw_ops:
        if not isinstance(raw, dict) or not isinstance(raw.get("op"), str):
            error = error or ExecError(BAD_SHAPE, "every op must be an object with an 'op' name")
            continue
        name = raw["op"]
        if name not in CONTEXT_OPS and name not in TERMINAL_OPS:
            error = error or ExecError(UNKNOWN_OP, f"unknown op {name!r}")
            continue
        ops.append(raw)
    return Program(qid=qid, ops=tuple(ops), parse_error=error)


def _is_context(op: dict) -> bool:
    return op.get("op") in CONTEXT_OPS


def _is_terminal(op: dict) -> bool:
    return op.get("op") in TERMINAL_OPS


def validate(p: Program, t: TableJson) -> Optional[ExecError]:
    """Check shape and header membership; None means valid."""
    if p.parse_error is not None:
        return p.parse_error
    if not p.ops:
        return ExecError(BAD_SHAPE, "empty program")
    for op in p.ops[:-1]:
        if _is_terminal(op):
            return ExecError(BAD_SHAPE, f"terminal op {op['op']} before the end of the program")
    last = p.ops[-1]
    if not _is_terminal(last):
        return ExecError(BAD_SHAPE, f"last op {last.get('op')!r} is not a terminal op")
    for op in p.ops:
        err = _validate_op(op, t, allow_diff=True)
        if err is not None:
            return err
    return None


def _validate_op(op: dict, t: TableJson, allow_diff: bool) -> Optional[ExecError]:
    name = op["op"]
    headers = set(t.headers)

    def check_header(key: str) -> Optional[ExecError]:
        value = op.get(key)
        if not isinstance(value, str):
            return ExecError(BAD_SHAPE, f"{name} needs a string {key!r}")
        if value not in headers:
            return ExecError(UNKNOWN_HEADER, f"{name}: header {value!r} not in table headers")
        return None

    if name in ("EXCLUDE_ROLES", "KEEP_ROLES"):
        roles = op.get("roles")
        if not isinstance(roles, list) or not all(isinstance(r, str) for r in roles):
            return ExecError(BAD_SHAPE, f"{name} needs a list of role strings")
        return None
    if name == "FILTER_EQ":
        if not isinstance(op.get("value"), str):
            return ExecError(BAD_SHAPE, "FILTER_EQ needs a string 'value'")
        return check_header("col")
    if name == "SORT":
        if op.get("order", "asc") not in ("asc", "desc"):
            return ExecError(BAD_SHAPE, f"SORT: order {op.get('order')!r} not asc|desc")
        return check_header("col")
    if name == "LOOKUP":
        if op.get("mode", "first") not in ("first", "all"):
            return ExecError(BAD_SHAPE, f"LOOKUP: mode {op.get('mode')!r} not first|all")
        if not isinstance(op.get("key_value"), str):
            return ExecError(BAD_SHAPE, "LOOKUP needs a string 'key_value'")
        return check_header("key_col") or check_header("target_col")
    if name == "KTH_ROW":
        k = op.get("k")
        if not (k == "last" or (isinstance(k, int) and not isinstance(k, bool) and k >= 1)):
            return ExecError(BAD_SHAPE, f"KTH_ROW: k must be a 1-based index or \"last\", got {k!r}")
        return check_header("target_col")
    if name == "SUM":
        return check_header("col")
    if name == "COUNT":
        value = op.get("value")
        if value is not None and not isinstance(value, str):
            return ExecError(BAD_SHAPE, "COUNT 'value' must be a string when present")
        return check_header("col")
    if name == "ARGMAX":
        ret = op.get("return", "row_index")
        if not isinstance(ret, str) or (ret != "row_index" and not ret.startswith("col:")):
            return ExecError(BAD_SHAPE, f"ARGMAX: return {ret!r} not row_index|col:<header>")
        if ret.startswith("col:") and ret[4:] not in headers:
            return ExecError(UNKNOWN_HEADER, f"ARGMAX: return header {ret[4:]!r} not in table headers")
        return check_header("col")
    if name == "DIFF":
        if not allow_diff:
            return ExecError(BAD_SHAPE, "DIFF cannot nest inside DIFF")
        for side in ("a", "b"):
            sub = op.get(side)
            if not isinstance(sub, dict) or not isinstance(sub.get("op"), str):
                return ExecError(BAD_SHAPE, f"DIFF side {side!r} must be an op object")
            sub_name = sub["op"]
            if sub_name not in ("SUM", "COUNT", "KTH_ROW", "LOOKUP"):
                return ExecError(
                    BAD_SHAPE, f"DIFF side {side!r} op {sub_name} is not an allowed terminal"
                )
            if sub_name == "LOOKUP" and sub.get("mode", "first") != "first":
                return ExecError(BAD_SHAPE, "DIFF LOOKUP sides must use mode=first")
            sub_err = _validate_op(sub, t, allow_diff=False)
            if sub_err is not None:
                return sub_err
        return None
    return ExecError(UNKNOWN_OP, f"unknown op {name!r}")


def normalize(p: Program, category: str) -> Program:
    """Apply the category-dependent rewrite rules.

    Aggregation-family categories get an implicit exclusion of total and
    subtotal rows unless the program already manages roles itself; the
    total-row category gets the dual implicit KEEP. DIFF needs no special
    casing: its sub-ops share the (already rewritten) outer context.
    """
    has_role_op = any(op.get("op") in ("EXCLUDE_ROLES", "KEEP_ROLES") for op in p.ops)
    if category in STAR_CATEGORIES and not has_role_op:
        new_op = {"op": "EXCLUDE_ROLES", "roles": [TOTAL, SUBTOTAL]}
        return Program(qid=p.qid, ops=(new_op, *p.ops), parse_error=p.parse_error)
    has_keep = any(op.get("op") == "KEEP_ROLES" for op in p.ops)
    if category == "total_row_value" and not has_keep:
        new_op = {"op": "KEEP_ROLES", "roles": [TOTAL, SUBTOTAL]}
        return Program(qid=p.qid, ops=(new_op, *p.ops), parse_error=p.parse_error)
    return p


def _norm_text(text: str) -> str:
    return " ".join(strip_accents(text).casefold().split())


class _Fail(Exception):
    def __init__(self, error: ExecError):
        super().__init__(error.message)
        self.error = error


def execute(
    p: Program, t: TableJson, fmt: FormatPolicy = FormatPolicy()
) -> Union[ExecResult, ExecError]:
    """Run a validated, normalized program. Never raises on table content."""
    convention = fmt.convention
    if convention is None:
        cells = [cell for row in t.rows for cell in row["cells"]]
        convention = detect_convention(cells) if cells else COMMA_DECIMAL

    rows = {row["index"]: row for row in t.rows}
    working = [row["index"] for row in t.rows]
    col_of = {h: i for i, h in enumerate(t.headers)}
    trace = ExecTrace()

    def cell(idx: int, header: str) -> str:
        return rows[idx]["cells"][col_of[header]]

    try:
        for op in p.ops[:-1]:
            working = _apply_context(op, working, rows, cell, trace)
        answer = _apply_terminal(p.ops[-1], working, rows, cell, trace, convention, fmt.min_scale)
    except _Fail as fail:
        return fail.error
    except KeyError as exc:  # unknown header reached execution unvalidated
        return ExecError(UNKNOWN_HEADER, f"header {exc.args[0]!r} not in table headers")
    trace.outcome = {"value": answer}
    return ExecResult(answer=answer, trace=trace)


def _apply_context(op, working, rows, cell, trace) -> list[int]:
    name = op["op"]
    rows_in = list(working)
    if name == "EXCLUDE_ROLES":
        roles = set(op["roles"])
        out = [i for i in working if rows[i]["role"] not in roles]
        note = f"excluded roles {sorted(roles)}: {len(rows_in)} -> {len(out)} rows"
    elif name == "KEEP_ROLES":
        roles = set(op["roles"])
        out = [i for i in working if rows[i]["role"] in roles]
        note = f"kept roles {sorted(roles)}: {len(rows_in)} -> {len(out)} rows"
    elif name == "FILTER_EQ":
        wanted = _norm_text(op["value"])
        out = [i for i in working if _norm_text(cell(i, op["col"])) == wanted]
        note = f"filtered {op['col']!r} == {op['value']!r}: {len(rows_in)} -> {len(out)} rows"
    elif name == "SORT":
        order = op.get("order", "asc")
        reverse = order == "desc"
        if op.get("numeric", False):
            parsed = [(i, parse_amount(cell(i, op["col"]))) for i in working]
            numeric = [(i, a) for i, a in parsed if a is not None]
            unparseable = [i for i, a in parsed if a is None]
            numeric.sort(key=lambda pair: pair[1].value, reverse=reverse)
            out = [i for i, _ in numeric] + unparseable
            note = f"sorted {op['col']!r} {order} numerically ({len(unparseable)} unparseable last)"
        else:
            out = sorted(working, key=lambda i: _norm_text(cell(i, op["col"])), reverse=reverse)
            note = f"sorted {op['col']!r} {order} as text"
    else:  # unreachable after validate
        raise _Fail(ExecError(UNKNOWN_OP, f"unknown context op {name!r}"))
    trace.steps.append(TraceStep(op=op, rows_in=rows_in, rows_out=list(out), note=note))
    return out


def _apply_terminal(op, working, rows, cell, trace, convention, min_scale) -> str:
    name = op["op"]
    rows_in = list(working)

    # COUNT over nothing is a legitimate zero; everything else needs rows.
    if not working and name != "COUNT":
        raise _Fail(ExecError(EMPTY_SELECTION, f"{name}: working set is empty at the terminal"))

    if name == "DIFF":
        a_value, a_rows, a_cells, a_note = _numeric_sub_result(op["a"], working, rows, cell)
        b_value, b_rows, b_cells, b_note = _numeric_sub_result(op["b"], working, rows, cell)
        value = a_value - b_value
        contributing = a_cells + [c for c in b_cells if c not in a_cells]
        out_rows = sorted(set(a_rows) | set(b_rows))
        trace.steps.append(
            TraceStep(op=op, rows_in=rows_in, rows_out=out_rows, note=f"a: {a_note}; b: {b_note}")
        )
        trace.contributing_cells.extend(contributing)
        return format_amount(value, convention, min_scale)

    answer, out_rows, contributing, note = _simple_terminal(
        op, working, rows, cell, convention, min_scale
    )
    trace.steps.append(TraceStep(op=op, rows_in=rows_in, rows_out=out_rows, note=note))
    trace.contributing_cells.extend(contributing)
    return answer


def _simple_terminal(op, working, rows, cell, convention, min_scale):
    """Evaluate a non-DIFF terminal; returns (answer, rows_out, cells, note)."""
    name = op["op"]

    if name == "LOOKUP":
        wanted = _norm_text(op["key_value"])
        matches = [i for i in working if _norm_text(cell(i, op["key_col"])) == wanted]
        if not matches:
            raise _Fail(
                ExecError(
                    EMPTY_SELECTION,
                    f"LOOKUP: no row where {op['key_col']!r} equals {op['key_value']!r}",
                )
            )
        if op.get("mode", "first") == "first":
            matches = matches[:1]
        empty_to_na = bool(op.get("empty_to_na", False))
        values = [cell(i, op["target_col"]) for i in matches]
        if empty_to_na:
            values = [v if v != "" else "N/A" for v in values]
        answer = "; ".join(values)
        cells = [(i, op["target_col"]) for i in matches]
        return answer, matches, cells, f"{len(matches)} match(es) for {op['key_value']!r}"

    if name == "KTH_ROW":
        pool = [i for i in working if rows[i]["role"] == DATA] if op.get("data_only") else list(working)
        if not pool:
            raise _Fail(ExecError(EMPTY_SELECTION, "KTH_ROW: working set empty"))
        k = op["k"]
        if k == "last":
            idx = pool[-1]
        elif k <= len(pool):
            idx = pool[k - 1]
        else:
            raise _Fail(
                ExecError(EMPTY_SELECTION, f"KTH_ROW: k={k} but only {len(pool)} rows available")
            )
        answer = cell(idx, op["target_col"])
        return answer, [idx], [(idx, op["target_col"])], f"picked row {idx}"

    if name == "SUM":
        total = Amount.from_int(0)
        used: list[int] = []
        skipped: list[int] = []
        for i in working:
            a = parse_amount(cell(i, op["col"]))
            if a is None:
                skipped.append(i)
            else:
                total = total + a
                used.append(i)
        if not used:
            raise _Fail(
                ExecError(NO_NUMERIC_VALUES, f"SUM: no parseable values in column {op['col']!r}")
            )
        note = f"summed {len(used)} cells in {op['col']!r}"
        if skipped:
            note += f"; skipped unparseable rows {skipped}"
        answer = format_amount(total, convention, min_scale)
        return answer, used, [(i, op["col"]) for i in used], note

    if name == "COUNT":
        value = op.get("value")
        if value is None:
            matched = list(working)
            note = f"counted {len(matched)} rows in context"
        else:
            wanted = _norm_text(value)
            matched = [i for i in working if _norm_text(cell(i, op["col"])) == wanted]
            note = f"counted {len(matched)} rows where {op['col']!r} == {value!r}"
        cells = [(i, op["col"]) for i in matched]
        return str(len(matched)), matched, cells, note

    if name == "ARGMAX":
        parsed = [(i, parse_amount(cell(i, op["col"]))) for i in working]
        numeric = [(i, a) for i, a in parsed if a is not None]
        if not numeric:
            raise _Fail(
                ExecError(NO_NUMERIC_VALUES, f"ARGMAX: no parseable values in column {op['col']!r}")
            )
        best = max(a.value for _, a in numeric)
        winners = [i for i, a in numeric if a.value == best]
        if not op.get("all_ties", False):
            winners = winners[:1]
        ret = op.get("return", "row_index")
        if ret == "row_index":
            answer = "; ".join(str(i) for i in winners)
            cells = [(i, op["col"]) for i in winners]
        else:
            target = ret[4:]
            answer = "; ".join(cell(i, target) for i in winners)
            cells = [(i, op["col"]) for i in winners] + [(i, target) for i in winners]
        return answer, winners, cells, f"max {op['col']!r} at rows {winners}"

    raise _Fail(ExecError(UNKNOWN_OP, f"unknown terminal op {name!r}"))


def _numeric_sub_result(sub, working, rows, cell):
    """Evaluate a DIFF side over the shared working set, as an Amount."""
    name = sub["op"]
    if name == "COUNT":
        answer, out_rows, cells, note = _simple_terminal(sub, working, rows, cell, COMMA_DECIMAL, 0)
        return Amount.from_int(int(answer)), out_rows, cells, f"COUNT {note}"
    if name == "SUM":
        total = Amount.from_int(0)
        used = []
        for i in working:
            a = parse_amount(cell(i, sub["col"]))
            if a is not None:
                total = total + a
                used.append(i)
        if not used:
            raise _Fail(
                ExecError(NO_NUMERIC_VALUES, f"SUM: no parseable values in column {sub['col']!r}")
            )
        return total, used, [(i, sub["col"]) for i in used], f"SUM over {len(used)} cells"
    # KTH_ROW and LOOKUP(first) return one cell that must parse as a number.
    answer, out_rows, cells, note = _simple_terminal(sub, working, rows, cell, COMMA_DECIMAL, 0)
    amount = parse_amount(answer)
    if amount is None:
        raise _Fail(
            ExecError(
                NON_NUMERIC_OPERAND, f"{name}: value {answer!r} is not numeric for DIFF"
            )
        )
    return amount, out_rows, cells, f"{name} -> {answer}"


def is_grounded(result: ExecResult) -> bool:
    """Non-empty answer, and for numeric terminals at least one contributing
    cell that actually exists in the traced table rows."""
    if result.answer == "":
        return False
    if not result.trace.steps:
        return False
    terminal = result.trace.steps[-1].op.get("op")
    if terminal in ("SUM", "COUNT", "ARGMAX", "DIFF"):
        if not result.trace.contributing_cells:
            return False
    rows_seen = set(result.trace.steps[0].rows_in) if result.trace.steps else set()
    for row_idx, _header in result.trace.contributing_cells:
        if row_idx not in rows_seen:
            return False
    return True
