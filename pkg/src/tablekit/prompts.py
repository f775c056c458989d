"""Prompt templates for every model-facing stage.

The system texts are fixed strings; the user builders substitute the question
list and, where relevant, the serialized table and hints. Rendered prompts
must stay byte-stable for fixed inputs: downstream tests pin them with golden
files, so edit with care.
"""

from __future__ import annotations

import json
from typing import Sequence

TSR_SYSTEM = """You are a vision model that performs TABLE STRUCTURE RECOGNITION (TSR).
Given a document image, you must locate the main tabular region and convert it
into a clean HTML table that encodes the structure of rows, columns, and merged cells.

STRICT OUTPUT FORMAT:
- Output EXACTLY one HTML fragment: a single <table>...</table> element.
- Allowed tags: <table>, <thead>, <tbody>, <tr>, <td>.
- Allowed attributes: colspan, rowspan (positive integers).
- Forbidden: <th>, <caption>, <b>, <i>, <strong>, <em>, <span>, <div>, CSS classes,
  styles, IDs, HTML comments, or any text outside the <table> element.
- DO NOT wrap the table in <html> or <body>.
- DO NOT use ``` fences or language names (like ```html).

STRUCTURAL RULES:
- If the first visual row is a single cell spanning the entire table width (a title/banner),
  IGNORE that row and start from the true column header row.
- Put header row(s) inside <thead>; put all remaining rows inside <tbody>.
- Use one <td> per cell; use colspan/rowspan to represent merged cells so that the grid
  matches the visual layout of the table.
- Preserve the original row and column order. Do NOT reorder columns or rows.
- If there is clearly NO table, output: <table></table>
- If there is multiple tables, output only the first one.

CONTENT RULES:
- Inside each <td>, transcribe the cell text as printed (including accents and punctuation).
- Trim leading and trailing spaces inside cells.
- Keep empty cells as <td></td> when they visually exist, to preserve structure.
- Never invent rows or columns not supported by the image."""

TSR_USER = """Identify the main table in the image and return ONLY its structure and cell contents
as a single HTML <table> that follows the strict rules given above."""

QA_SYSTEM = """You answer questions about a table in a document image.
The image contains a main tabular region. You must read the table and answer
each question precisely.

REQUIREMENTS:
- Base your answers only on the table in the image.
- Perform any arithmetic or aggregation that is needed.
- Answer concisely: no explanations, no reasoning steps.
- You MUST return a single JSON object with the following schema:
  {"answers": ["answer_for_question_1", "answer_for_question_2", ...]}
- The list must have EXACTLY as many answers as there are questions.
- Do NOT add commentary, natural language sentences, or Markdown fences."""

ROUTE_SYSTEM = """You classify table QA questions.
Choose EXACTLY ONE category label per question.
Return ONLY valid JSON with schema:
{"categories": ["label_for_q1", "label_for_q2", ...]}
No extra text."""

PLAN_SYSTEM = """You write executable programs to answer questions about a table.
You will be given TABLE_JSON (headers + rows with row_role).
Return ONLY valid JSON.

IMPORTANT RULES:
- Use ONLY ops from the DSL list below.
- Use ONLY header strings that appear EXACTLY in TABLE_JSON.headers.
- Put context ops FIRST (EXCLUDE_ROLES / KEEP_ROLES / FILTER_EQ / SORT), then terminal ops.
- For non-total computations, exclude totals: EXCLUDE_ROLES(["total","subtotal"]).
- For TOTAL questions, use KEEP_ROLES(["total","subtotal"]) and then KTH_ROW.
- For ARGMAX returning a column, use return="col:<header>".
- Return ONLY JSON (no markdown, no explanation).

DSL ops:
- EXCLUDE_ROLES: {"op":"EXCLUDE_ROLES","roles":[...]}
- KEEP_ROLES:    {"op":"KEEP_ROLES","roles":[...]}
- FILTER_EQ:     {"op":"FILTER_EQ","col":"<header>","value":"<string>"}
- SORT:          {"op":"SORT","col":"<header>","order":"asc|desc","numeric":true|false}
- LOOKUP:        {"op":"LOOKUP","key_col":"<header>","key_value":"<string>",
"target_col":"<header>","mode":"first|all","empty_to_na":true|false}
- KTH_ROW:       {"op":"KTH_ROW","k":1|"last","target_col":"<header>","data_only":true|false}
- SUM:           {"op":"SUM","col":"<header>"}
- COUNT:         {"op":"COUNT","col":"<header>","value":"<string>"}
- ARGMAX:        {"op":"ARGMAX","col":"<header>","return":"row_index"|"col:<header>","all_ties":true|false}
- DIFF:          {"op":"DIFF","a":{...},"b":{...}}

Return ONLY JSON with schema: {"programs":[{"qid":1,"ops":[...]}, ...]}."""

REPAIR_SYSTEM = """You repair an invalid DSL program for a table question.
Return ONLY valid JSON: {"qid":<int>,"ops":[...]}
No extra text."""

ROUTE_CATEGORIES_BLOCK = """lookup_by_header, lookup_list_by_header, kth_row_value, aggregation_sum,
aggregation_sum_conditional, comparison_argmax, comparison_argmax_rows,
count_equals, consistency_diff_total, total_row_value, na_from_empty, other"""


def question_lines(questions: Sequence[str]) -> str:
    return "\n".join(f"Q{i}: {q}" for i, q in enumerate(questions, start=1))


def qa_user(questions: Sequence[str]) -> str:
    return (
        f"You will be asked {len(questions)} questions about the table in the image.\n"
        "Answer ALL questions and return ONLY valid JSON with this exact schema:\n"
        '{"answers": ["answer_for_question_1", "answer_for_question_2", "..."]}\n'
        "The answers array MUST be in the same order as the questions.\n"
        "\n"
        "Questions:\n"
        f"{question_lines(questions)}\n"
        "\n"
        "Return only a JSON object with an 'answers' array. No extra text,\n"
        "no Markdown, no explanations."
    )


def route_user(questions: Sequence[str]) -> str:
    return (
        "Allowed categories:\n"
        f"{ROUTE_CATEGORIES_BLOCK}\n"
        "\n"
        "Questions:\n"
        f"{question_lines(questions)}\n"
        "\n"
        'Return ONLY JSON: {"categories": [..]} (same order).'
    )


def plan_user(table_json: str, hints: Sequence[str], questions: Sequence[str]) -> str:
    hints_json = json.dumps(list(hints), ensure_ascii=False)
    return (
        "TABLE_JSON:\n"
        f"{table_json}\n"
        "\n"
        "CATEGORY_HINTS:\n"
        f"{hints_json}\n"
        "\n"
        "Questions:\n"
        f"{question_lines(questions)}\n"
        "\n"
        'Return ONLY JSON: {"programs":[...]} (qid is 1-based).'
    )


def repair_user(table_json: str, qid: int, category: str, question: str, error: str) -> str:
    return (
        "TABLE_JSON:\n"
        f"{table_json}\n"
        "\n"
        f"QID: {qid}\n"
        f"CATEGORY: {category}\n"
        f"QUESTION: {question}\n"
        f"ERROR: {error}\n"
        "\n"
        'Return ONLY JSON: {"qid":..., "ops":[...]}'
    )
