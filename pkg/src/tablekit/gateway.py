"""Model access: request assembly, transport, and reply post-processing.

Two gateway kinds speak the same ChatRequest interface. HttpGateway posts to
a chat-completions endpoint with retry/backoff; ScriptedGateway replays a
canned transcript so every pipeline path is testable offline. Both apply the
stop-string truncation before returning text.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import prompts

__all__ = [
    "STAGES",
    "MAX_NEW_TOKENS",
    "STOP_STRINGS",
    "Decoding",
    "ChatRequest",
    "MissingSlot",
    "ModelUnavailable",
    "ScriptExhausted",
    "ScriptEntry",
    "ScriptedGateway",
    "HttpGateway",
    "build_request",
    "truncate_at_stops",
    "extract_json",
]

STAGES = ("tsr", "direct_qa", "route", "plan", "repair")

MAX_NEW_TOKENS = {"tsr": 4096, "direct_qa": 1024, "route": 1024, "plan": 1024, "repair": 512}

STOP_STRINGS = ("```", "<|im end|>", "<|eot id|>", "<|end|>", "</s>")


class MissingSlot(ValueError):
    """A stage payload lacked a required field."""


class ModelUnavailable(RuntimeError):
    """Transport kept failing after the configured retries."""


class ScriptExhausted(RuntimeError):
    """No unconsumed script entry matched the request."""


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    top_p: float = 1.0
    repetition_penalty: float = 1.1
    max_new_tokens: int = 1024


@dataclass(frozen=True)
class ChatRequest:
    stage: str
    system: str
    user: str
    image: Optional[bytes] = None
    # Oracle mode swaps the image slot for ground-truth markup; it travels
    # beside the text so the rendered templates stay byte-stable.
    table_html: Optional[str] = None
    decoding: Decoding = Decoding()
    stop_strings: tuple[str, ...] = STOP_STRINGS

    def text(self) -> str:
        """All textual content of the request, for script matching."""
        parts = [self.system, self.user]
        if self.table_html is not None:
            parts.append(self.table_html)
        return "\n".join(parts)


def build_request(stage: str, payload: dict, merge_system: bool = False) -> ChatRequest:
    """Render the stage template over its payload.

    Payload keys per stage:
      tsr: image?
      direct_qa: questions, image?, table_html?
      route: questions
      plan: table_json, hints, questions
      repair: table_json, qid, category, question, error
    """
    if stage not in STAGES:
        raise MissingSlot(f"unknown stage {stage!r}")

    def need(key: str):
        if key not in payload or payload[key] is None:
            raise MissingSlot(f"stage {stage!r} payload missing {key!r}")
        return payload[key]

    image = payload.get("image")
    table_html = payload.get("table_html")
    if stage == "tsr":
        system, user = prompts.TSR_SYSTEM, prompts.TSR_USER
    elif stage == "direct_qa":
        system, user = prompts.QA_SYSTEM, prompts.qa_user(need("questions"))
    elif stage == "route":
        system, user = prompts.ROUTE_SYSTEM, prompts.route_user(need("questions"))
    elif stage == "plan":
        system = prompts.PLAN_SYSTEM
        user = prompts.plan_user(need("table_json"), need("hints"), need("questions"))
    else:
        system = prompts.REPAIR_SYSTEM
        user = prompts.repair_user(
            need("table_json"), need("qid"), need("category"), need("question"), need("error")
        )

    if merge_system:
        user = system + "\n\n" + user
        system = ""
    decoding = Decoding(max_new_tokens=MAX_NEW_TOKENS[stage])
    return ChatRequest(
        stage=stage, system=system, user=user, image=image, table_html=table_html, decoding=decoding
    )


def truncate_at_stops(text: str, stops: Sequence[str] = STOP_STRINGS) -> str:
    """Client-side safety truncation.

    Plain stop strings cut at their first occurrence. The fence stop is
    special-cased: a reply that opens a fence and closes it is cut after the
    pair, so fenced JSON payloads survive for extraction; a lone fence cuts
    where it starts.
    """
    cut = len(text)
    for stop in stops:
        if stop == "```":
            first = text.find("```")
            if first < 0:
                continue
            second = text.find("```", first + 3)
            pos = second + 3 if second >= 0 else first
        else:
            pos = text.find(stop)
            if pos < 0:
                continue
        cut = min(cut, pos)
    return text[:cut]


_FENCE_OPEN = ("```json", "```JSON", "```")


def _strip_fences(text: str) -> str:
    out = text
    for marker in _FENCE_OPEN:
        out = out.replace(marker, "\n")
    return out


def extract_json(reply: str):
    """Best-effort JSON recovery from a model reply. Never raises.

    Strips code fences, then scans left to right for a balanced top-level
    object or array; the first candidate that parses wins. Returns None when
    nothing parses.
    """
    if not isinstance(reply, str):
        return None
    text = _strip_fences(reply)
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch not in "{[":
            continue
        try:
            value, _end = decoder.raw_decode(text, i)
        except (ValueError, RecursionError):
            continue
        if isinstance(value, (dict, list)):
            return value
    return None


@dataclass
class ScriptEntry:
    stage: str
    reply: str
    match: Optional[str] = None
    consumed: bool = field(default=False, compare=False)


class ScriptedGateway:
    """Replays an ordered transcript: the first unconsumed entry whose stage
    matches (and whose match substring, if any, occurs in the request text)
    answers the call. Fully offline and deterministic."""

    def __init__(self, entries: Sequence[ScriptEntry]):
        self.entries = list(entries)
        self.calls: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path) -> "ScriptedGateway":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        entries = []
        for item in raw:
            reply = item["reply"]
            if not isinstance(reply, str):
                reply = json.dumps(reply, ensure_ascii=False)
            entries.append(ScriptEntry(stage=item["stage"], reply=reply, match=item.get("match")))
        return cls(entries)

    def call(self, req: ChatRequest) -> str:
        self.calls.append(req)
        text = req.text()
        for entry in self.entries:
            if entry.consumed or entry.stage != req.stage:
                continue
            if entry.match is not None and entry.match not in text:
                continue
            entry.consumed = True
            return truncate_at_stops(entry.reply, req.stop_strings)
        raise ScriptExhausted(f"no scripted reply left for stage {req.stage!r}")


class HttpGateway:
    """Chat-completions over HTTP with bounded retries and backoff."""

    def __init__(
        self,
        url: str,
        model: str = "default",
        auth_env: Optional[str] = None,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
        extra_stops: Sequence[str] = (),
    ):
        self.url = url
        self.model = model
        self.auth_env = auth_env
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.extra_stops = tuple(extra_stops)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            import os

            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _body(self, req: ChatRequest) -> dict:
        user_content: list = []
        if req.image is not None:
            import base64

            b64 = base64.b64encode(req.image).decode("ascii")
            user_content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
            )
        if req.table_html is not None:
            user_content.append({"type": "text", "text": req.table_html})
        user_content.append({"type": "text", "text": req.user})
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": user_content})
        stops = list(req.stop_strings) + list(self.extra_stops)
        return {
            "model": self.model,
            "messages": messages,
            "temperature": req.decoding.temperature,
            "top_p": req.decoding.top_p,
            "repetition_penalty": req.decoding.repetition_penalty,
            "max_tokens": req.decoding.max_new_tokens,
            "stop": stops,
        }

    def call(self, req: ChatRequest) -> str:
        import requests

        body = self._body(req)
        last_error: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    self.url, json=body, headers=self._headers(), timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = RuntimeError(f"server returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ModelUnavailable(f"endpoint rejected request: {resp.status_code}")
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ModelUnavailable(f"malformed endpoint reply: {exc}") from exc
            if not isinstance(text, str):
                raise ModelUnavailable("endpoint reply content is not text")
            return truncate_at_stops(text, tuple(req.stop_strings) + self.extra_stops)
        raise ModelUnavailable(f"gave up after {self.retries} retries: {last_error}")
