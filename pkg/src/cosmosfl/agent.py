"""Single fault-localisation inference runs against a chat-completions endpoint.

One run is a tool-calling loop: the model either asks for a tool (coverage,
snippet, comments), whose result is appended to the conversation, or gives
a final answer made of ``Answer: <method>`` lines.
"""

from __future__ import annotations

import json
import logging
import re
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any

import httpx

from cosmosfl.fixtures import BugFixture, ToolSpec

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
DEFAULT_MAX_STEPS = 10
DEFAULT_MAX_OUTPUT_TOKENS = 4096

STATUS_OK = "ok"
STATUS_TRUNCATED = "truncated"
STATUS_PARSE_FAILED = "parse-failed"
STATUS_ENDPOINT_ERROR = "endpoint-error"
STATUSES = (STATUS_OK, STATUS_TRUNCATED, STATUS_PARSE_FAILED, STATUS_ENDPOINT_ERROR)

_ANSWER_RE = re.compile(r"^\s*Answer:\s*(\S.*?)\s*$", re.MULTILINE)


class EndpointError(RuntimeError):
    pass


class AnswerParseError(ValueError):
    pass


@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    base_url: str
    model_id: str
    request_timeout: float = 120.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if not self.request_timeout > 0:
            raise ValueError("request_timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: Any  # decoded object, or the raw string when it was not valid JSON


@dataclass(frozen=True)
class Completion:
    content: str | None
    tool_call: ToolCall | None
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float | None = None


@dataclass
class AgentStep:
    index: int
    kind: str  # model-message | tool-call | tool-result | final-answer
    payload: str
    tokens_in: int = 0
    tokens_out: int = 0


@dataclass
class RunRecord:
    bug_id: str
    model: str
    run_index: int
    status: str
    predicted_methods: list[str]
    tokens_in: int
    tokens_out: int
    wall_time_ms: float
    window_start_ms: float
    window_end_ms: float
    energy_j: float | None = None
    power_mean_w: float | None = None
    steps: list[AgentStep] = field(default_factory=list)

    @property
    def tokens_total(self) -> int:
        return self.tokens_in + self.tokens_out

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.bug_id, self.model, self.run_index)

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["predicted_methods"] = sorted(self.predicted_methods)
        return d

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> RunRecord:
        d = dict(d)
        d["steps"] = [AgentStep(**s) for s in d.get("steps", [])]
        if d["status"] not in STATUSES:
            raise ValueError(f"unknown run status {d['status']!r}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Clocks


class WallClock:
    """Milliseconds since ``origin`` on the monotonic clock."""

    def __init__(self, origin: float | None = None) -> None:
        self.origin = time.monotonic() if origin is None else origin

    def now_ms(self) -> float:
        return (time.monotonic() - self.origin) * 1000.0

    def charge(self, latency_ms: float | None) -> None:
        pass


class SimulatedClock:
    """Virtual time advanced only by latencies that a mock endpoint declares."""

    def __init__(self, start_ms: float = 0.0) -> None:
        self._now = float(start_ms)

    def now_ms(self) -> float:
        return self._now

    def charge(self, latency_ms: float | None) -> None:
        if latency_ms:
            self._now += float(latency_ms)


# ---------------------------------------------------------------------------
# Endpoint client


class EndpointClient:
    """Chat-completions client with bounded retries.

    Transport errors, 429 and 5xx responses are retried up to
    ``endpoint.max_retries`` times; anything else fails immediately.
    """

    def __init__(
        self,
        endpoint: ModelEndpoint,
        transport: httpx.BaseTransport | None = None,
        retry_backoff: float = 0.25,
    ) -> None:
        self.endpoint = endpoint
        self.retry_backoff = retry_backoff
        self._http = httpx.Client(
            base_url=endpoint.base_url.rstrip("/"),
            timeout=endpoint.request_timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> EndpointClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def complete(
        self,
        messages: Sequence[Mapping[str, Any]],
        tools: Sequence[Mapping[str, Any]] | None,
        seed: int,
        temperature: float = 0.8,
        max_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
    ) -> Completion:
        body: dict[str, Any] = {
            "model": self.endpoint.model_id,
            "messages": list(messages),
            "temperature": temperature,
            "seed": seed,
            "max_tokens": max_tokens,
        }
        if tools:
            body["tools"] = list(tools)
        last_error = "no attempt made"
        for attempt in range(self.endpoint.max_retries + 1):
            if attempt and self.retry_backoff:
                time.sleep(self.retry_backoff * attempt)
            try:
                resp = self._http.post("/chat/completions", json=body)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise EndpointError(f"{self.endpoint.name}: HTTP {resp.status_code}: {resp.text[:200]}")
            return parse_completion(resp.json())
        raise EndpointError(
            f"{self.endpoint.name}: unreachable after {self.endpoint.max_retries + 1} attempts ({last_error})"
        )


def parse_completion(data: Mapping[str, Any]) -> Completion:
    try:
        message = data["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        raise EndpointError("response has no choices[0].message") from None
    usage = data.get("usage") or {}
    call = None
    tool_calls = message.get("tool_calls") or []
    if tool_calls:
        raw = tool_calls[0]
        fn = raw.get("function", {})
        args = fn.get("arguments", {})
        if isinstance(args, str):
            try:
                args = json.loads(args) if args.strip() else {}
            except json.JSONDecodeError:
                pass
        call = ToolCall(id=raw.get("id", "call_0"), name=fn.get("name", ""), arguments=args)
    return Completion(
        content=message.get("content"),
        tool_call=call,
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
        latency_ms=data.get("x_latency_ms"),
    )


# ---------------------------------------------------------------------------
# Prompt and answer grammar


def load_prompt(version: str = PROMPT_VERSION) -> dict[str, str]:
    text = (resources.files("cosmosfl") / "data" / f"prompt_{version}.txt").read_text(encoding="utf-8")
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = re.fullmatch(r"\[([a-z-]+)\]", line.strip())
        if m:
            current = m.group(1)
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return {k: "\n".join(v).strip() for k, v in sections.items()}


def render_failing_tests(fixture: BugFixture) -> str:
    blocks = []
    for t in fixture.failing_tests:
        blocks.append(f"Test: {t.name}\nMessage: {t.message}\nStack trace:\n{t.stack_trace}")
    return "\n\n".join(blocks)


def initial_messages(fixture: BugFixture, prompt: Mapping[str, str]) -> list[dict[str, Any]]:
    return [
        {"role": "system", "content": prompt["system"]},
        {
            "role": "user",
            "content": prompt["user"].format(bug_id=fixture.bug_id, failing_tests=render_failing_tests(fixture)),
        },
    ]


def parse_final_answer(text: str | None) -> frozenset[str]:
    """Methods named on ``Answer:`` lines; ``Answer: none`` means no suspects."""
    found = _ANSWER_RE.findall(text or "")
    if not found:
        raise AnswerParseError("no 'Answer:' lines found")
    return frozenset(m for m in found if m.lower() != "none")


# ---------------------------------------------------------------------------
# The loop


def _dispatch(tools: Mapping[str, ToolSpec], call: ToolCall, fixture: BugFixture) -> str:
    spec = tools.get(call.name)
    if spec is None:
        return f"error: unknown tool {call.name!r}; available: {', '.join(sorted(tools))}"
    if not isinstance(call.arguments, dict):
        return f"error: arguments for {call.name} must be a JSON object"
    missing = [p for p in spec.parameters if p not in call.arguments]
    if missing:
        return f"error: missing argument(s) for {call.name}: {', '.join(missing)}"
    args = {p: str(call.arguments[p]) for p in spec.parameters}
    return spec.handler(fixture, **args)


def run_inference(
    fixture: BugFixture,
    client: EndpointClient,
    tools: Sequence[ToolSpec],
    max_steps: int = DEFAULT_MAX_STEPS,
    rng_seed: int = 0,
    run_index: int = 0,
    clock: WallClock | SimulatedClock | None = None,
    prompt: Mapping[str, str] | None = None,
    temperature: float = 0.8,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> RunRecord:
    """Drive one tool-calling FL inference and record its outcome and costs.

    After ``max_steps`` tool calls the model is told to answer now, with no
    tools offered. Failures never raise: they are reported through
    ``RunRecord.status`` with an empty prediction.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    clock = clock or WallClock()
    prompt = prompt or load_prompt()
    registry = {t.name: t for t in tools}
    declarations = [t.declaration() for t in tools]
    messages = initial_messages(fixture, prompt)
    steps: list[AgentStep] = []
    tokens_in = tokens_out = 0
    tool_calls = 0
    forced = False
    final_text: str | None = None
    status = STATUS_OK
    start = clock.now_ms()

    def add(kind: str, payload: str, t_in: int = 0, t_out: int = 0) -> None:
        steps.append(AgentStep(len(steps), kind, payload, t_in, t_out))

    while True:
        try:
            completion = client.complete(
                messages,
                None if forced else declarations,
                seed=rng_seed,
                temperature=temperature,
                max_tokens=max_output_tokens,
            )
        except EndpointError as exc:
            log.warning("run %s/%s/%d: %s", fixture.bug_id, client.endpoint.name, run_index, exc)
            status = STATUS_ENDPOINT_ERROR
            break
        clock.charge(completion.latency_ms)
        tokens_in += completion.prompt_tokens
        tokens_out += completion.completion_tokens
        t_in, t_out = completion.prompt_tokens, completion.completion_tokens
        call = completion.tool_call

        if call is not None and not forced:
            add("tool-call", json.dumps({"name": call.name, "arguments": call.arguments}, sort_keys=True), t_in, t_out)
            result = _dispatch(registry, call, fixture)
            add("tool-result", result)
            args = call.arguments if isinstance(call.arguments, str) else json.dumps(call.arguments, sort_keys=True)
            messages.append(
                {
                    "role": "assistant",
                    "content": completion.content,
                    "tool_calls": [{"id": call.id, "type": "function", "function": {"name": call.name, "arguments": args}}],
                }
            )
            messages.append({"role": "tool", "tool_call_id": call.id, "content": result})
            tool_calls += 1
            if tokens_out >= max_output_tokens:
                status = STATUS_TRUNCATED
                break
            if tool_calls >= max_steps:
                forced = True
                messages.append({"role": "user", "content": prompt["answer-now"]})
            continue

        if call is not None:
            # Still asking for tools after the forced-answer turn.
            add("model-message", completion.content or "", t_in, t_out)
            status = STATUS_TRUNCATED
            break
        final_text = completion.content or ""
        add("final-answer", final_text, t_in, t_out)
        break

    predicted: frozenset[str] = frozenset()
    if status == STATUS_OK:
        try:
            predicted = parse_final_answer(final_text)
        except AnswerParseError:
            status = STATUS_TRUNCATED if forced else STATUS_PARSE_FAILED
    end = clock.now_ms()
    return RunRecord(
        bug_id=fixture.bug_id,
        model=client.endpoint.name,
        run_index=run_index,
        status=status,
        predicted_methods=sorted(predicted),
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        wall_time_ms=end - start,
        window_start_ms=start,
        window_end_ms=end,
        steps=steps,
    )


def repeat_runs(
    fixture: BugFixture,
    client: EndpointClient,
    repetitions: int,
    base_seed: int,
    tools: Sequence[ToolSpec],
    clock_for: Callable[[int], WallClock | SimulatedClock] | None = None,
    **kwargs: Any,
) -> list[RunRecord]:
    """``repetitions`` independent runs; run ``i`` uses seed ``base_seed + i``."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    records = []
    for i in range(repetitions):
        clock = clock_for(i) if clock_for else None
        records.append(
            run_inference(fixture, client, tools, rng_seed=base_seed + i, run_index=i, clock=clock, **kwargs)
        )
    return records
