"""Deterministic scripted model endpoints speaking the chat-completions shape.

A ``MockBackend`` turns request bodies into response bodies through a
policy callable. It can be mounted in-process as an ``httpx`` transport or
served over a real loopback socket. Every reply declares its token usage
and a simulated latency (``x_latency_ms``); the backend keeps a ledger of
what it declared so tests can reconcile run records against it.
"""

from __future__ import annotations

import json
import re
import threading
from collections.abc import Callable, Iterator, Mapping
from contextlib import contextmanager
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from typing import Any

import httpx

Policy = Callable[[Mapping[str, Any]], Mapping[str, Any]]

_BUG_RE = re.compile(r"^Bug: (\S+)$", re.MULTILINE)


def estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)


def prompt_tokens(request: Mapping[str, Any]) -> int:
    return estimate_tokens(json.dumps(request.get("messages", []), sort_keys=True))


def text_reply(text: str) -> dict[str, Any]:
    return {"role": "assistant", "content": text}


def tool_reply(name: str, arguments: Mapping[str, Any], call_id: str = "call_0") -> dict[str, Any]:
    return {
        "role": "assistant",
        "content": None,
        "tool_calls": [
            {"id": call_id, "type": "function", "function": {"name": name, "arguments": json.dumps(arguments)}}
        ],
    }


def tool_rounds(request: Mapping[str, Any]) -> int:
    return sum(1 for m in request.get("messages", []) if m.get("role") == "tool")


def bug_of(request: Mapping[str, Any]) -> str | None:
    for m in request.get("messages", []):
        if m.get("role") == "user":
            found = _BUG_RE.search(m.get("content") or "")
            if found:
                return found.group(1)
    return None


@dataclass(frozen=True)
class Declared:
    model: str
    seed: int | None
    prompt_tokens: int
    completion_tokens: int


class MockBackend:
    def __init__(
        self,
        policy: Policy,
        fail_when: Callable[[Mapping[str, Any]], bool] | None = None,
        base_latency_ms: float = 40.0,
        ms_per_output_token: float = 2.0,
    ) -> None:
        self.policy = policy
        self.fail_when = fail_when
        self.base_latency_ms = base_latency_ms
        self.ms_per_output_token = ms_per_output_token
        self.ledger: list[Declared] = []
        self._lock = threading.Lock()

    def handle(self, request: Mapping[str, Any]) -> tuple[int, dict[str, Any]]:
        if self.fail_when is not None and self.fail_when(request):
            return 503, {"error": {"message": "injected failure"}}
        message = dict(self.policy(request))
        if message.get("tool_calls"):
            out_text = json.dumps(message["tool_calls"], sort_keys=True)
        else:
            out_text = message.get("content") or ""
        p_tok = prompt_tokens(request)
        c_tok = estimate_tokens(out_text)
        with self._lock:
            self.ledger.append(Declared(request.get("model", ""), request.get("seed"), p_tok, c_tok))
        return 200, {
            "object": "chat.completion",
            "model": request.get("model"),
            "choices": [
                {
                    "index": 0,
                    "message": message,
                    "finish_reason": "tool_calls" if message.get("tool_calls") else "stop",
                }
            ],
            "usage": {"prompt_tokens": p_tok, "completion_tokens": c_tok, "total_tokens": p_tok + c_tok},
            "x_latency_ms": self.base_latency_ms + self.ms_per_output_token * c_tok,
        }

    def declared_total(self) -> int:
        with self._lock:
            return sum(d.prompt_tokens + d.completion_tokens for d in self.ledger)

    def transport(self) -> httpx.MockTransport:
        def handler(req: httpx.Request) -> httpx.Response:
            if req.method != "POST" or not req.url.path.endswith("/chat/completions"):
                return httpx.Response(404, json={"error": {"message": "not found"}})
            status, body = self.handle(json.loads(req.content))
            return httpx.Response(status, json=body)

        return httpx.MockTransport(handler)

    @contextmanager
    def serve(self) -> Iterator[str]:
        """Serve on an ephemeral loopback port; yields the base URL."""
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length", 0))
                if not self.path.endswith("/chat/completions"):
                    status, body = 404, {"error": {"message": "not found"}}
                else:
                    status, body = backend.handle(json.loads(self.rfile.read(length)))
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args: Any) -> None:
                pass

        server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            yield f"http://127.0.0.1:{server.server_address[1]}/v1"
        finally:
            server.shutdown()
            server.server_close()


def scripted(replies: list[Mapping[str, Any]]) -> Policy:
    """Policy replaying ``replies`` by tool round: reply ``i`` answers round ``i``.

    The last reply repeats once the script runs out.
    """

    def policy(request: Mapping[str, Any]) -> Mapping[str, Any]:
        i = tool_rounds(request)
        if not request.get("tools"):
            # Forced-answer turn: count it as one more round.
            i += 1
        return replies[min(i, len(replies) - 1)]

    return policy


# ---------------------------------------------------------------------------
# desk-d4j mock models


def load_desk_profiles() -> dict[str, Any]:
    text = (resources.files("cosmosfl") / "data" / "desk-d4j-mock.json").read_text(encoding="utf-8")
    return json.loads(text)


class DeskD4JPolicy:
    """Mock models A-D for the bundled corpus.

    Per (model, bug) a profile letter fixes what each run names:
    S the faulty method alone, H the model's decoy plus the faulty method,
    N the faulty method on even seeds and the decoy on odd seeds,
    M the decoy alone. Before answering, model ``X`` makes its configured
    number of tool calls (coverage of the faulty class, then the snippet
    and comments of its answer).
    """

    def __init__(self, table: Mapping[str, Any] | None = None, faulty: Mapping[str, str] | None = None) -> None:
        self.table = table or load_desk_profiles()
        if faulty is None:
            from cosmosfl.fixtures import desk_d4j_path, load_fixture_set

            fixtures = load_fixture_set(desk_d4j_path())
            faulty = {b: min(fx.ground_truth.faulty_methods) for b, fx in fixtures.items()}
        self.faulty = dict(faulty)

    def answer_methods(self, model: str, bug: str, seed: int) -> list[str]:
        profile = self.table["models"][model]["profiles"][bug]
        f = self.faulty[bug]
        d = self.table["decoys"][bug][model]
        if profile == "S":
            return [f]
        if profile == "H":
            return [d, f]
        if profile == "N":
            return [f] if seed % 2 == 0 else [d]
        if profile == "M":
            return [d]
        raise ValueError(f"unknown profile {profile!r}")

    def __call__(self, request: Mapping[str, Any]) -> Mapping[str, Any]:
        model = request["model"]
        bug = bug_of(request)
        if bug is None or model not in self.table["models"]:
            return text_reply("I cannot tell which bug this is.")
        methods = self.answer_methods(model, bug, int(request.get("seed") or 0))
        budget = self.table["models"][model]["tool_calls"]
        rounds = tool_rounds(request)
        if request.get("tools") and rounds < budget:
            f = self.faulty[bug]
            plan = [
                ("get_method_coverage", {"class_name": f[: f.index("(")].rsplit(".", 1)[0]}),
                ("get_code_snippet", {"method": methods[0]}),
                ("get_comments", {"method": methods[0]}),
            ]
            name, args = plan[rounds % len(plan)]
            return tool_reply(name, args, call_id=f"call_{rounds}")
        lines = [f"Answer: {m}" for m in methods]
        return text_reply("After inspecting the covered code:\n" + "\n".join(lines))
