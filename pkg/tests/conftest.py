"""Shared fixtures: local scriptable HTTP servers used as endpoint doubles."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


@dataclass
class RecordedRequest:
    path: str
    body: dict
    headers: dict


class MockServer:
    """Local HTTP double; `respond(req)` returns (status, payload dict)."""

    def __init__(self, respond):
        self._respond = respond
        self.requests: list[RecordedRequest] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (stdlib naming)
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw) if raw else {}
                except json.JSONDecodeError:
                    body = {"_raw": raw.decode("utf-8", "replace")}
                req = RecordedRequest(self.path, body, dict(self.headers))
                with outer._lock:
                    outer.requests.append(req)
                    outer.in_flight += 1
                    outer.max_in_flight = max(outer.max_in_flight, outer.in_flight)
                try:
                    status, payload = outer._respond(req)
                finally:
                    with outer._lock:
                        outer.in_flight -= 1
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def request_count(self) -> int:
        return len(self.requests)

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def make_server():
    servers: list[MockServer] = []

    def factory(respond) -> MockServer:
        server = MockServer(respond)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()


def chat_envelope(content: str) -> dict:
    """Chat-completions-style response carrying `content` as assistant text."""
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def teacher_reply_json(hints: list[str], code: str) -> str:
    return json.dumps({"hints": hints, "code": code})


@pytest.fixture
def generate_server(make_server):
    """Server for the /generate contract: maps prompt -> completion text."""

    def factory(mapping: dict, default: str | None = None) -> MockServer:
        def respond(req):
            prompt = req.body.get("prompt", "")
            if prompt in mapping:
                return 200, {"text": mapping[prompt]}
            if default is not None:
                return 200, {"text": default}
            return 404, {"error": f"unscripted prompt: {prompt!r}"}

        return make_server(respond)

    return factory


@pytest.fixture
def teacher_env(monkeypatch):
    monkeypatch.setenv("TEACHER_API_KEY", "test-key")


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        verdict = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {verdict}: {name}")
