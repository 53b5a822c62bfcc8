"""Scripted stand-in for a chat-completion endpoint.

The script is a JSON object mapping sample id to an ordered list of
responses. Each request (identified by the ``X-Sample-Id`` header) takes the
next entry for its id; once the list is used up the last entry repeats.
An entry is either the message content as a string or an object:

    {"content": "..."}                 normal 200 reply
    {"status": 503, "body": "..."}     error reply with that status

Requests for ids not in the script get 404.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .client import COMPLETIONS_PATH, SAMPLE_ID_HEADER

log = logging.getLogger(__name__)


class ScriptError(ValueError):
    pass


def _check_entry(sid: str, entry) -> None:
    if isinstance(entry, str):
        return
    if isinstance(entry, dict) and ("content" in entry or isinstance(entry.get("status"), int)):
        return
    raise ScriptError(f"script entry for {sid!r} must be a string, {{'content': ...}} or {{'status': int}}")


def validate_script(script) -> dict[str, list]:
    if not isinstance(script, dict):
        raise ScriptError("script must be a JSON object mapping sample id to a list of responses")
    for sid, entries in script.items():
        if not isinstance(entries, list) or not entries:
            raise ScriptError(f"script for {sid!r} must be a non-empty list")
        for e in entries:
            _check_entry(sid, e)
    return script


def load_script(path: str | Path) -> dict[str, list]:
    return validate_script(json.loads(Path(path).read_text(encoding="utf-8")))


class ScriptState:
    def __init__(self, script: dict[str, list]):
        self.script = validate_script(script)
        self.counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def next_entry(self, sample_id: str):
        with self._lock:
            entries = self.script.get(sample_id)
            if entries is None:
                return None
            n = self.counts.get(sample_id, 0)
            self.counts[sample_id] = n + 1
        return entries[min(n, len(entries) - 1)]


def _make_handler(state: ScriptState):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, payload) -> None:
            body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length)
            if self.path.rstrip("/") != COMPLETIONS_PATH:
                return self._send(404, {"error": f"no route {self.path}"})
            try:
                json.loads(raw or b"{}")
            except ValueError:
                return self._send(400, {"error": "request body is not JSON"})
            sid = self.headers.get(SAMPLE_ID_HEADER)
            if not sid:
                return self._send(400, {"error": f"missing {SAMPLE_ID_HEADER} header"})
            entry = state.next_entry(sid)
            if entry is None:
                return self._send(404, {"error": f"unknown sample id {sid}"})
            if isinstance(entry, dict) and "status" in entry:
                return self._send(entry["status"], str(entry.get("body", "scripted error")).encode())
            content = entry if isinstance(entry, str) else entry["content"]
            self._send(200, {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})

        def log_message(self, fmt, *args):
            log.debug("mock: " + fmt, *args)

    return Handler


class MockServer:
    """Threaded mock endpoint; usable as a context manager."""

    def __init__(self, script: dict[str, list], host: str = "127.0.0.1", port: int = 0):
        self.state = ScriptState(script)
        self.httpd = ThreadingHTTPServer((host, port), _make_handler(self.state))
        self.httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.httpd.server_address[0]}:{self.port}"

    @property
    def counts(self) -> dict[str, int]:
        return dict(self.state.counts)

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join()

    def serve_forever(self) -> None:
        try:
            self.httpd.serve_forever()
        finally:
            self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
