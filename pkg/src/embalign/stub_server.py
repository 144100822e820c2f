"""Tiny OpenAI-compatible embedding server for tests and offline demos.

Vectors are a deterministic function of (model, text): a Philox stream keyed
by the first 8 bytes of sha256 of the cache key.  ``fail_first`` makes the
first N requests return HTTP 503 to exercise client retries.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import rng as _rng
from .client import cache_key


def stub_vector(model, text, dim):
    seed = int(cache_key(model, text)[:16], 16)
    v = _rng.standard_normal(_rng.stream(seed), dim)
    return v / np.linalg.norm(v)


class StubEmbeddingServer:
    def __init__(self, dim=8, host="127.0.0.1", port=0, fail_first=0, fixtures=None):
        self.dim = dim
        self.fixtures = dict(fixtures or {})
        self.fail_remaining = fail_first
        self.hits = 0
        self.inputs = []
        self._lock = threading.Lock()
        self.httpd = ThreadingHTTPServer((host, port), self._handler())
        self._thread = None

    @property
    def base_url(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def vector(self, model, text):
        if text in self.fixtures:
            return list(map(float, self.fixtures[text]))
        return stub_vector(model, text, self.dim).tolist()

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, code, body):
                data = json.dumps(body).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with server._lock:
                    server.hits += 1
                    fail = server.fail_remaining > 0
                    if fail:
                        server.fail_remaining -= 1
                if not self.path.endswith("/embeddings"):
                    return self._send(404, {"error": "not found"})
                if fail:
                    return self._send(503, {"error": "try again"})
                model, inputs = body.get("model", ""), body.get("input", [])
                with server._lock:
                    server.inputs.extend(inputs)
                data = [{"index": i, "embedding": server.vector(model, t)} for i, t in enumerate(inputs)]
                self._send(200, {"object": "list", "data": data, "model": model})

        return Handler

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
