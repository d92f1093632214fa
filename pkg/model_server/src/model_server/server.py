"""HTTP implementation of the denoiser wire protocol.

Endpoints:

- ``GET /v1/health`` -> ``{"status": "ok", "vocab_size": N}``
- ``POST /v1/logprobs``: request ``{"id", "context", "corrupted",
  "targets"}`` where ``corrupted`` renders masked slots as ``"[M]"``
  and ``targets`` maps decimal position strings to the true tokens;
  response ``{"id": <echoed>, "logprobs": {"<pos>": value <= 0}}``.

Schema violations answer 400 with a message naming the offending field
or position. Bodies over 1 MiB are refused with 413 before being read.
A backend that is still loading answers 503; one that failed to load
answers 500. Handlers are stateless: every response is a pure function
of the request body and the immutable backend, so concurrent requests
are order-independent.
"""

from __future__ import annotations

import json
import logging
import math
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import ServerConfig
from .prompts import load_prompt_template

LOG = logging.getLogger("model_server")

MASK_TOKEN = "[M]"
MAX_BODY_BYTES = 1 << 20


class _BadRequest(Exception):
    """Schema violation in a request body; maps to HTTP 400."""


class UniformBackend:
    """Answers every target with exactly -log(vocab_size).

    Context-free and deterministic, which makes it the conformance
    instrument: a client scoring through this backend must reproduce an
    in-process uniform denoiser bit-for-bit, modulo float serialization.
    """

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size
        self._value = -math.log(vocab_size)

    def start(self) -> None:
        pass

    @property
    def ready(self) -> bool:
        return True

    @property
    def failed(self) -> Exception | None:
        return None

    def logprobs(self, context, corrupted, targets) -> dict[str, float]:
        return {key: self._value for key in targets}


def validate_request(doc) -> tuple[str, list[str], list[str], dict[str, str]]:
    """Check a decoded /v1/logprobs body against the wire schema.

    Returns (id, context, corrupted, targets) or raises _BadRequest with
    a message naming what is wrong. Target keys must be ASCII decimal
    strings indexing ``corrupted``; each must point at a ``"[M]"`` slot.
    Response keys echo the request spelling, so the original strings are
    preserved here rather than normalized.
    """
    if not isinstance(doc, dict):
        raise _BadRequest("request body must be a JSON object")
    missing = [k for k in ("id", "context", "corrupted", "targets") if k not in doc]
    if missing:
        raise _BadRequest(f"missing required field(s): {', '.join(missing)}")
    request_id = doc["id"]
    if not isinstance(request_id, str):
        raise _BadRequest("id must be a string")
    context = doc["context"]
    if not isinstance(context, list) or any(not isinstance(t, str) for t in context):
        raise _BadRequest("context must be an array of strings")
    corrupted = doc["corrupted"]
    if not isinstance(corrupted, list) or any(
        not isinstance(t, str) for t in corrupted
    ):
        raise _BadRequest("corrupted must be an array of strings")
    targets = doc["targets"]
    if not isinstance(targets, dict):
        raise _BadRequest("targets must be an object keyed by position")
    seen: dict[int, str] = {}
    for key, token in targets.items():
        if not (key.isascii() and key.isdigit()):
            raise _BadRequest(f"target position {key!r} is not a decimal string")
        pos = int(key)
        if pos >= len(corrupted):
            raise _BadRequest(
                f"target position {key} is out of range for"
                f" {len(corrupted)} corrupted tokens"
            )
        if pos in seen:
            raise _BadRequest(
                f"target positions {seen[pos]!r} and {key!r} denote the same slot"
            )
        seen[pos] = key
        if not isinstance(token, str):
            raise _BadRequest(f"target at position {key} must be a string")
        if corrupted[pos] != MASK_TOKEN:
            raise _BadRequest(
                f"target at position {key} is not masked in corrupted"
                f" (found {corrupted[pos]!r})"
            )
    return request_id, context, corrupted, targets


class _Handler(BaseHTTPRequestHandler):
    server_version = "model-server/0.1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default; --verbose enables
        LOG.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, doc: dict, close: bool = False) -> None:
        payload = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        if close:
            # set when the request body was not consumed, so the
            # connection cannot be reused for a follow-up request
            self.send_header("Connection", "close")
            self.close_connection = True
        self.end_headers()
        self.wfile.write(payload)

    def _backend_unavailable(self) -> bool:
        backend = self.server.backend
        if backend.failed is not None:
            self._send_json(500, {"error": f"model failed to load: {backend.failed}"})
            return True
        if not backend.ready:
            self._send_json(503, {"error": "model is still loading"})
            return True
        return False

    def do_GET(self):
        if self.path != "/v1/health":
            if self.path == "/v1/logprobs":
                self.send_response(405)
                self.send_header("Allow", "POST")
                self.send_header("Content-Length", "0")
                self.end_headers()
            else:
                self._send_json(404, {"error": f"no such path: {self.path}"})
            return
        if self._backend_unavailable():
            return
        self._send_json(
            200, {"status": "ok", "vocab_size": self.server.backend.vocab_size}
        )

    def do_POST(self):
        if self.path != "/v1/logprobs":
            if self.path == "/v1/health":
                self.send_response(405)
                self.send_header("Allow", "GET")
                self.send_header("Content-Length", "0")
                self.end_headers()
            else:
                self._send_json(404, {"error": f"no such path: {self.path}"})
            return
        raw_length = self.headers.get("Content-Length")
        if raw_length is None:
            self._send_json(411, {"error": "Content-Length is required"}, close=True)
            return
        try:
            length = int(raw_length)
        except ValueError:
            self._send_json(
                400, {"error": f"bad Content-Length: {raw_length!r}"}, close=True
            )
            return
        if length > MAX_BODY_BYTES:
            self._send_json(
                413,
                {"error": f"request body exceeds {MAX_BODY_BYTES} bytes"},
                close=True,
            )
            return
        if self._backend_unavailable():
            return
        body = self.rfile.read(length)
        try:
            doc = json.loads(body)
        except ValueError:
            self._send_json(400, {"error": "request body is not valid JSON"})
            return
        try:
            request_id, context, corrupted, targets = validate_request(doc)
        except _BadRequest as exc:
            self._send_json(400, {"error": str(exc)})
            return
        try:
            logprobs = self.server.backend.logprobs(context, corrupted, targets)
        except Exception as exc:  # defensive: backend bugs must not kill the thread
            LOG.exception("backend error for request %s", request_id)
            self._send_json(500, {"error": f"{type(exc).__name__}: {exc}"})
            return
        self._send_json(200, {"id": request_id, "logprobs": logprobs})


class DenoiserServer(ThreadingHTTPServer):
    """Threaded HTTP server bound to its config and backend."""

    daemon_threads = True
    # socketserver's default backlog of 5 drops connections under a
    # burst of concurrent clients; the protocol promises concurrency
    request_queue_size = 128

    def __init__(self, config: ServerConfig, backend):
        super().__init__((config.host, config.port), _Handler)
        self.config = config
        self.backend = backend

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def _make_backend(config: ServerConfig):
    if config.mode == "uniform":
        return UniformBackend(config.vocab_size)
    # imported lazily so uniform mode never touches ML dependencies
    from .hf_backend import HFBackend

    prompt = (
        load_prompt_template(config.prompt_template)
        if config.prompt_template
        else None
    )
    return HFBackend(config.model_id, device=config.device, prompt=prompt)


def create_server(config: ServerConfig) -> DenoiserServer:
    """Bind the socket and start the backend; does not serve yet.

    The caller owns the lifecycle: call ``serve_forever()`` (or poll it
    from a thread in tests) and ``server_close()`` when done.
    """
    backend = _make_backend(config)
    server = DenoiserServer(config, backend)
    backend.start()
    return server


def serve(config: ServerConfig) -> None:
    """Blocking entry point: bind, then serve until interrupted."""
    server = create_server(config)
    LOG.info("%s mode listening on %s", config.mode, server.url)
    try:
        server.serve_forever()
    finally:
        server.server_close()
