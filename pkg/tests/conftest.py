"""Shared fixtures: small trained toy models and a local protocol server."""

import json
import math
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from maskscore import (
    UniformDenoiser,
    build_vocabulary,
    tokenize,
    train_toy_ar_lm,
    train_toy_masked_lm,
)

TOKENS = ("a", "b", "c", "d", "e")


def _markov_texts(n_texts: int, seed: int) -> list[str]:
    # biased walk over five tokens so the trained model is far from uniform
    rng = random.Random(seed)
    texts = []
    for _ in range(n_texts):
        length = rng.randint(3, 8)
        idx = rng.randrange(len(TOKENS))
        toks = [TOKENS[idx]]
        for _ in range(length - 1):
            idx = (idx + rng.choice((0, 1, 1, 2))) % len(TOKENS)
            toks.append(TOKENS[idx])
        texts.append(" ".join(toks))
    return texts


@pytest.fixture(scope="session")
def tiny_vocab():
    return build_vocabulary(["a b", "b c"])


@pytest.fixture(scope="session")
def train_texts():
    return _markov_texts(40, seed=7)


@pytest.fixture(scope="session")
def vocab(train_texts):
    return build_vocabulary(train_texts)


@pytest.fixture(scope="session")
def corpus(train_texts, vocab):
    return [tokenize(text, vocab) for text in train_texts]


@pytest.fixture(scope="session")
def masked_lm(corpus, vocab):
    return train_toy_masked_lm(corpus, vocab)


@pytest.fixture(scope="session")
def ar_lm(corpus, vocab):
    return train_toy_ar_lm(corpus, vocab)


@pytest.fixture(scope="session")
def uniform(vocab):
    return UniformDenoiser(vocab)


class StubServer:
    """Minimal wire-protocol server with a per-test response override.

    By default it answers faithfully with -log(vocab_size) for every
    target. Tests set ``transform`` (request dict -> (status, bytes,
    content type)) to fake arbitrary misbehavior, or ``delay`` to stall.
    """

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size
        self.transform = None
        self.health_transform = None
        self.delay = 0.0
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status, payload, ctype="application/json"):
                self.send_response(status)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def do_GET(self):
                if outer.delay:
                    time.sleep(outer.delay)
                if self.path != "/v1/health":
                    self._send(404, b"{}")
                    return
                if outer.health_transform is not None:
                    self._send(*outer.health_transform())
                    return
                body = json.dumps({"status": "ok", "vocab_size": outer.vocab_size})
                self._send(200, body.encode())

            def do_POST(self):
                if outer.delay:
                    time.sleep(outer.delay)
                if self.path != "/v1/logprobs":
                    self._send(404, b"{}")
                    return
                length = int(self.headers.get("Content-Length", 0))
                request = json.loads(self.rfile.read(length))
                outer.requests.append(request)
                if outer.transform is not None:
                    self._send(*outer.transform(request))
                    return
                value = -math.log(outer.vocab_size)
                body = json.dumps(
                    {
                        "id": request["id"],
                        "logprobs": {pos: value for pos in request["targets"]},
                    }
                )
                self._send(200, body.encode())

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self._server.server_port}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server():
    servers = []

    def make(vocab_size: int) -> StubServer:
        server = StubServer(vocab_size)
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()
