"""Shared helpers for spinning up servers on free ports in tests."""

import socket
import threading

from model_server import ServerConfig, create_server


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def start_server(config_kwargs, servers):
    """Bind on a free port (retrying the pick-then-bind race) and serve."""
    last_exc = None
    for _ in range(5):
        try:
            server = create_server(ServerConfig(port=free_port(), **config_kwargs))
        except OSError as exc:
            last_exc = exc
            continue
        # short poll so per-test shutdown is cheap
        threading.Thread(
            target=server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True
        ).start()
        servers.append(server)
        return server
    raise last_exc
