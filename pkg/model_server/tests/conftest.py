import pytest

from server_harness import start_server


@pytest.fixture
def running_server():
    """Factory fixture: start servers, shut them all down afterwards."""
    servers = []

    def start(**config_kwargs):
        return start_server(config_kwargs, servers)

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()
