import json
from pathlib import Path

import pytest

from patchjudge.client import EndpointConfig
from patchjudge.mock import MockServer

FIXTURES = Path(__file__).parent / "fixtures"

# Lines collected by test_acceptance.py, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def small_script() -> dict:
    return json.loads((FIXTURES / "small_118_script.json").read_text())


@pytest.fixture
def mock_factory():
    servers = []

    def start(script: dict) -> MockServer:
        server = MockServer(script).start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.stop()


@pytest.fixture
def endpoint_for():
    def make(server: MockServer, **kw) -> EndpointConfig:
        opts = dict(base_url=server.url, model_name="mock", timeout_seconds=5.0, max_retries=0, backoff_seconds=0.0)
        opts.update(kw)
        return EndpointConfig(**opts)

    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
