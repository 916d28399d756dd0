import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest
from hypothesis import strategies as st

from bytescam.ingest import ContractRecord, Dataset, ScamKind

# Acceptance results are collected here and echoed in the terminal summary.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


hex_bytes = st.binary(min_size=1, max_size=64).map(bytes.hex)
addresses = st.binary(min_size=20, max_size=20).map(bytes.hex)


@st.composite
def records(draw, labeled=None):
    label = draw(st.sampled_from([0, 1]) if labeled else st.sampled_from([None, 0, 1]))
    kind = draw(st.one_of(st.none(), st.sampled_from(list(ScamKind))))
    return ContractRecord(draw(addresses), draw(st.binary(max_size=40).map(bytes.hex)), label, kind)


@st.composite
def datasets(draw, min_size=0, max_size=12, labeled=None):
    recs = draw(st.lists(records(labeled=labeled), min_size=min_size, max_size=max_size,
                         unique_by=lambda r: r.address))
    return Dataset(recs, draw(st.text(max_size=30)))


@pytest.fixture
def toy_dataset():
    return Dataset([
        ContractRecord("01ade83a7ac7d13ab01f322d68bc2f8fe371ed27", "6080604052", 1, ScamKind.PONZI),
        ContractRecord("0x" + "ab" * 20, "", 0, None),
        ContractRecord("CD" * 20, "11", None, None),
    ], "toy")


class FakeNode:
    """Minimal JSON-RPC / explorer endpoint serving ``eth_getCode`` from a dict."""

    def __init__(self, code):
        self.code = dict(code)
        self.requests = []
        self.raw_reply = None   # bytes to send instead of a normal answer
        node = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _answer(self, address):
                node.requests.append(address)
                if node.raw_reply is not None:
                    body = node.raw_reply
                else:
                    result = node.code.get(address.lower().removeprefix("0x"), "0x")
                    body = json.dumps({"jsonrpc": "2.0", "id": 1, "result": result}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                req = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                assert req["method"] == "eth_getCode"
                self._answer(req["params"][0])

            def do_GET(self):
                query = parse_qs(urlparse(self.path).query)
                assert query["module"] == ["proxy"] and query["action"] == ["eth_getCode"]
                node.last_query = query
                self._answer(query["address"][0])

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def fake_node():
    node = FakeNode({
        "11" * 20: "0x6080604052348015600f57600080fd5b",
        "22" * 20: "0x60016002",
    })
    yield node
    node.close()
