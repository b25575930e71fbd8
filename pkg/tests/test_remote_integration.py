"""Remote-mode pipeline against loopback HTTP doubles of both backends.

A single stdlib HTTP server plays the KGQA API and the SPARQL endpoint,
answering from a synthetic world, so the remote code path (candidate fetch,
query execution, label resolution, caching) runs end to end without leaving
the machine.
"""

import json
import socket
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from kgqa_av.cli import main
from kgqa_av.kg import MockEndpoint, execute
from kgqa_av.qa import MockKGQAConfig
from kgqa_av.sparql import RDFS_LABEL, parse_query
from kgqa_av.synthetic import MockKGQA, SyntheticWorld, SyntheticWorldConfig


def result_json(rs) -> bytes:
    bindings = []
    for row in rs.rows:
        cell = {}
        for name, term in row.assignments.items():
            if term.kind == "iri":
                cell[name] = {"type": "uri", "value": term.value}
            else:
                value = {"type": "literal", "value": term.value}
                if term.language:
                    value["xml:lang"] = term.language
                cell[name] = value
        bindings.append(cell)
    doc = {"head": {"vars": list(rs.variables)}, "results": {"bindings": bindings}}
    return json.dumps(doc).encode("utf-8")


class WorldBackendHandler(BaseHTTPRequestHandler):
    """Serves /kgqa (candidate lists) and /sparql (query + label lookups)."""

    world: SyntheticWorld
    kgqa: MockKGQA
    counters: dict

    def log_message(self, *args):
        pass

    def _send(self, payload: bytes, status=200, content_type="application/json"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        parsed = urllib.parse.urlparse(self.path)
        params = urllib.parse.parse_qs(parsed.query)
        if parsed.path == "/kgqa":
            self.counters["kgqa"] += 1
            question = params.get("question", [""])[0]
            texts = self.kgqa.fetch(question)
            self._send(json.dumps({"queries": [{"query": t} for t in texts]}).encode())
        elif parsed.path == "/sparql":
            self._answer_sparql(params.get("query", [""])[0])
        else:
            self._send(b"{}", status=404)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length).decode("utf-8")
        params = urllib.parse.parse_qs(body)
        self._answer_sparql(params.get("query", [""])[0])

    def _answer_sparql(self, text):
        self.counters["sparql"] += 1
        candidate = parse_query(text)
        pattern = candidate.patterns[0]
        if (
            len(candidate.patterns) == 1
            and pattern.predicate.kind == "iri"
            and pattern.predicate.value == RDFS_LABEL
        ):
            iri = pattern.subject.value
            by_lang = self.world.graph.labels.get(iri, {})
            rows = [
                {
                    "label": {"type": "literal", "value": label, "xml:lang": lang}
                }
                for lang, label in sorted(by_lang.items())
            ]
            doc = {"head": {"vars": ["label"]}, "results": {"bindings": rows}}
            self._send(json.dumps(doc).encode())
            return
        rs = execute(candidate, MockEndpoint(self.world.graph))
        self._send(result_json(rs))


@pytest.fixture(scope="module")
def remote_world_server():
    world = SyntheticWorld(SyntheticWorldConfig(n_records=40, n_questions=6, seed=13))
    kgqa = MockKGQA(MockKGQAConfig(candidates_per_question=12, seed=13), world)
    counters = {"kgqa": 0, "sparql": 0}

    handler = type(
        "Handler",
        (WorldBackendHandler,),
        {"world": world, "kgqa": kgqa, "counters": counters},
    )
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield world, f"http://127.0.0.1:{port}", counters
    server.shutdown()
    thread.join(timeout=10)


def test_remote_filter_run_and_cache_silence(remote_world_server, tmp_path):
    world, url, counters = remote_world_server
    records_file = tmp_path / "records.jsonl"
    with open(records_file, "w", encoding="utf-8") as handle:
        for record in world.question_records():
            handle.write(json.dumps(record.__dict__) + "\n")

    def run_filter(out):
        return main(
            [
                "filter",
                "--backend", "remote",
                "--kgqa-url", f"{url}/kgqa",
                "--sparql-url", f"{url}/sparql",
                "--dataset", str(records_file),
                "--classifier", "oracle",
                "--cache-dir", str(tmp_path / "cache"),
                "--seed", "13",
                "--out", str(out),
            ]
        )

    assert run_filter(tmp_path / "cold") == 0
    cold = dict(counters)
    assert cold["kgqa"] == 6  # one call per distinct question
    assert cold["sparql"] > 0

    assert run_filter(tmp_path / "warm") == 0
    assert dict(counters) == cold  # cache hits issue no network traffic

    cold_report = json.loads((tmp_path / "cold" / "report.json").read_text())
    warm_report = json.loads((tmp_path / "warm" / "report.json").read_text())
    assert cold_report == warm_report
    assert cold_report["failures"] == 0
    (entry,) = cold_report["reports"]
    assert entry["question_count"] == 6
    assert entry["metrics"]["P@1"]["after"] >= entry["metrics"]["P@1"]["before"]
