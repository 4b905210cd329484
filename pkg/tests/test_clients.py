import json

import pytest
import requests

from edge_rca.clients.factory import make_client
from edge_rca.clients.http_client import HttpModelClient
from edge_rca.clients.mock_client import MockModelClient
from edge_rca.clients.replay_client import ReplayModelClient
from edge_rca.clients.transcripts import append_transcript, load_transcripts, transcript_record
from edge_rca.utils.config import ClientConfig
from edge_rca.utils.errors import (
    ClientUnavailable,
    ConfigError,
    HttpStatusError,
    ModelTimeout,
    ReplayMiss,
    UnparseableResponse,
)
from edge_rca.utils.specs import ChatMessage, ModelRequest


def _request(text: str = "LOG: disk <*> failed", purpose: str = "L3_parse") -> ModelRequest:
    return ModelRequest(role_prompts=[ChatMessage(role="system", content="be terse"),
                                      ChatMessage(role="user", content=text)],
                        purpose=purpose)


class FakeResponse:
    def __init__(self, status_code=200, body=None, text=""):
        self.status_code = status_code
        self._body = body
        self.text = text or json.dumps(body)

    def json(self):
        if self._body is None:
            raise ValueError("no json")
        return self._body


class FakeSession:
    """Replays a scripted list of responses or exceptions."""

    def __init__(self, script):
        self.script = list(script)
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    def close(self):
        pass


def _chat(content):
    return FakeResponse(body={"choices": [{"message": {"content": content}}]})


def _http(script, **overrides):
    cfg = ClientConfig(backend="http", backoff_s=0.0, **overrides)
    session = FakeSession(script)
    return HttpModelClient(cfg, session=session), session


def test_request_hash_is_stable_and_content_sensitive():
    assert _request().request_hash() == _request().request_hash()
    assert _request().request_hash() != _request("LOG: other").request_hash()


def test_synthesis_requests_must_be_greedy():
    with pytest.raises(ValueError):
        ModelRequest(role_prompts=[ChatMessage(role="user", content="x")], purpose="synthesis", temperature=0.7)


def test_mock_echoes_the_log_line_and_counts_calls():
    client = MockModelClient()
    assert client.complete(_request()).text == "disk <*> failed"
    assert client.complete(_request()).provider_tag == "mock"
    assert client.calls == 2


def test_mock_fixture_wins_over_the_default():
    req = _request()
    client = MockModelClient(fixtures={req.request_hash(): "fixture answer"})
    assert client.complete(req).text == "fixture answer"


def test_mock_fixture_file(tmp_path):
    req = _request()
    path = tmp_path / "fixtures.yaml"
    path.write_text(f"{req.request_hash()}: from the file\n", encoding="utf-8")
    assert MockModelClient.from_file(str(path)).complete(req).text == "from the file"


def test_offline_mock_raises_and_counts_failures():
    client = MockModelClient(available=False)
    with pytest.raises(ClientUnavailable):
        client.complete(_request())
    assert client.failures == 1


def test_transcripts_round_trip_through_replay(tmp_path):
    path = str(tmp_path / "t" / "transcript.jsonl")
    req = _request()
    append_transcript(path, transcript_record(req, "first", "http:x"))
    append_transcript(path, transcript_record(req, "second", "http:x"))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("garbage\n")
    assert load_transcripts(path)[req.request_hash()]["response_text"] == "second"

    replay = ReplayModelClient(path)
    assert replay.complete(req).text == "second"
    with pytest.raises(ReplayMiss):
        replay.complete(_request("LOG: never recorded"))


def test_http_success_records_a_transcript(tmp_path):
    record = tmp_path / "rec.jsonl"
    client, session = _http([_chat("disk <*> failed")], record_path=str(record))
    assert client.complete(_request()).text == "disk <*> failed"
    payload = session.posts[0]["json"]
    assert payload["temperature"] == 0.0 and payload["messages"][1]["role"] == "user"
    assert ReplayModelClient(str(record)).complete(_request()).text == "disk <*> failed"


def test_http_retries_server_errors_then_succeeds():
    client, session = _http([FakeResponse(503, text="busy"), requests.Timeout(), _chat("ok")], retries=2)
    assert client.complete(_request()).text == "ok"
    assert len(session.posts) == 3


def test_http_client_errors_fail_fast():
    client, session = _http([FakeResponse(401, text="denied"), _chat("unused")], retries=2)
    with pytest.raises(HttpStatusError) as err:
        client.complete(_request())
    assert err.value.status == 401 and len(session.posts) == 1


def test_http_gives_up_after_retries():
    client, _ = _http([requests.Timeout(), requests.Timeout()], retries=1)
    with pytest.raises(ModelTimeout):
        client.complete(_request())
    client, _ = _http([requests.ConnectionError("refused")], retries=0)
    with pytest.raises(ClientUnavailable):
        client.complete(_request())


def test_http_rejects_unexpected_bodies():
    client, _ = _http([FakeResponse(body={"choices": []})], retries=0)
    with pytest.raises(UnparseableResponse):
        client.complete(_request())


def test_http_sends_the_api_key_from_the_environment(monkeypatch):
    monkeypatch.setenv("EDGE_RCA_API_KEY", "s3cret")
    client, session = _http([_chat("ok")])
    client.complete(_request())
    assert session.posts[0]["headers"]["Authorization"] == "Bearer s3cret"


def test_factory_backends(tmp_path):
    assert isinstance(make_client(ClientConfig()), MockModelClient)
    assert isinstance(make_client(ClientConfig(backend="http"), offline=True), MockModelClient)
    with pytest.raises(ConfigError):
        make_client(ClientConfig(backend="replay"))
    with pytest.raises(ClientUnavailable):
        make_client(ClientConfig(backend="replay", replay_path=str(tmp_path / "none.jsonl")))
    path = tmp_path / "t.jsonl"
    append_transcript(str(path), transcript_record(_request(), "ok", "http:x"))
    replay = make_client(ClientConfig(backend="replay", replay_path=str(path)))
    assert isinstance(replay, ReplayModelClient)
