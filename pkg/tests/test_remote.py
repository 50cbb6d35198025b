import json
import logging
from pathlib import Path

import jsonschema
import pytest

from maskfill import (
    FillCandidate,
    FillerUnavailable,
    Prompt,
    ProtocolError,
    RemoteFiller,
    ServiceEndpoint,
    ServiceError,
    canonical_json,
    corpus_from_lines,
)

from stub_server import StubServer

WIRE = Path(__file__).parent / "fixtures" / "wire"


def load_fixture(name):
    return json.loads((WIRE / f"{name}.json").read_text())


def make_filler(base_url, *, timeout=5.0, retries=2, version="base"):
    return RemoteFiller(ServiceEndpoint(base_url, timeout=timeout, retries=retries, model_version=version))


def fill_response(body):
    return 200, load_fixture("fill")["response_example"]


def test_request_bodies_are_canonical_golden_bytes():
    for name in ("fill", "finetune", "generate"):
        fx = load_fixture(name)
        assert canonical_json(fx["request"]) == fx["golden_request_bytes"].encode("utf-8")


def test_candidates_pass_through_and_record_golden_request():
    fx = load_fixture("fill")
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, fx["response_example"])
        filler = make_filler(stub.base_url)
        cands = filler.candidates(["tom", "lives", "in"], [], 3)
    assert cands == [
        FillCandidate("chicago", 0.5),
        FillCandidate("boston", 0.3),
        FillCandidate("paris", 0.2),
    ]
    method, path, body = stub.requests[0]
    assert (method, path) == ("POST", "/fill")
    assert body == fx["golden_request_bytes"].encode("utf-8")
    jsonschema.validate(fx["response_example"], fx["response_schema"])


def test_stub_fixture_responses_conform_to_schemas():
    for name in ("fill", "finetune", "generate", "health", "error"):
        fx = load_fixture(name)
        jsonschema.validate(fx["response_example"], fx["response_schema"])


def test_unsorted_candidates_are_resorted_with_warning(caplog):
    payload = {
        "candidates": [
            {"token": "b", "score": 0.1},
            {"token": "a", "score": 0.9},
        ],
        "model_version": "base",
    }
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, payload)
        filler = make_filler(stub.base_url)
        with caplog.at_level(logging.WARNING, logger="maskfill.remote"):
            cands = filler.candidates([], [], 2)
    assert [c.token for c in cands] == ["a", "b"]
    assert any("re-sorting" in r.message for r in caplog.records)


def test_tie_scores_are_canonicalized_lexicographically():
    payload = {
        "candidates": [
            {"token": "zeta", "score": 0.5},
            {"token": "alpha", "score": 0.5},
        ],
        "model_version": "base",
    }
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, payload)
        cands = make_filler(stub.base_url).candidates([], [], 2)
    assert [c.token for c in cands] == ["alpha", "zeta"]


def test_marker_and_whitespace_candidates_are_filtered():
    payload = {
        "candidates": [
            {"token": "[MASK]", "score": 0.9},
            {"token": "two words", "score": 0.8},
            {"token": "", "score": 0.7},
            {"token": "ok", "score": 0.1},
        ],
        "model_version": "base",
    }
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, payload)
        cands = make_filler(stub.base_url).candidates([], [], 4)
    assert cands == [FillCandidate("ok", 0.1)]


def test_candidates_truncated_to_k():
    fx = load_fixture("fill")
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, fx["response_example"])
        cands = make_filler(stub.base_url).candidates([], [], 2)
    assert len(cands) == 2


def test_timeout_retries_exactly_then_unavailable():
    with StubServer() as stub:
        stub.delay = 1.0
        stub.static("POST", "/fill", 200, {"candidates": [], "model_version": "base"})
        filler = make_filler(stub.base_url, timeout=0.15, retries=2)
        with pytest.raises(FillerUnavailable):
            filler.candidates([], [], 1)
        assert len(stub.requests) == 3  # retries=2 means exactly 3 attempts


def test_connection_refused_raises_unavailable():
    filler = make_filler("http://127.0.0.1:9", timeout=0.2, retries=1)
    with pytest.raises(FillerUnavailable):
        filler.candidates([], [], 1)


def test_schema_violation_raises_protocol_error_with_excerpt():
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, {"surprise": True})
        with pytest.raises(ProtocolError, match="surprise"):
            make_filler(stub.base_url).candidates([], [], 1)


def test_malformed_candidate_rejected():
    payload = {"candidates": [{"token": 5, "score": 0.5}], "model_version": "base"}
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, payload)
        with pytest.raises(ProtocolError):
            make_filler(stub.base_url).candidates([], [], 1)


def test_non_positive_score_rejected():
    payload = {"candidates": [{"token": "a", "score": 0.0}], "model_version": "base"}
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, payload)
        with pytest.raises(ProtocolError):
            make_filler(stub.base_url).candidates([], [], 1)


def test_non_json_and_non_utf8_payloads_raise_protocol_error():
    with StubServer() as stub:
        stub.static("POST", "/fill", 200, b"not json at all")
        with pytest.raises(ProtocolError, match="not JSON"):
            make_filler(stub.base_url).candidates([], [], 1)
    with StubServer() as stub:
        stub.static("POST", "/generate", 200, b"\xff\xfe\xfd")
        with pytest.raises(ProtocolError, match="UTF-8"):
            make_filler(stub.base_url).generate(Prompt(input="x [MASK]"))


def test_application_error_surfaces_server_message():
    with StubServer() as stub:
        stub.static("POST", "/fill", 404, {"error": "unknown model version"})
        with pytest.raises(ServiceError, match="unknown model version") as exc:
            make_filler(stub.base_url).candidates([], [], 1)
        assert exc.value.status == 404


def test_finetune_returns_and_adopts_new_version():
    fx = load_fixture("finetune")
    versions = iter(["ft-1", "ft-2"])
    with StubServer() as stub:
        stub.route("POST", "/finetune", lambda body: (200, {"model_version": next(versions)}))
        stub.static("POST", "/fill", 200, load_fixture("fill")["response_example"])
        filler = make_filler(stub.base_url)
        corpus = corpus_from_lines(["tom lives in chicago", "he works in boston"])
        v1 = filler.remote_finetune(corpus)
        assert v1 == "ft-1"
        assert stub.requests[0][2] == fx["golden_request_bytes"].encode("utf-8")
        filler.candidates([], [], 1)
        sent = json.loads(stub.requests[1][2])
        assert sent["model_version"] == "ft-1"
        v2 = filler.remote_finetune(corpus)
        assert v2 == "ft-2"
        assert v2 != v1


def test_finetune_rejects_empty_corpus_client_side():
    with StubServer() as stub:
        filler = make_filler(stub.base_url)
        with pytest.raises(ValueError):
            filler.remote_finetune(corpus_from_lines([]))
        assert stub.requests == []


def test_finetune_capability_returns_filler():
    with StubServer() as stub:
        stub.static("POST", "/finetune", 200, {"model_version": "ft-9"})
        filler = make_filler(stub.base_url)
        out = filler.finetune(corpus_from_lines(["a b"]))
        assert out is filler
        assert filler.model_version == "ft-9"


def test_generate_round_trip_and_golden_request():
    fx = load_fixture("generate")
    with StubServer() as stub:
        stub.static("POST", "/generate", 200, fx["response_example"])
        filler = make_filler(stub.base_url)
        text = filler.generate(Prompt(input="[MASK] lives in [MASK]"))
    assert text == "tom lives in chicago"
    assert stub.requests[0][2] == fx["golden_request_bytes"].encode("utf-8")


def test_generate_feeds_parse_generation():
    from maskfill import MaskedSentence, parse_generation

    with StubServer() as stub:
        stub.static("POST", "/generate", 200, {"text": "tom lives in chicago"})
        filler = make_filler(stub.base_url)
        text = filler.generate(Prompt(input="[MASK] lives in [MASK]"))
    ms = MaskedSentence(("[MASK]", "lives", "in", "[MASK]"), 4, 0)
    assert parse_generation(text, ms).tokens == ("tom", "lives", "in", "chicago")


def test_empty_generation_misaligns_downstream():
    from maskfill import MaskedSentence, ParseMisaligned, parse_generation

    with StubServer() as stub:
        stub.static("POST", "/generate", 200, {"text": ""})
        text = make_filler(stub.base_url).generate(Prompt(input="a [MASK]"))
    with pytest.raises(ParseMisaligned):
        parse_generation(text, MaskedSentence(("a", "[MASK]"), 2, 0))


def test_health_discovers_model_version():
    fx = load_fixture("health")
    with StubServer() as stub:
        stub.static("GET", "/health", 200, fx["response_example"])
        stub.static("POST", "/fill", 200, load_fixture("fill")["response_example"])
        filler = RemoteFiller(ServiceEndpoint(stub.base_url))
        assert filler.model_version is None
        filler.candidates([], [], 1)
        assert filler.model_version == "base"
        assert stub.requests[0][:2] == ("GET", "/health")


def test_endpoint_validation():
    with pytest.raises(ValueError):
        ServiceEndpoint("http://x", timeout=0)
    with pytest.raises(ValueError):
        ServiceEndpoint("http://x", retries=-1)
