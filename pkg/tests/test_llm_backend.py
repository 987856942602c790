"""Fine-tune config export and the remote insertion client (against a local
stub HTTP server)."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from disfluent.annotation import SpanKind, parse_annotated, strip_disfluencies
from disfluent.errors import (
    InvalidOverrideError,
    RemoteHttpError,
    RemoteTimeoutError,
    RoundTripViolationError,
    UnparseableCompletionError,
)
from disfluent.llm_backend import (
    PROMPT_VERSION,
    REMOTE_TOKEN_ENV,
    REMOTE_URL_ENV,
    FinetuneConfig,
    RemoteEndpoint,
    build_prompt,
    endpoint_from_env,
    export_finetune_config,
    insert_remote,
    normalize_completion,
    validate_completion,
    write_finetune_config,
)


def tokens_of(text: str):
    return list(parse_annotated(text).tokens)


# --- fine-tune config ---------------------------------------------------------------


class TestFinetuneConfig:
    def test_defaults(self):
        config = FinetuneConfig()
        assert config.base_model == "Llama-2-7b-chat-hf"
        assert config.lora_rank == 32
        assert config.lora_alpha == 64
        assert config.lora_dropout == 0.1
        assert config.learning_rate == 2e-4
        assert config.max_seq_len == 200
        assert config.batch_size == 2
        assert config.grad_accum_steps == 4

    def test_single_override(self):
        config = export_finetune_config({"lora_rank": 8})
        assert config.lora_rank == 8
        assert config.lora_alpha == 64  # untouched default

    def test_unknown_field(self):
        with pytest.raises(InvalidOverrideError) as exc:
            export_finetune_config({"weight_decay": 0.01})
        assert exc.value.field == "weight_decay"

    def test_invalid_value(self):
        with pytest.raises(InvalidOverrideError) as exc:
            export_finetune_config({"lora_rank": 0})
        assert exc.value.field == "lora_rank"

    @pytest.mark.parametrize(
        "field,value",
        [
            ("base_model", ""),
            ("lora_rank", -4),
            ("lora_rank", 2.5),
            ("lora_rank", True),
            ("lora_dropout", 1.0),
            ("lora_dropout", -0.1),
            ("learning_rate", 0.0),
            ("max_seq_len", 0),
            ("batch_size", 0),
            ("grad_accum_steps", 0),
        ],
    )
    def test_validation_edges(self, field, value):
        with pytest.raises(ValueError):
            FinetuneConfig(**{field: value})

    def test_to_json_deterministic_and_sorted(self):
        text = FinetuneConfig().to_json()
        assert text == FinetuneConfig().to_json()
        assert text.endswith("\n")
        payload = json.loads(text)
        assert list(payload) == sorted(payload)
        assert payload["base_model"] == "Llama-2-7b-chat-hf"

    def test_write_round_trip(self, tmp_path):
        target = tmp_path / "finetune.json"
        config = export_finetune_config({"batch_size": 8})
        write_finetune_config(config, target)
        assert json.loads(target.read_text(encoding="utf-8"))["batch_size"] == 8


# --- prompt and completion handling ---------------------------------------------------


class TestPrompt:
    def test_contains_utterance_and_marker(self):
        prompt = build_prompt(tokens_of("I like cats"))
        assert "Utterance: I like cats\n" in prompt
        assert prompt.endswith("Annotated:")

    def test_braces_in_template_survive_format(self):
        prompt = build_prompt(tokens_of("x"))
        assert "{F um}" in prompt and "{E I mean}" in prompt


class TestNormalizeCompletion:
    def test_wraps_bare_fillers(self):
        assert normalize_completion("um I agree") == "{F um} I agree"

    def test_casefolds_filler_match(self):
        assert normalize_completion("Um go") == "{F Um} go"

    def test_leaves_fillers_inside_braces_alone(self):
        assert normalize_completion("{F um} go") == "{F um} go"
        assert normalize_completion("{E um well} go") == "{E um well} go"

    def test_trims_whitespace(self):
        assert normalize_completion("  a b  ") == "a b"


class TestValidateCompletion:
    def test_accepts_annotated_superset(self):
        fluent = tokens_of("I agree")
        utterance = validate_completion("{F um} [ I + I ] agree", fluent)
        assert [t.text for t in strip_disfluencies(utterance)] == ["I", "agree"]

    def test_rejects_bad_markup(self):
        with pytest.raises(UnparseableCompletionError):
            validate_completion("[ oops I agree", tokens_of("I agree"))

    def test_rejects_word_changes(self):
        with pytest.raises(RoundTripViolationError):
            validate_completion("I concur", tokens_of("I agree"))

    def test_rejects_reordering(self):
        with pytest.raises(RoundTripViolationError):
            validate_completion("agree I", tokens_of("I agree"))


# --- remote client against a stub server ----------------------------------------------


class StubHandler(BaseHTTPRequestHandler):
    """Scriptable completion server; class attributes configure one scenario."""

    script: list[dict] = []  # per-request actions, last one repeats
    requests_seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        record = {
            "body": raw.decode("utf-8"),
            "auth": self.headers.get("Authorization"),
        }
        type(self).requests_seen.append(record)
        action = self.script[min(len(self.requests_seen) - 1, len(self.script) - 1)]

        status = action.get("status", 200)
        if "raw" in action:
            payload = action["raw"].encode("utf-8")
        else:
            prompt = json.loads(record["body"])["prompt"]
            utterance = prompt.split("Utterance: ", 1)[1].split("\n", 1)[0]
            completion = action["completion_fn"](utterance)
            payload = json.dumps({"completion": completion}).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # keep pytest output clean
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    StubHandler.script = []
    StubHandler.requests_seen = []
    yield f"http://127.0.0.1:{server.server_port}/complete"
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


class TestInsertRemote:
    def test_echo_yields_no_spans(self, stub_server):
        StubHandler.script = [{"completion_fn": lambda u: u}]
        result = insert_remote(RemoteEndpoint(stub_server), tokens_of("I like it"))
        assert [t.text for t in result.tokens] == ["I", "like", "it"]
        assert result.spans == ()

    def test_filler_prefix_yields_filler_span(self, stub_server):
        StubHandler.script = [{"completion_fn": lambda u: "{F um} " + u}]
        result = insert_remote(RemoteEndpoint(stub_server), tokens_of("I like it"))
        assert len(result.spans) == 1
        span = result.spans[0]
        assert span.kind is SpanKind.FILLER
        assert (span.start, span.end) == (0, 1)

    def test_bare_filler_is_normalized(self, stub_server):
        StubHandler.script = [{"completion_fn": lambda u: "uh " + u}]
        result = insert_remote(RemoteEndpoint(stub_server), tokens_of("fine"))
        assert result.spans[0].kind is SpanKind.FILLER

    def test_unrelated_answer_is_round_trip_violation(self, stub_server):
        StubHandler.script = [{"completion_fn": lambda u: "something else entirely"}]
        with pytest.raises(RoundTripViolationError):
            insert_remote(RemoteEndpoint(stub_server), tokens_of("I like it"))

    def test_retry_after_500_succeeds(self, stub_server):
        StubHandler.script = [
            {"status": 500, "raw": "boom"},
            {"completion_fn": lambda u: u},
        ]
        result = insert_remote(
            RemoteEndpoint(stub_server, max_retries=2), tokens_of("all good")
        )
        assert [t.text for t in result.tokens] == ["all", "good"]
        assert len(StubHandler.requests_seen) == 2

    def test_retries_send_identical_bodies(self, stub_server):
        StubHandler.script = [
            {"status": 503, "raw": "busy"},
            {"status": 503, "raw": "busy"},
            {"completion_fn": lambda u: u},
        ]
        insert_remote(RemoteEndpoint(stub_server, max_retries=2), tokens_of("go"))
        bodies = [r["body"] for r in StubHandler.requests_seen]
        assert len(bodies) == 3
        assert len(set(bodies)) == 1
        payload = json.loads(bodies[0])
        assert payload["prompt_version"] == PROMPT_VERSION
        assert set(payload) == {"prompt", "prompt_version"}

    def test_persistent_500_raises_http_error(self, stub_server):
        StubHandler.script = [{"status": 500, "raw": "boom"}]
        with pytest.raises(RemoteHttpError) as exc:
            insert_remote(RemoteEndpoint(stub_server, max_retries=1), tokens_of("go"))
        assert exc.value.status == 500
        assert len(StubHandler.requests_seen) == 2  # initial try + one retry

    def test_404_fails_immediately(self, stub_server):
        StubHandler.script = [{"status": 404, "raw": "nope"}]
        with pytest.raises(RemoteHttpError) as exc:
            insert_remote(RemoteEndpoint(stub_server, max_retries=3), tokens_of("go"))
        assert exc.value.status == 404
        assert len(StubHandler.requests_seen) == 1

    def test_unreachable_host_times_out(self):
        # unroutable per RFC 5737; connection errors count against retries
        endpoint = RemoteEndpoint("http://192.0.2.1:9/", timeout=0.2, max_retries=1)
        with pytest.raises(RemoteTimeoutError):
            insert_remote(endpoint, tokens_of("go"))

    def test_non_json_body_unparseable(self, stub_server):
        StubHandler.script = [{"status": 200, "raw": "not json"}]
        with pytest.raises(UnparseableCompletionError):
            insert_remote(RemoteEndpoint(stub_server), tokens_of("go"))

    def test_missing_completion_key_unparseable(self, stub_server):
        StubHandler.script = [{"status": 200, "raw": '{"answer": "go"}'}]
        with pytest.raises(UnparseableCompletionError):
            insert_remote(RemoteEndpoint(stub_server), tokens_of("go"))

    def test_non_string_completion_unparseable(self, stub_server):
        StubHandler.script = [{"status": 200, "raw": '{"completion": 7}'}]
        with pytest.raises(UnparseableCompletionError):
            insert_remote(RemoteEndpoint(stub_server), tokens_of("go"))

    def test_bearer_header_sent(self, stub_server):
        StubHandler.script = [{"completion_fn": lambda u: u}]
        endpoint = RemoteEndpoint(stub_server, auth_token="s3cret")
        insert_remote(endpoint, tokens_of("go"))
        assert StubHandler.requests_seen[0]["auth"] == "Bearer s3cret"

    def test_no_token_no_header(self, stub_server):
        StubHandler.script = [{"completion_fn": lambda u: u}]
        insert_remote(RemoteEndpoint(stub_server), tokens_of("go"))
        assert StubHandler.requests_seen[0]["auth"] is None

    def test_empty_input_rejected(self, stub_server):
        with pytest.raises(ValueError):
            insert_remote(RemoteEndpoint(stub_server), [])


class TestEndpointConfig:
    def test_endpoint_validation(self):
        with pytest.raises(ValueError):
            RemoteEndpoint("")
        with pytest.raises(ValueError):
            RemoteEndpoint("http://x", timeout=0)
        with pytest.raises(ValueError):
            RemoteEndpoint("http://x", max_retries=-1)

    def test_endpoint_from_env(self, monkeypatch):
        monkeypatch.setenv(REMOTE_URL_ENV, "http://example.test/v1")
        monkeypatch.setenv(REMOTE_TOKEN_ENV, "tok")
        endpoint = endpoint_from_env(timeout=3.0)
        assert endpoint.base_url == "http://example.test/v1"
        assert endpoint.auth_token == "tok"
        assert endpoint.timeout == 3.0

    def test_endpoint_from_env_unset(self, monkeypatch):
        monkeypatch.delenv(REMOTE_URL_ENV, raising=False)
        with pytest.raises(ValueError):
            endpoint_from_env()
