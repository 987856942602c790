"""LLM integration: LoRA fine-tune config export and a remote insertion client.

The remote service receives a fluent utterance inside a fixed prompt and must
answer with the same words under disfluency markup. Completions are validated
by parsing them and checking that stripping the annotations reproduces the
input exactly; anything else is rejected rather than repaired.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import requests

from .annotation import (
    AnnotatedUtterance,
    Token,
    parse_annotated,
    strip_disfluencies,
)
from .errors import (
    InvalidOverrideError,
    MarkupError,
    RemoteHttpError,
    RemoteTimeoutError,
    RoundTripViolationError,
    UnparseableCompletionError,
)
from .inserter import FILLER_WORDS

REMOTE_URL_ENV = "DISFLUENT_REMOTE_URL"
REMOTE_TOKEN_ENV = "DISFLUENT_REMOTE_TOKEN"

PROMPT_VERSION = "v1"
PROMPT_TEMPLATE = (
    "Rewrite the utterance below as disfluent speech. Keep every original word "
    "in order and add only disfluencies, using this markup: fillers as "
    "{{F um}}, editing terms as {{E I mean}}, discourse markers as {{D well}}, "
    "restarts as [ reparandum + repair ], and silent pauses as <sil>. "
    "Answer with the annotated utterance only.\n"
    "Utterance: {utterance}\n"
    "Annotated:"
)


# --- fine-tune configuration -----------------------------------------------------


@dataclass(frozen=True)
class FinetuneConfig:
    """Hyperparameters for a LoRA fine-tune of a chat model on pair data."""

    base_model: str = "Llama-2-7b-chat-hf"
    lora_rank: int = 32
    lora_alpha: int = 64
    lora_dropout: float = 0.1
    learning_rate: float = 2e-4
    max_seq_len: int = 200
    batch_size: int = 2
    grad_accum_steps: int = 4

    def __post_init__(self):
        if not self.base_model:
            raise ValueError("base_model must be non-empty")
        for name in ("lora_rank", "lora_alpha", "max_seq_len", "batch_size", "grad_accum_steps"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 <= self.lora_dropout < 1.0:
            raise ValueError(f"lora_dropout must lie in [0, 1), got {self.lora_dropout}")
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


_FINETUNE_FIELDS = {f.name for f in fields(FinetuneConfig)}


def export_finetune_config(overrides: dict | None = None) -> FinetuneConfig:
    """Build a config from defaults plus overrides, rejecting unknown or
    invalid fields."""
    overrides = dict(overrides or {})
    for name in overrides:
        if name not in _FINETUNE_FIELDS:
            raise InvalidOverrideError(name, "unknown field")
    try:
        return FinetuneConfig(**overrides)
    except ValueError as exc:
        bad = next(iter(overrides))
        for name in overrides:
            if name in str(exc):
                bad = name
                break
        raise InvalidOverrideError(bad, str(exc)) from exc


def write_finetune_config(config: FinetuneConfig, path: str | Path) -> None:
    Path(path).write_text(config.to_json(), encoding="utf-8")


# --- remote insertion client ------------------------------------------------------


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    timeout: float = 30.0
    max_retries: int = 2
    auth_token: str | None = None

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def endpoint_from_env(**kwargs) -> RemoteEndpoint:
    """Build an endpoint from DISFLUENT_REMOTE_URL / DISFLUENT_REMOTE_TOKEN."""
    url = os.environ.get(REMOTE_URL_ENV)
    if not url:
        raise ValueError(f"{REMOTE_URL_ENV} is not set")
    token = os.environ.get(REMOTE_TOKEN_ENV) or None
    return RemoteEndpoint(base_url=url, auth_token=token, **kwargs)


def build_prompt(fluent: list[Token]) -> str:
    return PROMPT_TEMPLATE.format(utterance=" ".join(t.text for t in fluent))


def insert_remote(endpoint: RemoteEndpoint, fluent: list[Token]) -> AnnotatedUtterance:
    """Ask a remote model to add disfluencies to ``fluent``.

    Retries timeouts, connection failures, and 5xx responses up to
    ``endpoint.max_retries`` extra attempts with an identical body. 4xx
    responses fail immediately. The completion must parse as annotation markup
    and strip back to exactly the input words.
    """
    if not fluent:
        raise ValueError("fluent input must be non-empty")
    body = {"prompt": build_prompt(fluent), "prompt_version": PROMPT_VERSION}
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"

    attempts = endpoint.max_retries + 1
    last_error: Exception | None = None
    response = None
    for _ in range(attempts):
        try:
            response = requests.post(
                endpoint.base_url, json=body, headers=headers, timeout=endpoint.timeout
            )
        except requests.Timeout as exc:
            last_error = exc
            continue
        except requests.ConnectionError as exc:
            last_error = exc
            continue
        if response.status_code >= 500:
            last_error = RemoteHttpError(
                response.status_code, f"server error: {response.status_code}"
            )
            continue
        break
    else:
        if isinstance(last_error, RemoteHttpError):
            raise last_error
        raise RemoteTimeoutError(
            f"no response from {endpoint.base_url} after {attempts} attempt(s): {last_error}"
        )

    if response.status_code >= 400:
        raise RemoteHttpError(
            response.status_code, f"request rejected: {response.status_code}"
        )

    try:
        payload = response.json()
    except ValueError as exc:
        raise UnparseableCompletionError(f"response body is not JSON: {exc}") from exc
    if not isinstance(payload, dict) or "completion" not in payload:
        raise UnparseableCompletionError('response JSON lacks a "completion" field')
    completion = payload["completion"]
    if not isinstance(completion, str):
        raise UnparseableCompletionError('"completion" must be a string')

    return validate_completion(completion, fluent)


def normalize_completion(completion: str) -> str:
    """Light cleanup of model output before parsing: trim whitespace and wrap
    bare filler words (outside any braces) in {F ...}."""
    lexemes = completion.strip().split()
    depth = 0
    out: list[str] = []
    for lexeme in lexemes:
        if depth == 0 and lexeme.casefold() in FILLER_WORDS:
            out.append("{F " + lexeme + "}")
        else:
            out.append(lexeme)
        depth += lexeme.count("{") - lexeme.count("}")
    return " ".join(out)


def validate_completion(completion: str, fluent: list[Token]) -> AnnotatedUtterance:
    """Parse a completion and require it to strip back to the input words."""
    normalized = normalize_completion(completion)
    try:
        utterance = parse_annotated(normalized)
    except MarkupError as exc:
        raise UnparseableCompletionError(
            f"completion is not valid markup: {exc}"
        ) from exc
    produced = [t.text for t in strip_disfluencies(utterance)]
    expected = [t.text for t in fluent]
    if produced != expected:
        raise RoundTripViolationError(
            "completion does not preserve the input words: "
            f"expected {' '.join(expected)!r}, got {' '.join(produced)!r}"
        )
    return utterance
