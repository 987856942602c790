"""Corpus loading, parallel fluent/disfluent pairs, statistics, and splits.

Supported corpus file formats (all UTF-8 with LF line endings):

* ``markup``: one annotated utterance per non-empty line.
* ``bio``: one ``token<TAB>tag`` row per line, blank line between utterances.
* ``jsonl``: one object per line with keys ``fluent`` (list of strings),
  ``disfluent`` (list of strings), and ``spans`` (list of
  ``[kind, start, end, depth]`` entries).
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from .annotation import (
    AnnotatedUtterance,
    BioTag,
    DisfluencySpan,
    SpanKind,
    Token,
    TokenKind,
    SILENT_PAUSE_TEXT,
    _is_fragment_text,
    disfluent_token_indices,
    from_bio,
    parse_annotated,
    serialize_markup,
    strip_disfluencies,
    to_bio,
)
from .errors import (
    BadFractionError,
    DisfluentError,
    EmptyCorpusError,
    FormatError,
)
from .inserter import align_pair

if TYPE_CHECKING:
    from .inserter import Alignment

logger = logging.getLogger(__name__)

CORPUS_FORMATS = ("markup", "bio", "jsonl")


@dataclass(frozen=True)
class ParallelPair:
    """A fluent token sequence with its aligned disfluent utterance."""

    fluent: tuple[Token, ...]
    disfluent: AnnotatedUtterance
    alignment: "Alignment"


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    avg_fluent_tokens: float
    avg_disfluent_tokens: float
    total_fluent_tokens: int
    total_disfluent_tokens: int
    rate_micro: float
    rate_macro: float


# --- record encoding (jsonl contract) ----------------------------------------


def utterance_to_record(utterance: AnnotatedUtterance) -> dict:
    return {
        "fluent": [t.text for t in strip_disfluencies(utterance)],
        "disfluent": utterance.token_texts(),
        "spans": [[sp.kind.value, sp.start, sp.end, sp.depth] for sp in utterance.spans],
    }


def record_to_utterance(record: dict) -> AnnotatedUtterance:
    for key in ("fluent", "disfluent", "spans"):
        if key not in record:
            raise ValueError(f"record is missing the {key!r} key")
    spans = []
    for entry in record["spans"]:
        kind, start, end, depth = entry
        spans.append(DisfluencySpan(SpanKind(kind), int(start), int(end), int(depth)))
    texts = [str(t) for t in record["disfluent"]]
    tokens = [_infer_token(text, i, spans) for i, text in enumerate(texts)]
    utterance = AnnotatedUtterance(tuple(tokens), tuple(spans))
    fluent = [t.text for t in strip_disfluencies(utterance)]
    if fluent != [str(t) for t in record["fluent"]]:
        raise ValueError("fluent field does not match the stripped disfluent tokens")
    return utterance


def _infer_token(text: str, index: int, spans: list[DisfluencySpan]) -> Token:
    if text == SILENT_PAUSE_TEXT:
        return Token(text, TokenKind.SILENT_PAUSE)
    if _is_fragment_text(text):
        return Token(text, TokenKind.FALSE_START_FRAGMENT)
    if any(sp.kind is SpanKind.FILLER and sp.covers(index) for sp in spans):
        return Token(text, TokenKind.FILLED_PAUSE)
    return Token(text)


def _bio_token(text: str, label: str | None) -> Token:
    if text == SILENT_PAUSE_TEXT:
        return Token(text, TokenKind.SILENT_PAUSE)
    if _is_fragment_text(text):
        return Token(text, TokenKind.FALSE_START_FRAGMENT)
    if label == "FL":
        return Token(text, TokenKind.FILLED_PAUSE)
    return Token(text)


# --- loading and saving -------------------------------------------------------


def load_corpus(path: str | Path, fmt: str = "markup") -> list[AnnotatedUtterance]:
    """Load a corpus file; one utterance per non-empty record.

    Raises OSError for unreadable paths and FormatError (with a 1-based line
    number) for records that cannot be decoded.
    """
    if fmt not in CORPUS_FORMATS:
        raise ValueError(f"format must be one of {CORPUS_FORMATS}, got {fmt!r}")
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "markup":
        return _load_markup(text)
    if fmt == "jsonl":
        return _load_jsonl(text)
    return _load_bio(text)


def _load_markup(text: str) -> list[AnnotatedUtterance]:
    utterances = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            utterances.append(parse_annotated(line))
        except DisfluentError as exc:
            raise FormatError(lineno, str(exc)) from exc
    return utterances


def _load_jsonl(text: str) -> list[AnnotatedUtterance]:
    utterances = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            utterances.append(record_to_utterance(record))
        except (json.JSONDecodeError, DisfluentError, ValueError, TypeError) as exc:
            raise FormatError(lineno, str(exc)) from exc
    return utterances


def _load_bio(text: str) -> list[AnnotatedUtterance]:
    utterances = []
    rows: list[tuple[str, BioTag]] = []
    block_start = 1

    def flush(lineno: int):
        nonlocal rows
        if not rows:
            return
        try:
            tokens = [_bio_token(t, tag.label) for t, tag in rows]
            utterances.append(from_bio(tokens, [tag for _, tag in rows]))
        except (DisfluentError, ValueError) as exc:
            raise FormatError(lineno, str(exc)) from exc
        rows = []

    lineno = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            flush(block_start)
            block_start = lineno + 1
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise FormatError(lineno, f"expected 'token<TAB>tag', got {line!r}")
        try:
            rows.append((parts[0], BioTag.parse(parts[1])))
        except ValueError as exc:
            raise FormatError(lineno, str(exc)) from exc
    flush(block_start)
    return utterances


def save_corpus(utterances: list[AnnotatedUtterance], path: str | Path, fmt: str = "markup") -> None:
    """Write a corpus file in the given format (see load_corpus)."""
    if fmt not in CORPUS_FORMATS:
        raise ValueError(f"format must be one of {CORPUS_FORMATS}, got {fmt!r}")
    Path(path).write_text(dump_corpus(utterances, fmt), encoding="utf-8", newline="\n")


def dump_corpus(utterances: list[AnnotatedUtterance], fmt: str = "markup") -> str:
    if fmt == "markup":
        lines = [serialize_markup(u) for u in utterances]
    elif fmt == "jsonl":
        lines = [
            json.dumps(utterance_to_record(u), ensure_ascii=False, separators=(",", ":"))
            for u in utterances
        ]
    else:
        blocks = []
        for u in utterances:
            tags = to_bio(u)
            blocks.append("\n".join(f"{t.text}\t{tag}" for t, tag in zip(u.tokens, tags)))
        lines = ["\n\n".join(blocks)] if blocks else []
        return (lines[0] + "\n") if lines else ""
    return "".join(line + "\n" for line in lines)


# --- pairing, statistics, splitting -------------------------------------------


def build_pairs(corpus: list[AnnotatedUtterance]) -> list[ParallelPair]:
    """Pair each utterance with its stripped fluent side.

    Utterances that strip to zero tokens are dropped; the number dropped is
    logged as a warning.
    """
    pairs = []
    dropped = 0
    for utterance in corpus:
        fluent = strip_disfluencies(utterance)
        if not fluent:
            dropped += 1
            continue
        alignment = align_pair(fluent, list(utterance.tokens))
        pairs.append(ParallelPair(tuple(fluent), utterance, alignment))
    if dropped:
        logger.warning("dropped %d utterance(s) that strip to zero tokens", dropped)
    return pairs


def compute_stats(pairs: list[ParallelPair]) -> CorpusStats:
    """Aggregate token counts and disfluency rates over parallel pairs."""
    if not pairs:
        raise EmptyCorpusError("cannot compute statistics for an empty corpus")
    total_fluent = sum(len(p.fluent) for p in pairs)
    total_disfluent = sum(len(p.disfluent.tokens) for p in pairs)
    disfluent_tokens = sum(len(disfluent_token_indices(p.disfluent)) for p in pairs)
    per_utterance = [
        len(disfluent_token_indices(p.disfluent)) / len(p.disfluent.tokens) for p in pairs
    ]
    return CorpusStats(
        n_sentences=len(pairs),
        avg_fluent_tokens=total_fluent / len(pairs),
        avg_disfluent_tokens=total_disfluent / len(pairs),
        total_fluent_tokens=total_fluent,
        total_disfluent_tokens=total_disfluent,
        rate_micro=disfluent_tokens / total_disfluent,
        rate_macro=sum(per_utterance) / len(per_utterance),
    )


def split_corpus(
    corpus: list[AnnotatedUtterance], test_fraction: float, seed: int
) -> tuple[list[AnnotatedUtterance], list[AnnotatedUtterance]]:
    """Deterministic train/test split; test size is round(n * test_fraction).

    Both splits preserve the original corpus order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise BadFractionError(f"test fraction must be in (0, 1), got {test_fraction}")
    if not corpus:
        raise EmptyCorpusError("cannot split an empty corpus")
    n = len(corpus)
    k = int(round(n * test_fraction))
    rng = random.Random(seed)
    test_indices = set(rng.sample(range(n), k))
    train = [u for i, u in enumerate(corpus) if i not in test_indices]
    test = [u for i, u in enumerate(corpus) if i in test_indices]
    return train, test
