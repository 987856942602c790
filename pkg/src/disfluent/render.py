"""Render annotated utterances as plain TTS-ready text."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .annotation import AnnotatedUtterance, SpanKind, TokenKind


@dataclass(frozen=True)
class RenderStyle:
    """Controls how annotation details surface in rendered text.

    silent_pause_surface: text emitted for a silent pause token.
    keep_filler_tokens: drop tokens covered by filler spans when False.
    fragment_hyphen: strip the trailing hyphen from word fragments when False.
    """

    silent_pause_surface: str = "..."
    keep_filler_tokens: bool = True
    fragment_hyphen: bool = True

    def __post_init__(self):
        if not self.silent_pause_surface:
            raise ValueError("silent_pause_surface must be non-empty")


DEFAULT_STYLE = RenderStyle()


def render_tts(utterance: AnnotatedUtterance, style: RenderStyle = DEFAULT_STYLE) -> str:
    """Produce speakable text: token surfaces joined by single spaces, with no
    markup characters."""
    filler_covered = {
        i
        for span in utterance.spans
        if span.kind is SpanKind.FILLER
        for i in range(span.start, span.end)
    }
    pieces: list[str] = []
    for i, token in enumerate(utterance.tokens):
        if not style.keep_filler_tokens and i in filler_covered:
            continue
        if token.kind is TokenKind.SILENT_PAUSE:
            pieces.append(style.silent_pause_surface)
        elif token.kind is TokenKind.FALSE_START_FRAGMENT and not style.fragment_hyphen:
            pieces.append(token.text[:-1])
        else:
            pieces.append(token.text)
    return " ".join(pieces)


def render_many(
    utterances: Iterable[AnnotatedUtterance], style: RenderStyle = DEFAULT_STYLE
) -> list[str]:
    return [render_tts(u, style) for u in utterances]


def export_jsonl(utterances: Sequence[AnnotatedUtterance], path: str | Path) -> None:
    """Write utterances to a JSONL file (same record shape the corpus loader
    reads)."""
    from .corpus import save_corpus

    save_corpus(utterances, path, fmt="jsonl")
