"""Disfluency-annotated utterances: markup parsing, BIO tags, stripping, rates.

Markup grammar (whitespace-separated, one utterance per string):

    {F ...}    filler               e.g.  {F uh}
    {E ...}    editing term         e.g.  {E I mean}
    {D ...}    discourse marker     e.g.  {D you know}
    [ A + B ]  restart: reparandum A, interruption point '+', repair B
    [ A + ]    deletion restart (empty repair)
    <sil>      silent pause
    word-      false-start fragment (trailing hyphen)

Brackets nest. A bare fragment or ``<sil>`` outside any disfluency region is
wrapped in an implicit single-token reparandum / silent-pause span, so that
stripping an utterance always yields plain words.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    EmptyBraceError,
    EmptyUtteranceError,
    IllFormedTagSequenceError,
    InvalidUtteranceError,
    LengthMismatchError,
    MarkupError,
    MissingInterruptionPointError,
    UnbalancedBracketError,
)

SILENT_PAUSE_TEXT = "<sil>"


class TokenKind(str, Enum):
    WORD = "word"
    FILLED_PAUSE = "filled_pause"
    SILENT_PAUSE = "silent_pause"
    FALSE_START_FRAGMENT = "false_start_fragment"


class SpanKind(str, Enum):
    FILLER = "filler"
    REPARANDUM = "reparandum"
    REPAIR = "repair"
    SILENT_PAUSE = "silent_pause"
    EDITING_TERM = "editing_term"
    DISCOURSE_MARKER = "discourse_marker"


#: Tokens covered by a span of one of these kinds are disfluent: they are
#: removed by strip_disfluencies() and counted by disfluency_rate().
REMOVED_SPAN_KINDS = frozenset(
    {SpanKind.FILLER, SpanKind.REPARANDUM, SpanKind.EDITING_TERM, SpanKind.SILENT_PAUSE}
)

#: BIO label for each span kind; None means the tokens are tagged O.
#: Editing terms share the filler label so that stripping stays recoverable
#: from tags alone; discourse markers are kept by stripping and stay outside.
BIO_LABEL_BY_SPAN_KIND = {
    SpanKind.FILLER: "FL",
    SpanKind.REPARANDUM: "RM",
    SpanKind.REPAIR: "RP",
    SpanKind.SILENT_PAUSE: "SP",
    SpanKind.EDITING_TERM: "FL",
    SpanKind.DISCOURSE_MARKER: None,
}

SPAN_KIND_BY_BIO_LABEL = {
    "FL": SpanKind.FILLER,
    "RM": SpanKind.REPARANDUM,
    "RP": SpanKind.REPAIR,
    "SP": SpanKind.SILENT_PAUSE,
}

BIO_LABELS = frozenset(SPAN_KIND_BY_BIO_LABEL)


def _is_fragment_text(text: str) -> bool:
    """True for a non-empty stem followed by exactly one trailing hyphen."""
    return len(text) >= 2 and text.endswith("-") and not text.endswith("--")


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind = TokenKind.WORD

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if any(c.isspace() for c in self.text):
            raise ValueError(f"token text may not contain whitespace: {self.text!r}")
        if self.kind is TokenKind.SILENT_PAUSE:
            if self.text != SILENT_PAUSE_TEXT:
                raise ValueError(
                    f"silent-pause tokens must be {SILENT_PAUSE_TEXT!r}, got {self.text!r}"
                )
        elif self.text == SILENT_PAUSE_TEXT:
            raise ValueError(f"{SILENT_PAUSE_TEXT!r} is reserved for silent-pause tokens")
        if self.kind is TokenKind.FALSE_START_FRAGMENT and not _is_fragment_text(self.text):
            raise ValueError(
                f"fragment text must end in a single hyphen after a stem: {self.text!r}"
            )


@dataclass(frozen=True)
class DisfluencySpan:
    kind: SpanKind
    start: int
    end: int
    depth: int = 0

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"span must satisfy 0 <= start < end, got {self.start}..{self.end}")
        if self.depth < 0:
            raise ValueError("span depth must be >= 0")

    def covers(self, index: int) -> bool:
        return self.start <= index < self.end

    def strictly_contains(self, other: "DisfluencySpan") -> bool:
        return (
            self.start <= other.start
            and other.end <= self.end
            and (self.start, self.end) != (other.start, other.end)
        )


def _document_order(span: DisfluencySpan) -> tuple[int, int]:
    # Outer spans sort before the spans they contain.
    return (span.start, -span.end)


@dataclass(frozen=True)
class AnnotatedUtterance:
    """A token sequence plus properly nested disfluency spans.

    Spans are kept in document order (by start, outermost first). Invariants
    are checked at construction time.
    """

    tokens: tuple[Token, ...]
    spans: tuple[DisfluencySpan, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "spans", tuple(sorted(self.spans, key=_document_order)))
        _validate_utterance(self.tokens, self.spans)

    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def _validate_utterance(tokens: tuple[Token, ...], spans: tuple[DisfluencySpan, ...]) -> None:
    n = len(tokens)
    for sp in spans:
        if sp.end > n:
            raise InvalidUtteranceError(f"span {sp.start}..{sp.end} exceeds {n} tokens")

    # Proper nesting: any two spans are disjoint or one strictly contains the
    # other; identical extents are not allowed.
    for i, a in enumerate(spans):
        for b in spans[i + 1 :]:
            if b.start >= a.end:
                continue
            if (a.start, a.end) == (b.start, b.end):
                raise InvalidUtteranceError(
                    f"spans {a.kind.value} and {b.kind.value} share extent {a.start}..{a.end}"
                )
            if b.end > a.end:
                raise InvalidUtteranceError(
                    f"spans {a.start}..{a.end} and {b.start}..{b.end} overlap without nesting"
                )

    for sp in spans:
        expected = sum(1 for other in spans if other.strictly_contains(sp))
        if sp.depth != expected:
            raise InvalidUtteranceError(
                f"span {sp.kind.value} {sp.start}..{sp.end} has depth {sp.depth}, expected {expected}"
            )

    in_filler = [False] * n
    in_sil = [False] * n
    removed = [False] * n
    for sp in spans:
        for i in range(sp.start, sp.end):
            if sp.kind is SpanKind.FILLER:
                in_filler[i] = True
            elif sp.kind is SpanKind.SILENT_PAUSE:
                in_sil[i] = True
            if sp.kind in REMOVED_SPAN_KINDS:
                removed[i] = True

    for i, tok in enumerate(tokens):
        if tok.kind is TokenKind.FILLED_PAUSE and not in_filler[i]:
            raise InvalidUtteranceError(f"filled pause {tok.text!r} at {i} outside any filler span")
        if tok.kind is TokenKind.SILENT_PAUSE and not in_sil[i]:
            raise InvalidUtteranceError(f"silent pause at {i} outside any silent-pause span")
        if tok.kind is not TokenKind.SILENT_PAUSE and in_sil[i]:
            raise InvalidUtteranceError(
                f"silent-pause span covers non-pause token {tok.text!r} at {i}"
            )
        if not removed[i] and tok.kind is not TokenKind.WORD:
            raise InvalidUtteranceError(
                f"{tok.kind.value} token {tok.text!r} at {i} would survive stripping"
            )

    # Every repair must trace back to a reparandum through abutting sibling
    # spans: filler/editing-term material between the two is allowed, and so
    # are earlier repairs (repair chains arise when nested restarts are
    # flattened to depth 0 by the BIO encoding).
    parents = _parent_indices(spans)
    sibling_end: dict[tuple[int | None, int], DisfluencySpan] = {}
    for idx, sp in enumerate(spans):
        sibling_end[(parents[idx], sp.end)] = sp
    for idx, sp in enumerate(spans):
        if sp.kind is not SpanKind.REPAIR:
            continue
        parent = parents[idx]
        cursor = sp.start
        ok = False
        while True:
            prev = sibling_end.get((parent, cursor))
            if prev is None:
                break
            if prev.kind is SpanKind.REPARANDUM:
                ok = True
                break
            if prev.kind in (SpanKind.FILLER, SpanKind.EDITING_TERM, SpanKind.REPAIR):
                cursor = prev.start
                continue
            break
        if not ok:
            raise InvalidUtteranceError(
                f"repair span {sp.start}..{sp.end} is not preceded by a reparandum"
            )


def _parent_indices(spans: tuple[DisfluencySpan, ...]) -> list[int | None]:
    """Index of the tightest containing span for each span, or None."""
    parents: list[int | None] = []
    for i, sp in enumerate(spans):
        best: int | None = None
        for j, other in enumerate(spans):
            if j == i or not other.strictly_contains(sp):
                continue
            if best is None or spans[best].strictly_contains(other):
                best = j
        parents.append(best)
    return parents


def _with_depths(raw: list[tuple[SpanKind, int, int]]) -> list[DisfluencySpan]:
    spans = []
    for kind, start, end in raw:
        depth = sum(
            1
            for k2, s2, e2 in raw
            if s2 <= start and end <= e2 and (s2, e2) != (start, end)
        )
        spans.append(DisfluencySpan(kind, start, end, depth))
    return spans


# --- parsing ----------------------------------------------------------------

_BRACE_KINDS = {"F": SpanKind.FILLER, "E": SpanKind.EDITING_TERM, "D": SpanKind.DISCOURSE_MARKER}
_STRUCTURAL_CHARS = set("[]{}")


class _Bracket:
    __slots__ = ("offset", "start", "plus")

    def __init__(self, offset: int, start: int):
        self.offset = offset
        self.start = start
        self.plus: int | None = None


class _Brace:
    __slots__ = ("offset", "kind", "start")

    def __init__(self, offset: int, kind: SpanKind, start: int):
        self.offset = offset
        self.kind = kind
        self.start = start


def _byte_offset(markup: str, char_index: int) -> int:
    return len(markup[:char_index].encode("utf-8"))


def _lex(markup: str):
    """Yield (lexeme, char_offset) pairs; structural characters stand alone."""
    i = 0
    n = len(markup)
    while i < n:
        c = markup[i]
        if c.isspace():
            i += 1
            continue
        if c in "]}":
            yield c, i
            i += 1
        elif c == "[":
            yield c, i
            i += 1
        elif c == "{":
            j = i + 1
            while j < n and not markup[j].isspace() and markup[j] not in _STRUCTURAL_CHARS:
                j += 1
            yield markup[i:j], i
            i = j
        else:
            j = i
            while j < n and not markup[j].isspace() and markup[j] not in _STRUCTURAL_CHARS:
                j += 1
            yield markup[i:j], i
            i = j


def parse_annotated(markup: str) -> AnnotatedUtterance:
    """Parse one line of disfluency markup into an annotated utterance.

    Raises MarkupError (UnbalancedBracketError, MissingInterruptionPointError,
    EmptyBraceError, or the base class) with the byte offset of the problem.
    """
    tokens: list[Token] = []
    # (kind, start, end, owner); owner is the enclosing frame count, used to
    # tell direct children of a bracket from spans nested deeper inside it.
    recorded: list[tuple[SpanKind, int, int, int]] = []
    stack: list[_Bracket | _Brace] = []

    def err(cls, message: str, char_index: int) -> MarkupError:
        return cls(message, _byte_offset(markup, char_index))

    for lexeme, off in _lex(markup):
        if lexeme == "[":
            if stack and isinstance(stack[-1], _Brace):
                raise err(MarkupError, "bracket may not open inside a brace", off)
            stack.append(_Bracket(off, len(tokens)))
        elif lexeme == "]":
            if not stack or not isinstance(stack[-1], _Bracket):
                raise err(UnbalancedBracketError, "unmatched ']'", off)
            frame = stack.pop()
            end = len(tokens)
            if frame.plus is None:
                raise err(
                    MissingInterruptionPointError,
                    "bracket closed without an interruption point",
                    frame.offset,
                )
            owner = len(stack) + 1
            recorded.append((SpanKind.REPARANDUM, frame.start, frame.plus, len(stack)))
            cursor = frame.plus
            while True:
                skip_end = None
                for kind, s, e, o in recorded:
                    if (
                        o == owner
                        and s == cursor
                        and e <= end
                        and kind in (SpanKind.FILLER, SpanKind.EDITING_TERM)
                    ):
                        skip_end = e if skip_end is None else max(skip_end, e)
                if skip_end is None:
                    break
                cursor = skip_end
            if cursor < end:
                recorded.append((SpanKind.REPAIR, cursor, end, len(stack)))
        elif lexeme == "}":
            if not stack or not isinstance(stack[-1], _Brace):
                raise err(UnbalancedBracketError, "unmatched '}'", off)
            frame = stack.pop()
            if len(tokens) == frame.start:
                raise err(EmptyBraceError, "brace contains no tokens", frame.offset)
            recorded.append((frame.kind, frame.start, len(tokens), len(stack)))
        elif lexeme.startswith("{"):
            if stack and isinstance(stack[-1], _Brace):
                raise err(MarkupError, "brace may not open inside a brace", off)
            marker = lexeme[1:]
            if marker not in _BRACE_KINDS:
                raise err(MarkupError, f"unknown brace kind {marker!r}", off)
            stack.append(_Brace(off, _BRACE_KINDS[marker], len(tokens)))
        elif lexeme == "+":
            if not stack or not isinstance(stack[-1], _Bracket):
                raise err(MarkupError, "interruption point outside a bracket", off)
            frame = stack[-1]
            if frame.plus is not None:
                raise err(MarkupError, "duplicate interruption point", off)
            if len(tokens) == frame.start:
                raise err(MarkupError, "empty reparandum", off)
            frame.plus = len(tokens)
        else:
            if lexeme == SILENT_PAUSE_TEXT:
                recorded.append((SpanKind.SILENT_PAUSE, len(tokens), len(tokens) + 1, len(stack)))
                tokens.append(Token(lexeme, TokenKind.SILENT_PAUSE))
            elif _is_fragment_text(lexeme):
                tokens.append(Token(lexeme, TokenKind.FALSE_START_FRAGMENT))
            elif (
                stack
                and isinstance(stack[-1], _Brace)
                and stack[-1].kind is SpanKind.FILLER
            ):
                tokens.append(Token(lexeme, TokenKind.FILLED_PAUSE))
            else:
                tokens.append(Token(lexeme, TokenKind.WORD))

    if stack:
        raise err(UnbalancedBracketError, "unclosed bracket or brace", stack[-1].offset)

    raw = [(kind, s, e) for kind, s, e, _ in recorded]

    # Wrap bare fragments in implicit single-token reparanda so stripping
    # yields plain words.
    wrapping = (SpanKind.FILLER, SpanKind.REPARANDUM, SpanKind.EDITING_TERM)
    for i, tok in enumerate(tokens):
        if tok.kind is not TokenKind.FALSE_START_FRAGMENT:
            continue
        if not any(kind in wrapping and s <= i < e for kind, s, e in raw):
            raw.append((SpanKind.REPARANDUM, i, i + 1))

    try:
        return AnnotatedUtterance(tuple(tokens), tuple(_with_depths(raw)))
    except InvalidUtteranceError as exc:
        raise MarkupError(f"markup yields an invalid utterance: {exc}", 0) from exc


# --- serialization ----------------------------------------------------------

_BRACE_MARKERS = {
    SpanKind.FILLER: "{F",
    SpanKind.EDITING_TERM: "{E",
    SpanKind.DISCOURSE_MARKER: "{D",
}


def serialize_markup(utterance: AnnotatedUtterance) -> str:
    """Render an annotated utterance back to markup.

    Inverse of parse_annotated: for any utterance produced by the grammar,
    parsing the serialized form reproduces the utterance exactly.
    """
    spans = utterance.spans
    parents = _parent_indices(spans)
    children: dict[int | None, list[int]] = {}
    for idx in range(len(spans)):
        children.setdefault(parents[idx], []).append(idx)

    def emit(lo: int, hi: int, parent: int | None) -> list[str]:
        kids = children.get(parent, [])
        parts: list[str] = []
        pos = lo
        ki = 0
        while pos < hi:
            if ki < len(kids) and spans[kids[ki]].start == pos:
                idx = kids[ki]
                sp = spans[idx]
                if sp.kind is SpanKind.REPARANDUM:
                    seg = ["[", *emit(sp.start, sp.end, idx), "+"]
                    pos = sp.end
                    ki += 1
                    # Fold abutting filler/editing-term siblings plus the
                    # repair into the same bracket when a repair follows.
                    chain: list[int] = []
                    kj = ki
                    cur = pos
                    while (
                        kj < len(kids)
                        and spans[kids[kj]].start == cur
                        and spans[kids[kj]].kind in (SpanKind.FILLER, SpanKind.EDITING_TERM)
                    ):
                        chain.append(kids[kj])
                        cur = spans[kids[kj]].end
                        kj += 1
                    if (
                        kj < len(kids)
                        and spans[kids[kj]].start == cur
                        and spans[kids[kj]].kind is SpanKind.REPAIR
                    ):
                        for cidx in chain:
                            csp = spans[cidx]
                            seg.append(_emit_brace(csp, emit(csp.start, csp.end, cidx)))
                        rep = spans[kids[kj]]
                        seg.extend(emit(rep.start, rep.end, kids[kj]))
                        pos = rep.end
                        ki = kj + 1
                    seg.append("]")
                    parts.extend(seg)
                elif sp.kind in _BRACE_MARKERS:
                    parts.append(_emit_brace(sp, emit(sp.start, sp.end, idx)))
                    pos = sp.end
                    ki += 1
                elif sp.kind is SpanKind.REPAIR:
                    # Normally consumed while emitting its reparandum; reached
                    # only for repair chains, which come from flattened nested
                    # restarts and have no bracket form.
                    raise ValueError(
                        f"repair span {sp.start}..{sp.end} has no adjacent "
                        "reparandum; this structure is not representable in markup"
                    )
                else:
                    # Silent-pause spans: the reserved token text carries them.
                    parts.extend(emit(sp.start, sp.end, idx))
                    pos = sp.end
                    ki += 1
            else:
                parts.append(utterance.tokens[pos].text)
                pos += 1
        return parts

    return " ".join(emit(0, len(utterance.tokens), None))


def _emit_brace(span: DisfluencySpan, inner: list[str]) -> str:
    return f"{_BRACE_MARKERS[span.kind]} {' '.join(inner)}}}"


# --- BIO tagging -------------------------------------------------------------


@dataclass(frozen=True)
class BioTag:
    position: str  # "B", "I", or "O"
    label: str | None = None  # "RM", "RP", "FL", or "SP"; None only for O

    def __post_init__(self):
        if self.position not in ("B", "I", "O"):
            raise ValueError(f"position must be B, I, or O, got {self.position!r}")
        if self.position == "O":
            if self.label is not None:
                raise ValueError("O tags carry no label")
        elif self.label not in BIO_LABELS:
            raise ValueError(f"label must be one of {sorted(BIO_LABELS)}, got {self.label!r}")

    def __str__(self) -> str:
        return self.position if self.position == "O" else f"{self.position}-{self.label}"

    @classmethod
    def parse(cls, text: str) -> "BioTag":
        if text == "O":
            return cls("O")
        if len(text) > 2 and text[1] == "-":
            return cls(text[0], text[2:])
        raise ValueError(f"not a BIO tag: {text!r}")


def _innermost_span_indices(utterance: AnnotatedUtterance) -> list[int | None]:
    innermost: list[int | None] = [None] * len(utterance.tokens)
    # Document order lists outer spans before the spans they contain, so the
    # last covering span is the innermost.
    for idx, sp in enumerate(utterance.spans):
        for i in range(sp.start, sp.end):
            innermost[i] = idx
    return innermost


def to_bio(utterance: AnnotatedUtterance) -> list[BioTag]:
    """Flatten to one tag per token; nested spans resolve innermost-first."""
    innermost = _innermost_span_indices(utterance)
    tags: list[BioTag] = []
    for i in range(len(utterance.tokens)):
        idx = innermost[i]
        label = None if idx is None else BIO_LABEL_BY_SPAN_KIND[utterance.spans[idx].kind]
        if label is None:
            tags.append(BioTag("O"))
            continue
        starts = i == 0 or innermost[i - 1] != idx
        tags.append(BioTag("B" if starts else "I", label))
    return tags


def from_bio(tokens: list[Token], tags: list[BioTag]) -> AnnotatedUtterance:
    """Rebuild a depth-0 annotated utterance from tokens plus BIO tags."""
    if len(tokens) != len(tags):
        raise LengthMismatchError(f"{len(tokens)} tokens vs {len(tags)} tags")
    spans: list[DisfluencySpan] = []
    open_label: str | None = None
    open_start = 0

    def close(end: int):
        nonlocal open_label
        if open_label is not None:
            spans.append(DisfluencySpan(SPAN_KIND_BY_BIO_LABEL[open_label], open_start, end))
            open_label = None

    for i, tag in enumerate(tags):
        if tag.position == "B":
            close(i)
            open_label = tag.label
            open_start = i
        elif tag.position == "I":
            if open_label is None or tag.label != open_label:
                raise IllFormedTagSequenceError(
                    f"I-{tag.label} at position {i} does not continue an open {tag.label} span"
                )
        else:
            close(i)
    close(len(tags))
    return AnnotatedUtterance(tuple(tokens), tuple(spans))


# --- stripping and rates ------------------------------------------------------


def disfluent_token_indices(utterance: AnnotatedUtterance) -> set[int]:
    """Indices of tokens covered by filler, reparandum, editing-term, or
    silent-pause spans (repairs and discourse markers count as fluent)."""
    covered: set[int] = set()
    for sp in utterance.spans:
        if sp.kind in REMOVED_SPAN_KINDS:
            covered.update(range(sp.start, sp.end))
    return covered


def strip_disfluencies(utterance: AnnotatedUtterance) -> list[Token]:
    """Remove disfluent tokens, keeping repairs and unspanned tokens in order."""
    covered = disfluent_token_indices(utterance)
    return [tok for i, tok in enumerate(utterance.tokens) if i not in covered]


def disfluency_rate(utterance: AnnotatedUtterance) -> float:
    """Fraction of tokens that stripping would remove."""
    if not utterance.tokens:
        raise EmptyUtteranceError("disfluency rate is undefined for an empty utterance")
    return len(disfluent_token_indices(utterance)) / len(utterance.tokens)


def word_tokens(texts: list[str]) -> list[Token]:
    """Build plain word tokens for fluent input text."""
    return [Token(t) for t in texts]
