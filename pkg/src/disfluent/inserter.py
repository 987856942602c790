"""Statistical disfluency insertion: alignment, events, training, generation.

A fluent utterance has n+1 insertion boundaries (before each token and after
the last). The model scores each boundary from two context features, the
position bucket (start / early / mid / late) and the class of the previous
token (none / word / filler / pause), and generation scales those scores so
the expected fraction of inserted tokens in the output matches the requested
disfluency rate. Every inserted token is covered by a filler, reparandum, or
silent-pause span, so stripping the generated utterance always returns the
exact input words.
"""

from __future__ import annotations

import json
import random
from bisect import bisect_left
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .annotation import (
    AnnotatedUtterance,
    DisfluencySpan,
    SpanKind,
    Token,
    TokenKind,
    SILENT_PAUSE_TEXT,
    _with_depths,
)
from .errors import (
    EmptyInputError,
    EmptyTrainingSetError,
    ModelVersionError,
    NonMonotonicPairError,
    RateUnreachableError,
)

if TYPE_CHECKING:
    from .corpus import ParallelPair

#: Tokens treated as fillers when no annotation says otherwise.
FILLER_WORDS = frozenset(
    {"um", "uh", "erm", "er", "ah", "eh", "hm", "hmm", "mm", "mhm", "uh-huh", "huh"}
)

POSITION_BUCKETS = ("start", "early", "mid", "late")
PREV_CLASSES = ("none", "word", "filler", "pause")

#: Probability assigned to a boundary context never seen in training,
#: i.e. the add-one smoothed value (0 + 1) / (0 + 2).
UNSEEN_CONTEXT_PROB = 0.5

MODEL_FORMAT_VERSION = 1

MAX_REPETITION_LENGTH = 3

_MASK64 = (1 << 64) - 1


class EventKind(str, Enum):
    REPETITION = "repetition"
    FILLER = "filler"
    FALSE_START = "false_start"
    SILENT_PAUSE = "silent_pause"
    SUBSTITUTION = "substitution"


#: Fixed iteration order so that sampling is reproducible.
EVENT_KIND_ORDER = (
    EventKind.REPETITION,
    EventKind.FILLER,
    EventKind.FALSE_START,
    EventKind.SILENT_PAUSE,
    EventKind.SUBSTITUTION,
)


@dataclass(frozen=True)
class DisfluencyEvent:
    """One disfluency anchored at a fluent boundary.

    ``anchor`` is the index of the fluent token the inserted material
    precedes; anchor == len(fluent) places it after the last token.
    ``length`` is the repetition length k; ``tokens`` carries the inserted
    texts for filler, silent-pause, and substitution events and the single
    fragment for false starts.
    """

    kind: EventKind
    anchor: int
    length: int = 0
    tokens: tuple[str, ...] = ()


@dataclass(frozen=True)
class Alignment:
    """Monotone map from fluent indices to disfluent indices.

    ``targets[i]`` is the position of fluent token i on the disfluent side.
    """

    targets: tuple[int, ...]

    def __post_init__(self):
        for a, b in zip(self.targets, self.targets[1:]):
            if b <= a:
                raise ValueError("alignment targets must be strictly increasing")
        if self.targets and self.targets[0] < 0:
            raise ValueError("alignment targets must be non-negative")


def align_pair(fluent: Sequence[Token], disfluent: Sequence[Token]) -> Alignment:
    """Map each fluent token to the latest matching disfluent occurrence.

    Preferring the rightmost feasible occurrence keeps inserted material in
    front of the retained copy, which is where restart reparanda live.
    Raises NonMonotonicPairError when the fluent side is not an in-order
    subsequence of the disfluent side.
    """
    targets = [0] * len(fluent)
    j = len(disfluent) - 1
    for i in range(len(fluent) - 1, -1, -1):
        text = fluent[i].text
        while j >= 0 and disfluent[j].text != text:
            j -= 1
        if j < 0:
            raise NonMonotonicPairError(
                f"fluent token {text!r} at {i} has no in-order match on the disfluent side"
            )
        targets[i] = j
        j -= 1
    return Alignment(tuple(targets))


def _is_filler_token(token: Token) -> bool:
    return token.kind is TokenKind.FILLED_PAUSE or token.text.casefold() in FILLER_WORDS


def extract_events(pair: "ParallelPair") -> list[DisfluencyEvent]:
    """Classify each maximal run of unaligned disfluent tokens as one event.

    Priority: false start, then silent pause, repetition, filler, and
    substitution as the catch-all. Events are returned in anchor order.
    """
    fluent = pair.fluent
    dis = pair.disfluent.tokens
    targets = list(pair.alignment.targets)
    aligned = set(targets)
    events: list[DisfluencyEvent] = []
    i = 0
    while i < len(dis):
        if i in aligned:
            i += 1
            continue
        j = i
        while j < len(dis) and j not in aligned:
            j += 1
        run = dis[i:j]
        anchor = bisect_left(targets, i)
        events.append(_classify_run(run, anchor, fluent))
        i = j
    return events


def _classify_run(
    run: Sequence[Token], anchor: int, fluent: Sequence[Token]
) -> DisfluencyEvent:
    texts = tuple(t.text for t in run)
    if (
        len(run) == 1
        and run[0].kind is TokenKind.FALSE_START_FRAGMENT
        and anchor < len(fluent)
    ):
        stem = texts[0][:-1].casefold()
        target = fluent[anchor].text.casefold()
        if target.startswith(stem) and stem != target:
            return DisfluencyEvent(EventKind.FALSE_START, anchor, tokens=texts)
    if all(t.kind is TokenKind.SILENT_PAUSE for t in run):
        return DisfluencyEvent(EventKind.SILENT_PAUSE, anchor, tokens=texts)
    following = tuple(t.text for t in fluent[anchor : anchor + len(run)])
    if texts == following and len(following) == len(run):
        return DisfluencyEvent(EventKind.REPETITION, anchor, length=len(run))
    if all(_is_filler_token(t) for t in run):
        return DisfluencyEvent(EventKind.FILLER, anchor, tokens=texts)
    return DisfluencyEvent(EventKind.SUBSTITUTION, anchor, tokens=texts)


# --- boundary context ---------------------------------------------------------


def boundary_context(fluent: Sequence[Token], boundary: int) -> tuple[str, str]:
    """Context features for the boundary before fluent token ``boundary``."""
    n = len(fluent)
    if boundary == 0:
        return "start", "none"
    fraction = boundary / n
    if fraction <= 1 / 3:
        bucket = "early"
    elif fraction <= 2 / 3:
        bucket = "mid"
    else:
        bucket = "late"
    prev = fluent[boundary - 1]
    if prev.kind is TokenKind.SILENT_PAUSE:
        prev_class = "pause"
    elif _is_filler_token(prev):
        prev_class = "filler"
    else:
        prev_class = "word"
    return bucket, prev_class


# --- the model -----------------------------------------------------------------


@dataclass(frozen=True)
class InsertionModel:
    """Event statistics estimated from aligned fluent/disfluent pairs.

    ``boundary_prob`` maps (position bucket, previous-token class) to the
    add-one smoothed probability that a boundary with that context carries an
    event. Contexts absent from the table fall back to UNSEEN_CONTEXT_PROB.
    """

    boundary_prob: dict[tuple[str, str], float]
    type_dist: dict[EventKind, float]
    filler_lexicon: dict[str, float]
    repetition_len_dist: dict[int, float]
    trained_rate: float

    def __post_init__(self):
        for dist, name in (
            (self.type_dist, "type_dist"),
            (self.filler_lexicon, "filler_lexicon"),
            (self.repetition_len_dist, "repetition_len_dist"),
        ):
            if dist and abs(sum(dist.values()) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")
            if any(p < 0 for p in dist.values()):
                raise ValueError(f"{name} must be non-negative")
        for prob in self.boundary_prob.values():
            if not 0.0 <= prob <= 1.0:
                raise ValueError("boundary probabilities must lie in [0, 1]")
        if not 0.0 <= self.trained_rate <= 1.0:
            raise ValueError("trained_rate must lie in [0, 1]")

    def context_prob(self, context: tuple[str, str]) -> float:
        return self.boundary_prob.get(context, UNSEEN_CONTEXT_PROB)


def train_model(pairs: Sequence["ParallelPair"]) -> InsertionModel:
    """Estimate boundary, type, filler, and repetition-length statistics."""
    usable = [p for p in pairs if p.fluent]
    if not usable:
        raise EmptyTrainingSetError("training needs at least one pair with a fluent token")

    hits: dict[tuple[str, str], int] = {}
    totals: dict[tuple[str, str], int] = {}
    type_counts: dict[EventKind, int] = {}
    filler_counts: dict[str, int] = {}
    rep_len_counts: dict[int, int] = {}
    span_tokens = 0
    all_tokens = 0

    from .annotation import disfluent_token_indices

    for pair in usable:
        events = extract_events(pair)
        anchors = {e.anchor for e in events}
        n = len(pair.fluent)
        for b in range(n + 1):
            context = boundary_context(pair.fluent, b)
            totals[context] = totals.get(context, 0) + 1
            if b in anchors:
                hits[context] = hits.get(context, 0) + 1
        for event in events:
            type_counts[event.kind] = type_counts.get(event.kind, 0) + 1
            if event.kind is EventKind.FILLER:
                for text in event.tokens:
                    filler_counts[text] = filler_counts.get(text, 0) + 1
            elif event.kind is EventKind.REPETITION:
                k = min(event.length, MAX_REPETITION_LENGTH)
                rep_len_counts[k] = rep_len_counts.get(k, 0) + 1
        span_tokens += len(disfluent_token_indices(pair.disfluent))
        all_tokens += len(pair.disfluent.tokens)

    boundary_prob = {c: (hits.get(c, 0) + 1) / (t + 2) for c, t in totals.items()}
    return InsertionModel(
        boundary_prob=boundary_prob,
        type_dist=_normalize(type_counts),
        filler_lexicon=_normalize(filler_counts),
        repetition_len_dist=_normalize(rep_len_counts),
        trained_rate=span_tokens / all_tokens if all_tokens else 0.0,
    )


def _normalize(counts: dict) -> dict:
    total = sum(counts.values())
    if total == 0:
        return {}
    return {k: v / total for k, v in counts.items()}


def save_model(model: InsertionModel, path: str | Path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "boundary_prob": {f"{b}|{p}": v for (b, p), v in sorted(model.boundary_prob.items())},
        "type_dist": {k.value: v for k, v in sorted(model.type_dist.items())},
        "filler_lexicon": dict(sorted(model.filler_lexicon.items())),
        "repetition_len_dist": {str(k): v for k, v in sorted(model.repetition_len_dist.items())},
        "trained_rate": model.trained_rate,
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def load_model(path: str | Path) -> InsertionModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    boundary_prob = {}
    for key, value in payload["boundary_prob"].items():
        bucket, _, prev = key.partition("|")
        boundary_prob[(bucket, prev)] = float(value)
    return InsertionModel(
        boundary_prob=boundary_prob,
        type_dist={EventKind(k): float(v) for k, v in payload["type_dist"].items()},
        filler_lexicon={k: float(v) for k, v in payload["filler_lexicon"].items()},
        repetition_len_dist={int(k): float(v) for k, v in payload["repetition_len_dist"].items()},
        trained_rate=float(payload["trained_rate"]),
    )


# --- generation -----------------------------------------------------------------


@dataclass(frozen=True)
class GenerationConfig:
    seed: int
    target_rate: float
    max_events_per_utterance: int = 16
    allow_kinds: frozenset[EventKind] = frozenset(EVENT_KIND_ORDER)

    def __post_init__(self):
        object.__setattr__(self, "allow_kinds", frozenset(self.allow_kinds))
        if not 0.0 <= self.target_rate <= 0.9:
            raise ValueError(f"target_rate must lie in [0, 0.9], got {self.target_rate}")
        if self.max_events_per_utterance < 0:
            raise ValueError("max_events_per_utterance must be >= 0")
        if not self.allow_kinds:
            raise ValueError("allow_kinds must not be empty")


def derive_seed(seed: int, ordinal: int) -> int:
    """Mix a base seed with an utterance ordinal (splitmix64 finalizer)."""
    x = (seed + 0x9E3779B97F4A7C15 * (ordinal + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def _expected_tokens_per_event(
    type_dist: dict[EventKind, float], rep_len_dist: dict[int, float]
) -> float:
    rep_mean = sum(k * p for k, p in rep_len_dist.items()) if rep_len_dist else 1.0
    cost = {
        EventKind.REPETITION: rep_mean,
        EventKind.FILLER: 1.0,
        EventKind.FALSE_START: 1.0,
        EventKind.SILENT_PAUSE: 1.0,
        EventKind.SUBSTITUTION: 2.0,
    }
    return sum(p * cost[k] for k, p in type_dist.items())


def _fragment_for(text: str) -> str | None:
    if len(text) < 2:
        return None
    prefix = text[: (len(text) + 1) // 2]
    if prefix.endswith("-") or len(prefix) >= len(text):
        return None
    return prefix + "-"


def _feasible(kind: EventKind, boundary: int, fluent: Sequence[Token], lexicon_ok: bool) -> bool:
    n = len(fluent)
    if kind is EventKind.SILENT_PAUSE:
        return True
    if kind is EventKind.FILLER:
        return lexicon_ok
    if boundary >= n:
        return False
    if kind is EventKind.REPETITION:
        return True
    if kind is EventKind.FALSE_START:
        return _fragment_for(fluent[boundary].text) is not None
    return lexicon_ok  # substitution


def insert(
    model: InsertionModel, fluent: Sequence[Token], config: GenerationConfig
) -> AnnotatedUtterance:
    """Insert disfluencies into plain word tokens at a calibrated rate.

    Boundary draws are independent given the seed: raising target_rate with
    the same seed only ever adds events. Raises RateUnreachableError when the
    expected number of events needed exceeds max_events_per_utterance, or
    when no allowed event kind has probability mass.
    """
    fluent = list(fluent)
    if not fluent:
        raise EmptyInputError("cannot insert into an empty utterance")
    for tok in fluent:
        if tok.kind is not TokenKind.WORD:
            raise ValueError(f"fluent input must be plain words, got {tok.kind.value}")
    n = len(fluent)
    rng = random.Random(config.seed)
    rate = config.target_rate

    scale = 0.0
    allowed: dict[EventKind, float] = {}
    if rate > 0.0:
        mass = {
            k: model.type_dist.get(k, 0.0)
            for k in EVENT_KIND_ORDER
            if k in config.allow_kinds and model.type_dist.get(k, 0.0) > 0.0
        }
        if not mass:
            raise RateUnreachableError("no allowed event kind has probability mass")
        total = sum(mass.values())
        allowed = {k: p / total for k, p in mass.items()}
        per_event = _expected_tokens_per_event(allowed, model.repetition_len_dist)
        need_tokens = n * rate / (1.0 - rate)
        if need_tokens / per_event > config.max_events_per_utterance:
            raise RateUnreachableError(
                f"target rate {rate} needs about {need_tokens / per_event:.1f} events, "
                f"over the limit of {config.max_events_per_utterance}"
            )
        base = sum(model.context_prob(boundary_context(fluent, b)) for b in range(n + 1))
        scale = need_tokens / (per_event * base)

    draws = [rng.random() for _ in range(n + 1)]
    selected = [
        b
        for b in range(n + 1)
        if draws[b] < min(1.0, scale * model.context_prob(boundary_context(fluent, b)))
    ]
    selected = selected[: config.max_events_per_utterance]

    lexicon_ok = bool(model.filler_lexicon)
    lexicon_tokens = sorted(model.filler_lexicon)
    lexicon_weights = [model.filler_lexicon[t] for t in lexicon_tokens]
    rep_lens = sorted(model.repetition_len_dist) or [1]
    rep_weights = [model.repetition_len_dist.get(k, 1.0) for k in rep_lens]
    kind_order = [k for k in EVENT_KIND_ORDER if k in allowed]
    kind_weights = [allowed[k] for k in kind_order]

    events: list[DisfluencyEvent] = []
    repair_ends: list[int] = []
    for b in selected:
        while repair_ends and b >= repair_ends[-1]:
            repair_ends.pop()
        kind = rng.choices(kind_order, weights=kind_weights)[0]
        if not _feasible(kind, b, fluent, lexicon_ok):
            kind = next(
                (k for k in EVENT_KIND_ORDER if k in allowed and _feasible(k, b, fluent, lexicon_ok)),
                None,
            )
            if kind is None:
                continue
        if kind is EventKind.REPETITION:
            cap = min(n, repair_ends[-1] if repair_ends else n) - b
            k = min(rng.choices(rep_lens, weights=rep_weights)[0], cap)
            events.append(DisfluencyEvent(EventKind.REPETITION, b, length=k))
            repair_ends.append(b + k)
        elif kind is EventKind.FILLER:
            token = rng.choices(lexicon_tokens, weights=lexicon_weights)[0]
            events.append(DisfluencyEvent(EventKind.FILLER, b, tokens=(token,)))
        elif kind is EventKind.FALSE_START:
            fragment = _fragment_for(fluent[b].text)
            assert fragment is not None
            events.append(DisfluencyEvent(EventKind.FALSE_START, b, tokens=(fragment,)))
        elif kind is EventKind.SILENT_PAUSE:
            events.append(DisfluencyEvent(EventKind.SILENT_PAUSE, b, tokens=(SILENT_PAUSE_TEXT,)))
        else:
            edit = rng.choices(lexicon_tokens, weights=lexicon_weights)[0]
            events.append(
                DisfluencyEvent(EventKind.SUBSTITUTION, b, tokens=(fluent[b].text, edit))
            )
    return apply_events(fluent, events)


def insert_many(
    model: InsertionModel, utterances: Iterable[Sequence[Token]], config: GenerationConfig
) -> list[AnnotatedUtterance]:
    """Insert into a batch; utterance i uses an RNG stream derived from
    (seed, i), so outputs do not depend on batching or evaluation order."""
    return [
        insert(model, tokens, replace(config, seed=derive_seed(config.seed, i)))
        for i, tokens in enumerate(utterances)
    ]


# --- realization ----------------------------------------------------------------


def apply_events(
    fluent: Sequence[Token], events: Sequence[DisfluencyEvent]
) -> AnnotatedUtterance:
    """Realize events over fluent tokens as an annotated utterance.

    Events must be sorted by anchor with at most one event per boundary, and
    a repetition may not cross the end of an enclosing repetition's repair.
    Stripping the result returns the input tokens exactly.
    """
    fluent = list(fluent)
    n = len(fluent)
    _validate_events(fluent, events)

    materials: dict[int, tuple[list[Token], list[tuple[SpanKind, int, int]]]] = {}
    for event in events:
        materials[event.anchor] = _material_for(event, fluent)

    out: list[Token] = []
    positions = [0] * n
    raw_spans: list[tuple[SpanKind, int, int]] = []
    for b in range(n + 1):
        mat = materials.get(b)
        if mat is not None:
            tokens, local_spans = mat
            base = len(out)
            out.extend(tokens)
            raw_spans.extend((kind, base + s, base + e) for kind, s, e in local_spans)
        if b < n:
            positions[b] = len(out)
            out.append(fluent[b])

    for event in events:
        if event.kind is EventKind.REPETITION:
            start = positions[event.anchor]
            end = positions[event.anchor + event.length - 1] + 1
            raw_spans.append((SpanKind.REPAIR, start, end))

    return AnnotatedUtterance(tuple(out), tuple(_with_depths(raw_spans)))


def _material_for(
    event: DisfluencyEvent, fluent: Sequence[Token]
) -> tuple[list[Token], list[tuple[SpanKind, int, int]]]:
    if event.kind is EventKind.REPETITION:
        texts = [fluent[event.anchor + i].text for i in range(event.length)]
        tokens = [Token(t) for t in texts]
        return tokens, [(SpanKind.REPARANDUM, 0, len(tokens))]
    if event.kind is EventKind.FILLER:
        tokens, sil_spans = _spanned_tokens(event.tokens, TokenKind.FILLED_PAUSE)
        return tokens, [(SpanKind.FILLER, 0, len(tokens)), *sil_spans]
    if event.kind is EventKind.FALSE_START:
        return (
            [Token(event.tokens[0], TokenKind.FALSE_START_FRAGMENT)],
            [(SpanKind.REPARANDUM, 0, 1)],
        )
    if event.kind is EventKind.SILENT_PAUSE:
        texts = event.tokens or (SILENT_PAUSE_TEXT,)
        tokens = [Token(t, TokenKind.SILENT_PAUSE) for t in texts]
        return tokens, [(SpanKind.SILENT_PAUSE, 0, len(tokens))]
    tokens, sil_spans = _spanned_tokens(event.tokens, TokenKind.WORD)
    return tokens, [(SpanKind.REPARANDUM, 0, len(tokens)), *sil_spans]


def _spanned_tokens(
    texts: Sequence[str], kind: TokenKind
) -> tuple[list[Token], list[tuple[SpanKind, int, int]]]:
    """Build material tokens, nesting a pause span around any <sil> text."""
    tokens = []
    sil_spans = []
    for i, text in enumerate(texts):
        if text == SILENT_PAUSE_TEXT:
            tokens.append(Token(text, TokenKind.SILENT_PAUSE))
            sil_spans.append((SpanKind.SILENT_PAUSE, i, i + 1))
        else:
            tokens.append(Token(text, kind))
    return tokens, sil_spans


def _validate_events(fluent: Sequence[Token], events: Sequence[DisfluencyEvent]) -> None:
    n = len(fluent)
    previous = -1
    repetitions: list[tuple[int, int]] = []
    for event in events:
        if event.anchor <= previous:
            raise ValueError("events must be sorted with at most one per boundary")
        previous = event.anchor
        if not 0 <= event.anchor <= n:
            raise ValueError(f"anchor {event.anchor} outside 0..{n}")
        if event.kind is EventKind.REPETITION:
            if not 1 <= event.length <= n - event.anchor:
                raise ValueError(
                    f"repetition length {event.length} does not fit at anchor {event.anchor}"
                )
            for start, end in repetitions:
                if start < event.anchor < end and event.anchor + event.length > end:
                    raise ValueError("repetition crosses the end of an enclosing repair")
            repetitions.append((event.anchor, event.anchor + event.length))
        elif event.kind is EventKind.FALSE_START:
            if len(event.tokens) != 1:
                raise ValueError("a false start carries exactly one fragment")
            fragment = event.tokens[0]
            if event.anchor >= n:
                raise ValueError("a false start needs a following fluent token")
            stem = fragment[:-1].casefold()
            target = fluent[event.anchor].text.casefold()
            if not fragment.endswith("-") or not target.startswith(stem) or stem == target:
                raise ValueError(
                    f"fragment {fragment!r} is not a strict prefix of {fluent[event.anchor].text!r}"
                )
        elif event.kind in (EventKind.FILLER, EventKind.SUBSTITUTION):
            if not event.tokens:
                raise ValueError(f"{event.kind.value} event needs inserted tokens")
            if all(t == SILENT_PAUSE_TEXT for t in event.tokens):
                raise ValueError("pause-only material must use a silent-pause event")
        elif event.kind is EventKind.SILENT_PAUSE:
            if any(t != SILENT_PAUSE_TEXT for t in event.tokens):
                raise ValueError("silent-pause events insert only <sil> tokens")
