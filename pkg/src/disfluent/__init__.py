"""disfluent: parse, generate, render, and evaluate disfluent speech text.

The toolkit covers the full loop around disfluency-annotated transcripts:

- ``annotation``: the markup grammar ({F ...}, {E ...}, {D ...},
  [ reparandum + repair ], <sil>), span structure, and BIO tags;
- ``corpus``: file formats (markup / BIO TSV / JSONL), fluent-disfluent pair
  building, and corpus statistics;
- ``inserter``: a statistical disfluency-insertion model with calibrated,
  reproducible generation;
- ``llm_backend``: LoRA fine-tune config export and a remote-completion
  insertion client;
- ``metrics``: corpus BLEU, embedding-based P/R/F1, rate reports, and a
  two-sample t-test;
- ``render``: TTS-ready plain-text output;
- ``cli``: the ``disfluent`` command.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .annotation import (
    AnnotatedUtterance,
    BioTag,
    DisfluencySpan,
    SpanKind,
    Token,
    TokenKind,
    disfluency_rate,
    disfluent_token_indices,
    from_bio,
    parse_annotated,
    serialize_markup,
    strip_disfluencies,
    to_bio,
    word_tokens,
)
from .corpus import (
    CorpusStats,
    ParallelPair,
    build_pairs,
    compute_stats,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .errors import DisfluentError, MarkupError
from .inserter import (
    Alignment,
    DisfluencyEvent,
    EventKind,
    GenerationConfig,
    InsertionModel,
    align_pair,
    apply_events,
    extract_events,
    insert,
    insert_many,
    load_model,
    save_model,
    train_model,
)
from .llm_backend import (
    FinetuneConfig,
    RemoteEndpoint,
    export_finetune_config,
    insert_remote,
)
from .metrics import (
    EvalReport,
    TestResult,
    bert_score_from_embeddings,
    corpus_bleu,
    rate_report,
    two_sample_ttest,
)
from .render import RenderStyle, export_jsonl, render_tts

__all__ = [
    "__version__",
    "AnnotatedUtterance",
    "Alignment",
    "BioTag",
    "CorpusStats",
    "DisfluencyEvent",
    "DisfluencySpan",
    "DisfluentError",
    "EvalReport",
    "EventKind",
    "FinetuneConfig",
    "GenerationConfig",
    "InsertionModel",
    "MarkupError",
    "ParallelPair",
    "RemoteEndpoint",
    "RenderStyle",
    "SpanKind",
    "TestResult",
    "Token",
    "TokenKind",
    "align_pair",
    "apply_events",
    "bert_score_from_embeddings",
    "build_pairs",
    "compute_stats",
    "corpus_bleu",
    "disfluency_rate",
    "disfluent_token_indices",
    "export_finetune_config",
    "export_jsonl",
    "extract_events",
    "from_bio",
    "insert",
    "insert_many",
    "insert_remote",
    "load_corpus",
    "load_model",
    "parse_annotated",
    "rate_report",
    "save_corpus",
    "save_model",
    "serialize_markup",
    "split_corpus",
    "strip_disfluencies",
    "to_bio",
    "train_model",
    "two_sample_ttest",
    "word_tokens",
]
