"""Command-line interface wiring the toolkit into reproducible pipelines.

Every subcommand that writes an output file also writes a sibling
``<output>.manifest.json`` recording the tool version, the exact command,
the seed, input/output paths, and a hash of all parameters — and none of it
is time-dependent, so re-running the same command reproduces both the
artifact and its manifest byte-for-byte.

Exit codes: 0 success, 1 usage error, 2 data/IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .annotation import AnnotatedUtterance, word_tokens
from .corpus import (
    CORPUS_FORMATS,
    build_pairs,
    compute_stats,
    dump_corpus,
    load_corpus,
)
from .errors import DisfluentError
from .inserter import (
    EVENT_KIND_ORDER,
    EventKind,
    GenerationConfig,
    insert_many,
    load_model,
    save_model,
    train_model,
)
from .llm_backend import (
    REMOTE_URL_ENV,
    FinetuneConfig,
    RemoteEndpoint,
    endpoint_from_env,
    export_finetune_config,
    insert_remote,
)
from .metrics import (
    EvalReport,
    bert_score_corpus,
    corpus_bleu,
    load_embeddings,
    micro_rate,
)
from .render import RenderStyle, render_tts

TOOL_NAME = "disfluent"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems via exception (exit code 1)
    instead of calling sys.exit(2)."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


# --- run manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written next to every output artifact."""

    tool: str
    version: str
    command: str
    seed: int | None
    inputs: dict
    outputs: dict
    parameters: dict
    config_hash: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def build_manifest(
    command: str,
    seed: int | None,
    inputs: dict,
    outputs: dict,
    parameters: dict,
) -> RunManifest:
    body = {
        "tool": TOOL_NAME,
        "version": __version__,
        "command": command,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "parameters": parameters,
    }
    digest = hashlib.sha256(
        json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return RunManifest(config_hash=digest, **body)


def manifest_path(output: str | Path) -> Path:
    return Path(str(output) + ".manifest.json")


def _jsonable(value):
    if isinstance(value, EventKind):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (frozenset, set, tuple)):
        return sorted(_jsonable(v) for v in value)
    return value


def _parameters(args: argparse.Namespace) -> dict:
    skip = {"handler", "command", "config"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _write_output(path: str, text: str, args: argparse.Namespace, inputs: dict) -> None:
    Path(path).write_text(text, encoding="utf-8")
    manifest = build_manifest(
        command=args.command,
        seed=getattr(args, "seed", None),
        inputs=inputs,
        outputs={"out": str(path)},
        parameters=_parameters(args),
    )
    manifest_path(path).write_text(manifest.to_json(), encoding="utf-8")


# --- shared helpers ---------------------------------------------------------------


def infer_format(path: str | Path, override: str | None = None) -> str:
    """Pick a corpus format from an explicit override or the file extension
    (.jsonl, .bio/.tsv, anything else = markup)."""
    if override:
        return override
    suffix = Path(path).suffix.lower()
    if suffix == ".jsonl":
        return "jsonl"
    if suffix in (".bio", ".tsv"):
        return "bio"
    return "markup"


def _read_fluent_lines(path: str) -> list[list]:
    """Plain fluent input: one utterance per line, whitespace-tokenized;
    blank lines are skipped."""
    utterances = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            utterances.append(word_tokens(line.split()))
    return utterances


def _kind_set(text: str) -> frozenset:
    kinds = set()
    for name in text.split(","):
        name = name.strip()
        if not name:
            continue
        try:
            kinds.add(EventKind(name))
        except ValueError:
            choices = ", ".join(k.value for k in EVENT_KIND_ORDER)
            raise argparse.ArgumentTypeError(
                f"unknown event kind {name!r} (choose from {choices})"
            ) from None
    if not kinds:
        raise argparse.ArgumentTypeError("at least one event kind is required")
    return frozenset(kinds)


def _corpus_lines(utterances: list[AnnotatedUtterance], fmt: str) -> str:
    return dump_corpus(utterances, fmt=fmt)


# --- config files -----------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _apply_config_file(subparser: argparse.ArgumentParser, path: str) -> None:
    """Load KEY=VALUE lines (keys mirror the flags; '#' starts a comment) and
    install them as defaults, so explicit command-line flags still win."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path}: {exc}") from exc

    actions = {
        action.dest: action
        for action in subparser._actions
        if action.dest not in ("help", "config")
    }
    defaults = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected KEY=VALUE, got {raw!r}")
        key, _, value = line.partition("=")
        dest = key.strip().replace("-", "_")
        value = value.strip()
        action = actions.get(dest)
        if action is None:
            raise _UsageError(f"{path}:{lineno}: unknown option {key.strip()!r}")
        try:
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[dest] = _parse_bool(value)
            elif action.type is not None:
                defaults[dest] = action.type(value)
            else:
                defaults[dest] = value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise _UsageError(f"{path}:{lineno}: bad value for {key.strip()!r}: {exc}") from exc
        if action.choices is not None and defaults[dest] not in action.choices:
            raise _UsageError(
                f"{path}:{lineno}: {key.strip()!r} must be one of {sorted(action.choices)}"
            )
    subparser.set_defaults(**defaults)


# --- subcommand handlers ----------------------------------------------------------


def _cmd_parse(args) -> int:
    fmt = infer_format(args.infile, args.format)
    corpus = load_corpus(args.infile, fmt=fmt)
    if args.out:
        out_fmt = infer_format(args.out, args.out_format)
        _write_output(args.out, _corpus_lines(corpus, out_fmt), args, {"in": args.infile})
    else:
        out_fmt = args.out_format or "markup"
        sys.stdout.write(_corpus_lines(corpus, out_fmt))
    return 0


def _cmd_stats(args) -> int:
    corpus = load_corpus(args.infile, fmt=infer_format(args.infile, args.format))
    stats = compute_stats(build_pairs(corpus))
    lines = [
        f"sentences               {stats.n_sentences}",
        f"avg fluent tokens       {stats.avg_fluent_tokens:.2f}",
        f"avg disfluent tokens    {stats.avg_disfluent_tokens:.2f}",
        f"total fluent tokens     {stats.total_fluent_tokens}",
        f"total disfluent tokens  {stats.total_disfluent_tokens}",
        f"micro disfluency rate   {stats.rate_micro:.4f}",
        f"macro disfluency rate   {stats.rate_macro:.4f}",
    ]
    report = "\n".join(lines) + "\n"
    if args.out:
        payload = json.dumps(asdict(stats), indent=2, sort_keys=True) + "\n"
        _write_output(args.out, payload, args, {"in": args.infile})
    sys.stdout.write(report)
    return 0


def _cmd_train(args) -> int:
    corpus = load_corpus(args.infile, fmt=infer_format(args.infile, args.format))
    model = train_model(build_pairs(corpus))
    save_model(model, args.out)
    manifest = build_manifest(
        command=args.command,
        seed=None,
        inputs={"in": args.infile},
        outputs={"out": args.out},
        parameters=_parameters(args),
    )
    manifest_path(args.out).write_text(manifest.to_json(), encoding="utf-8")
    return 0


def _cmd_insert(args) -> int:
    model = load_model(args.model)
    fluent = _read_fluent_lines(args.infile)
    config = GenerationConfig(
        seed=args.seed,
        target_rate=model.trained_rate if args.target_rate is None else args.target_rate,
        max_events_per_utterance=args.max_events,
        allow_kinds=args.allow_kinds,
    )
    generated = insert_many(model, fluent, config)
    out_fmt = infer_format(args.out, args.out_format)
    _write_output(
        args.out,
        _corpus_lines(generated, out_fmt),
        args,
        {"in": args.infile, "model": args.model},
    )
    return 0


def _cmd_eval(args) -> int:
    if (args.hyp_embeddings is None) != (args.ref_embeddings is None):
        raise _UsageError(
            "eval: --hyp-embeddings and --ref-embeddings must be given together"
        )
    hyps = load_corpus(args.hyp, fmt=infer_format(args.hyp, args.hyp_format))
    refs = load_corpus(args.ref, fmt=infer_format(args.ref, args.ref_format))

    bleu = corpus_bleu(
        [[t.text for t in u.tokens] for u in hyps],
        [[t.text for t in u.tokens] for u in refs],
        max_n=args.max_n,
    )
    reference_rate = (
        args.reference_rate if args.reference_rate is not None else micro_rate(refs)
    )
    generated_rate = micro_rate(hyps)

    bert_p = bert_r = bert_f1 = None
    if args.hyp_embeddings is not None:
        bert_p, bert_r, bert_f1 = bert_score_corpus(
            load_embeddings(args.hyp_embeddings), load_embeddings(args.ref_embeddings)
        )

    report = EvalReport(
        bleu=bleu,
        bert_p=bert_p,
        bert_r=bert_r,
        bert_f1=bert_f1,
        rate_generated=generated_rate,
        rate_reference=reference_rate,
        rate_delta=generated_rate - reference_rate,
    )
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        inputs = {"hyp": args.hyp, "ref": args.ref}
        if args.hyp_embeddings is not None:
            inputs["hyp_embeddings"] = args.hyp_embeddings
            inputs["ref_embeddings"] = args.ref_embeddings
        _write_output(args.out, payload, args, inputs)
    sys.stdout.write(payload)
    return 0


def _cmd_render(args) -> int:
    corpus = load_corpus(args.infile, fmt=infer_format(args.infile, args.format))
    style = RenderStyle(
        silent_pause_surface=args.silent_pause,
        keep_filler_tokens=not args.drop_fillers,
        fragment_hyphen=not args.no_fragment_hyphen,
    )
    lines = [render_tts(u, style) for u in corpus]
    text = "\n".join(lines) + "\n" if lines else ""
    if args.out:
        _write_output(args.out, text, args, {"in": args.infile})
    else:
        sys.stdout.write(text)
    return 0


def _cmd_finetune_config(args) -> int:
    overrides = {
        name: getattr(args, name)
        for name in (
            "base_model",
            "lora_rank",
            "lora_alpha",
            "lora_dropout",
            "learning_rate",
            "max_seq_len",
            "batch_size",
            "grad_accum_steps",
        )
        if getattr(args, name) is not None
    }
    config = export_finetune_config(overrides)
    if args.out:
        _write_output(args.out, config.to_json(), args, {})
    else:
        sys.stdout.write(config.to_json())
    return 0


def _cmd_insert_remote(args) -> int:
    if args.url:
        endpoint = RemoteEndpoint(
            base_url=args.url, timeout=args.timeout, max_retries=args.max_retries
        )
    else:
        try:
            endpoint = endpoint_from_env(timeout=args.timeout, max_retries=args.max_retries)
        except ValueError:
            raise _UsageError(
                f"insert-remote: pass --url or set {REMOTE_URL_ENV}"
            ) from None
    fluent = _read_fluent_lines(args.infile)
    generated = [insert_remote(endpoint, tokens) for tokens in fluent]
    out_fmt = infer_format(args.out, args.out_format)
    _write_output(args.out, _corpus_lines(generated, out_fmt), args, {"in": args.infile})
    return 0


# --- parser construction -----------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--config",
        metavar="FILE",
        help="KEY=VALUE file of defaults for this subcommand's flags (flags win)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog=TOOL_NAME, description="Disfluency annotation toolkit.")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("parse", help="parse a corpus and rewrite it in any format")
    p.add_argument("--in", dest="infile", required=True, help="input corpus file")
    p.add_argument("--format", choices=CORPUS_FORMATS, help="input format (default: by extension)")
    p.add_argument("--out", help="output file (default: print markup to stdout)")
    p.add_argument("--out-format", choices=CORPUS_FORMATS, help="output format")
    _add_common(p)
    p.set_defaults(handler=_cmd_parse)

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=CORPUS_FORMATS)
    p.add_argument("--out", help="also write the statistics as JSON")
    _add_common(p)
    p.set_defaults(handler=_cmd_stats)

    p = sub.add_parser("train", help="train an insertion model from a disfluent corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=CORPUS_FORMATS)
    p.add_argument("--out", required=True, help="model JSON path")
    _add_common(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("insert", help="insert disfluencies into fluent text")
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--in", dest="infile", required=True, help="fluent text, one utterance per line")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=CORPUS_FORMATS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-rate", type=float, default=None, help="disfluent-token rate (default: the model's trained rate)")
    p.add_argument("--max-events", type=int, default=16, help="per-utterance event cap")
    p.add_argument("--allow-kinds", type=_kind_set, default=frozenset(EVENT_KIND_ORDER), help="comma-separated event kinds to allow")
    _add_common(p)
    p.set_defaults(handler=_cmd_insert)

    p = sub.add_parser("eval", help="score generated output against references")
    p.add_argument("--hyp", required=True, help="generated corpus")
    p.add_argument("--ref", required=True, help="reference corpus")
    p.add_argument("--hyp-format", choices=CORPUS_FORMATS)
    p.add_argument("--ref-format", choices=CORPUS_FORMATS)
    p.add_argument("--max-n", type=int, default=4, help="largest n-gram order for BLEU")
    p.add_argument("--hyp-embeddings", help="unit-vector file for generated sentences")
    p.add_argument("--ref-embeddings", help="unit-vector file for reference sentences")
    p.add_argument("--reference-rate", type=float, help="reference disfluency rate (default: measured on --ref)")
    p.add_argument("--out", help="write the report JSON here as well")
    _add_common(p)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("render", help="render a corpus as TTS-ready plain text")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=CORPUS_FORMATS)
    p.add_argument("--out", help="output text file (default: stdout)")
    p.add_argument("--silent-pause", default="...", help="surface form for silent pauses")
    p.add_argument("--drop-fillers", action="store_true", help="omit tokens inside filler spans")
    p.add_argument("--no-fragment-hyphen", action="store_true", help="strip trailing hyphens from fragments")
    _add_common(p)
    p.set_defaults(handler=_cmd_render)

    p = sub.add_parser("finetune-config", help="export a LoRA fine-tune configuration")
    p.add_argument("--out", help="config JSON path (default: stdout)")
    p.add_argument("--base-model")
    p.add_argument("--lora-rank", type=int)
    p.add_argument("--lora-alpha", type=int)
    p.add_argument("--lora-dropout", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-seq-len", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--grad-accum-steps", type=int)
    _add_common(p)
    p.set_defaults(handler=_cmd_finetune_config)

    p = sub.add_parser("insert-remote", help="insert disfluencies via a remote completion service")
    p.add_argument("--in", dest="infile", required=True, help="fluent text, one utterance per line")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=CORPUS_FORMATS)
    p.add_argument("--url", help=f"endpoint URL (default: ${REMOTE_URL_ENV})")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-retries", type=int, default=2)
    _add_common(p)
    p.set_defaults(handler=_cmd_insert_remote)

    return parser


def _find_subparser(parser: _Parser, name: str) -> argparse.ArgumentParser | None:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def _config_path_from_argv(argv: list[str]) -> str | None:
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config_path = _config_path_from_argv(argv)
        if config_path is not None:
            command = next((a for a in argv if not a.startswith("-")), None)
            subparser = _find_subparser(parser, command) if command else None
            if subparser is None:
                raise _UsageError(f"{TOOL_NAME}: --config requires a subcommand")
            _apply_config_file(subparser, config_path)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return 0 if exc.code in (0, None) else 1
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1

    try:
        return args.handler(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (DisfluentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
