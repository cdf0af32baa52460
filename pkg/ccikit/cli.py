"""Command-line stages.

Every subcommand reads JSON Lines / JSON inputs, writes its outputs and a
run manifest (input hashes, config hash, package versions) and returns an
exit code: 0 success, 1 usage, 2 bad data, 3 LLM backend failure.
"""

import argparse
import hashlib
import logging
import os
import platform
import sys
from importlib import metadata
from typing import Any, Callable, Dict, List, Optional, Sequence

import orjson
from pydantic import BaseModel, TypeAdapter, ValidationError

from ccikit import __version__
from ccikit.config import LlmEndpoint, PipelineConfig, config_hash, load_config
from ccikit.corpus import check_split_hygiene, corpus_stats, deduplicate, load_corpus, save_corpus
from ccikit.detector import (
    DetectorModel,
    PrecomputedCommentEncoder,
    build_vocabulary,
    evaluate,
    fit,
    init_model,
    lambda_sweep,
    predict_corpus,
    repeat_train_evaluate,
    write_predictions,
)
from ccikit.enhance import iterative_enhance
from ccikit.errors import CciError, ConfigError, DataError, UsageError
from ccikit.evalkit import TEXT_METRICS, ScoredPair, metric_tokens, score_corpus, score_pair, success_rate, write_metrics_csv
from ccikit.file_writer import JsonlWriter, write_json
from ccikit.fixer import fix_batch
from ccikit.llm_gateway import LlmGateway
from ccikit.logging_setup import setup_logging
from ccikit.models import FixResult, VoteRecord
from ccikit.semfilter import load_shots, select_validated_candidates, semantic_filter
from ccikit.solver import solve, write_solve_records
from ccikit.synfilter import apply_syntactic_filters

logger = logging.getLogger(__name__)

_VERSIONED_PACKAGES = ("numpy", "pydantic", "pydantic-settings", "orjson", "httpx", "nltk", "boto3")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- manifest -----------------------------------------------------------------------


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _versions() -> Dict[str, str]:
    versions = {"ccikit": __version__, "python": platform.python_version()}
    for name in _VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not-installed"
    return versions


def build_manifest(command: str, inputs: Sequence[str], outputs: Sequence[str], config: PipelineConfig) -> Dict[str, Any]:
    """Equal inputs and config give an identical manifest; no timestamps."""
    return {
        "schema_version": 1,
        "command": command,
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs if p and os.path.exists(p)},
        "outputs": sorted(os.path.basename(p) for p in outputs if p),
        "config_hash": config_hash(config),
        "versions": _versions(),
    }


# -- helpers --------------------------------------------------------------------------


def _read_jsonl(path: str, model) -> List[Any]:
    items = []
    try:
        with open(path, "rb") as fh:
            for line_no, raw in enumerate(fh, start=1):
                if raw.strip():
                    try:
                        items.append(model.model_validate(orjson.loads(raw)))
                    except (orjson.JSONDecodeError, ValidationError) as exc:
                        raise DataError(f"{path}:{line_no}: malformed record: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return items


def _load_voters(path: str) -> List[LlmEndpoint]:
    try:
        with open(path, "rb") as fh:
            return TypeAdapter(List[LlmEndpoint]).validate_python(orjson.loads(fh.read()))
    except (OSError, orjson.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"cannot read voter roster {path}: {exc}") from exc


def _comment_encoder(args: argparse.Namespace) -> Optional[PrecomputedCommentEncoder]:
    path = getattr(args, "comment_vectors", None)
    return PrecomputedCommentEncoder.from_jsonl(path) if path else None


def _load_model(args: argparse.Namespace, config: PipelineConfig) -> DetectorModel:
    model = DetectorModel.load(args.model or config.paths.model)
    model.comment_encoder = _comment_encoder(args)
    return model


class Judgment(BaseModel):
    case_id: str
    success: bool


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


# -- subcommands ------------------------------------------------------------------------
# Each returns (inputs, outputs) for the manifest.


def cmd_dedup(args, config, gateway):
    corpus = load_corpus(args.input)
    deduped, report = deduplicate(corpus)
    save_corpus(deduped, args.out)
    hygiene = check_split_hygiene(deduped)
    write_json(args.report, {"dedup": report, "split_hygiene": hygiene})
    return [args.input], [args.out, args.report]


def cmd_filter_syntactic(args, config, gateway):
    corpus = load_corpus(args.input)
    kept, report = apply_syntactic_filters(corpus)
    save_corpus(kept, args.out)
    write_json(args.report, report)
    return [args.input], [args.out, args.report]


def cmd_filter_semantic(args, config, gateway):
    corpus = load_corpus(args.input)
    voters = _load_voters(args.voters) if args.voters else config.voters
    shots = load_shots(args.shots or config.paths.shots)
    kept, records = semantic_filter(
        corpus,
        voters,
        shots,
        gateway=gateway,
        max_in_flight=config.gateway.max_in_flight,
        max_tokens=config.gateway.vote_max_tokens,
    )
    save_corpus(kept, args.out)
    with JsonlWriter(args.votes) as writer:
        writer.write_all(records)
    return [args.input, args.voters, args.shots], [args.out, args.votes]


def cmd_select_validated(args, config, gateway):
    corpus = load_corpus(args.input)
    records = _read_jsonl(args.votes, VoteRecord)
    chosen = select_validated_candidates(records, corpus, args.n, seed=config.seed)
    save_corpus(chosen, args.out)
    return [args.input, args.votes], [args.out]


def cmd_train(args, config, gateway):
    corpus = load_corpus(args.input)
    train_set = corpus.split("train") if args.use_splits else corpus
    valid_path = args.valid
    valid = load_corpus(valid_path) if valid_path else (corpus.split("valid") if args.use_splits else None)
    if valid is not None and not valid.cases:
        valid = None
    det_cfg = config.detector
    inputs = [args.input, valid_path, args.test]

    if args.lambda_sweep:
        if valid is None:
            raise UsageError("--lambda-sweep needs a validation corpus (--valid or --use-splits)")
        rows = lambda_sweep(train_set, valid, det_cfg, args.lambda_sweep)
        write_json(args.report, {"schema_version": 1, "lambda_sweep": rows})
        return inputs, [args.report]

    if args.repeats:
        if not args.test:
            raise UsageError("--repeats needs --test")
        report = repeat_train_evaluate(train_set, load_corpus(args.test), det_cfg, runs=args.repeats)
        write_json(args.report, report)
        return inputs, [args.report]

    model, history = fit(train_set, det_cfg, valid=valid, comment_encoder=_comment_encoder(args))
    out = args.model or config.paths.model
    model.save(out)
    write_json(args.report, {"schema_version": 1, "history": history, "parameters": model.parameter_count})
    return inputs, [out, args.report]


def cmd_detect(args, config, gateway):
    corpus = load_corpus(args.input)
    model = _load_model(args, config)
    write_predictions(predict_corpus(model, corpus), args.out)
    return [args.input, args.model or config.paths.model], [args.out]


def cmd_enhance(args, config, gateway):
    d0 = load_corpus(args.input)
    det_cfg = config.detector
    detector_init = init_model(det_cfg, build_vocabulary(d0, det_cfg), _comment_encoder(args))
    enhanced, history = iterative_enhance(
        detector_init,
        d0,
        config.teacher,
        config.enhance,
        det_cfg,
        gateway=gateway,
        max_tokens=config.gateway.synth_max_tokens,
    )
    enhanced.check_synthetic_parents()
    dedup_report = None
    if args.dedup:
        enhanced, dedup_report = deduplicate(enhanced)
    save_corpus(enhanced, args.out)
    write_json(args.report, {"schema_version": 1, "iterations": history, "dedup": dedup_report})
    return [args.input], [args.out, args.report]


def cmd_fix(args, config, gateway):
    corpus = load_corpus(args.input)
    results = fix_batch(
        config.fixer,
        corpus.cases,
        gateway=gateway,
        max_in_flight=config.gateway.max_in_flight,
        max_tokens=config.gateway.fix_max_tokens,
    )
    with JsonlWriter(args.out) as writer:
        writer.write_all(results)
    return [args.input], [args.out]


def cmd_solve(args, config, gateway):
    corpus = load_corpus(args.input)
    model = None if args.route_all else _load_model(args, config)
    records, timing = solve(
        corpus,
        model,
        config.fixer,
        gateway=gateway,
        route_all=args.route_all,
        max_tokens=config.gateway.fix_max_tokens,
    )
    write_solve_records(records, args.out)
    write_json(args.timing, timing)
    return [args.input, None if args.route_all else (args.model or config.paths.model)], [args.out, args.timing]


def cmd_eval_detect(args, config, gateway):
    corpus = load_corpus(args.input)
    model = _load_model(args, config)
    validated = None
    if args.validated:
        validated = [c.id for c in load_corpus(args.validated).cases]
    report = evaluate(model, corpus, validated)
    write_json(args.report, report)
    return [args.input, args.model or config.paths.model, args.validated], [args.report]


def cmd_eval_fix(args, config, gateway):
    corpus = load_corpus(args.input)
    index = corpus.by_id()
    pairs: List[ScoredPair] = []
    for result in _read_jsonl(args.fixes, FixResult):
        case = index.get(result.case_id)
        if case is None:
            raise DataError(f"fix result for unknown case {result.case_id}")
        if not case.new_comment:
            raise DataError(f"case {case.id} has no new_comment to score against")
        try:
            pairs.append(ScoredPair.from_texts(case.id, case.old_comment, result.predicted_comment, case.new_comment))
        except ValidationError as exc:
            raise DataError(f"case {case.id}: {exc.errors()[0]['msg']}") from exc
    report = score_corpus(pairs)
    document: Dict[str, Any] = report.model_dump(mode="json")
    if args.judgments:
        judgments = _read_jsonl(args.judgments, Judgment)
        document["success_rate"] = success_rate([j.success for j in judgments])
    write_json(args.report, document)
    outputs = [args.report]
    if args.csv:
        write_metrics_csv(report, args.csv)
        outputs.append(args.csv)
    return [args.input, args.fixes, args.judgments], outputs


def cmd_metric(args, config, gateway):
    if args.name in ("sari", "gleu") and args.src is None:
        raise UsageError(f"metric {args.name} needs --src")
    try:
        pair = ScoredPair(
            case_id="cli",
            source=metric_tokens(args.src or ""),
            candidate=metric_tokens(args.cand),
            reference=metric_tokens(args.ref),
        )
    except ValidationError as exc:
        raise DataError(f"--ref: {exc.errors()[0]['msg']}") from exc
    sys.stdout.write(orjson.dumps({"metric": args.name, "score": score_pair(pair, args.name)}).decode() + "\n")
    return [], []


def cmd_stats(args, config, gateway):
    corpus = load_corpus(args.input)
    write_json(args.report, corpus_stats(corpus))
    return [args.input], [args.report]


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccikit", description="Code-comment inconsistency corpus, detector and fixer tooling")
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--log-format", choices=["text", "json"])
    parser.add_argument("--log-file", help="Also write logs to this file")
    parser.add_argument("--seed", type=int, help="Override the global seed")
    parser.add_argument("--manifest", help="Where to write the run manifest (default: <reports_dir>/<command>.manifest.json)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("dedup", cmd_dedup, "Remove duplicate change records")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)

    p = add("filter-syntactic", cmd_filter_syntactic, "Drop cases whose comment change is trivial")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)

    p = add("filter-semantic", cmd_filter_semantic, "Three-voter LLM check of inconsistent labels")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--votes", required=True, help="Vote records (JSON Lines)")
    p.add_argument("--voters", help="JSON list of voter endpoints; defaults to the configured roster")
    p.add_argument("--shots", help="Vote shots JSON; defaults to the packaged shots")

    p = add("select-validated", cmd_select_validated, "Sample unanimously inconsistent test cases")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--votes", required=True)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "Train the detector")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--valid")
    p.add_argument("--test", help="Test corpus for --repeats")
    p.add_argument("--use-splits", action="store_true", help="Take train/valid from the split field of --in")
    p.add_argument("--model", help="Output model file")
    p.add_argument("--report", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--repeats", type=int, help="Train N times with consecutive seeds and report medians")
    p.add_argument("--lambda-sweep", type=_floats, help="Comma-separated lambda values")
    p.add_argument("--comment-vectors", help="Precomputed comment vectors (JSON Lines)")

    p = add("detect", cmd_detect, "Predict with a trained detector")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--comment-vectors")

    p = add("enhance", cmd_enhance, "Grow the training set from detector errors")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--dedup", action="store_true", help="De-duplicate the enhanced corpus")
    p.add_argument("--comment-vectors")

    p = add("fix", cmd_fix, "Rewrite outdated comments with the fixer backend")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("solve", cmd_solve, "Detect, then fix flagged cases, with timing")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--timing", required=True)
    p.add_argument("--route-all", action="store_true", help="Send every case to the fixer, skipping detection")
    p.add_argument("--comment-vectors")

    p = add("eval-detect", cmd_eval_detect, "Classification metrics for a detector")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model")
    p.add_argument("--validated", help="Corpus of validated cases for a separate report")
    p.add_argument("--report", required=True)
    p.add_argument("--comment-vectors")

    p = add("eval-fix", cmd_eval_fix, "Text metrics for fixed comments")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--fixes", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--judgments", help='JSON Lines of {"case_id": ..., "success": bool}')

    p = add("metric", cmd_metric, "Score one candidate comment")
    p.add_argument("name", choices=TEXT_METRICS)
    p.add_argument("--src")
    p.add_argument("--cand", required=True)
    p.add_argument("--ref", required=True)

    p = add("stats", cmd_stats, "Counts by comment type, split and label")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--report", required=True)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    detector: Dict[str, Any] = {}
    if getattr(args, "epochs", None) is not None:
        detector["epochs"] = args.epochs
    if getattr(args, "lambda_", None) is not None:
        detector["lambda"] = args.lambda_
    overrides: Dict[str, Any] = {"log_level": args.log_level, "log_format": args.log_format, "log_file": args.log_file}
    if args.seed is not None:
        overrides["seed"] = args.seed
        detector["seed"] = args.seed
    if detector:
        overrides["detector"] = detector
    return overrides


def run_subcommand(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code

    try:
        config = load_config(args.config, _overrides(args))
        setup_logging(config.log_level, config.log_format, config.log_file)
        with LlmGateway(config.gateway) as gateway:
            inputs, outputs = args.handler(args, config, gateway)
        if args.command != "metric" or args.manifest:
            manifest_path = args.manifest or os.path.join(config.paths.reports_dir, f"{args.command}.manifest.json")
            write_json(manifest_path, build_manifest(args.command, inputs, outputs, config))
        logger.info("command-done command=%s", args.command)
        return 0
    except CciError as exc:
        logger.debug("command-failed command=%s", args.command, exc_info=True)
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DataError.exit_code
