#!/usr/bin/env python3
"""
traitfusion command line: synthesize, train, fuse, evaluate, check, predict.

Subcommands: synth, train, fit-dlf, eval, gradcheck, predict, featurize,
study. Every subcommand takes repeated ``--set section.field=value``
overrides, ``--seed`` and ``-v``/``-vv``. Tables go to stdout, logs to
stderr.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from traitfusion import __version__
from traitfusion.audio import AudioChannel
from traitfusion.checkpoint import load_checkpoint, save_checkpoint, write_history
from traitfusion.config import RunConfig, apply_overrides, default_output_dir
from traitfusion.errors import (
    EXIT_OK,
    DataError,
    MissingPrerequisiteError,
    NumericError,
    TraitFusionError,
    UsageError,
    exit_code_for,
)
from traitfusion.fusion import (
    DecisionFusion,
    build_fused,
    dlf_fit_report,
    fusion_config_for,
    read_weights,
    write_weights,
)
from traitfusion.gradcheck import SCOPES, run_suite
from traitfusion.media import (
    ClipLoader,
    load_embeddings,
    read_feature_file,
    read_frames,
    read_wav,
    write_feature_file,
)
from traitfusion.models import (
    MODALITY_ORDER,
    TRAIT_CODES,
    ClipInputs,
    DatasetSplit,
    FusionWeights,
    Metrics,
    ModelKind,
)
from traitfusion.nn import Module
from traitfusion.parser import parse_manifest, write_manifest
from traitfusion.study import ROW_ORDER, run_fusion_study, study_config
from traitfusion.synth import EMBEDDINGS_NAME, MANIFEST_NAME, synth_generate
from traitfusion.text import EmbeddingTable, TextChannel, normalize_text
from traitfusion.trainer import baseline_train_mean, collect_predictions, evaluate, train
from traitfusion.video import Backbone, VideoChannel, backbone_features

logger = logging.getLogger("traitfusion.cli")

MODEL_KINDS = tuple(kind.value for kind in ModelKind)
SPLIT_CHOICES = ("train", "val", "test")
CHANNEL_KINDS = tuple(m.value for m in MODALITY_ORDER)
MODEL_LABELS = {
    "audio": "Audio", "text": "Text", "video": "Video", "nnlb": "NNLB", "nnfb": "NNFB",
}


# ============================================================================
# FORMATTING UTILITIES
# ============================================================================


def _markdown_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Header row, separator row and data rows as a single string."""
    header_line = "| " + " | ".join(headers) + " |"
    sep_line = "|" + "|".join("------" for _ in headers) + "|"
    data_lines = "\n".join(
        "| " + " | ".join(str(c) for c in row) + " |" for row in rows
    )
    return f"{header_line}\n{sep_line}\n{data_lines}"


def _tsv(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    return "\n".join("\t".join(str(c) for c in line) for line in [headers, *rows])


def _metric_rows(named: Sequence[Tuple[str, Metrics]], kind: str) -> List[List[str]]:
    return [[name] + [f"{v:.4f}" for v in metrics.as_row(kind)] for name, metrics in named]


def _error_kind(exc: BaseException) -> str:
    if isinstance(exc, UsageError):
        return "Usage"
    if isinstance(exc, (NumericError, ArithmeticError)):
        return "Numeric"
    return "Data"


# ============================================================================
# SHARED HELPERS
# ============================================================================


def _output_dir(args: argparse.Namespace) -> Path:
    return Path(args.out_dir) if args.out_dir else default_output_dir()


def _embeddings(args: argparse.Namespace, config: RunConfig,
                manifest: Optional[Path] = None) -> Optional[EmbeddingTable]:
    """``--embeddings``, else the corpus's own embedding file, else ``None`` (hashed)."""
    if args.embeddings:
        return load_embeddings(args.embeddings)
    if manifest is not None and (manifest.parent / EMBEDDINGS_NAME).exists():
        return load_embeddings(manifest.parent / EMBEDDINGS_NAME)
    return None


def _require_split(split: DatasetSplit, name: str) -> list:
    records = split.get(name)
    if not records:
        raise DataError(f"split {name!r} is empty")
    return records


def _channel_paths(args: argparse.Namespace) -> Dict[str, Path]:
    models = _output_dir(args) / "models"
    return {
        kind: Path(getattr(args, f"{kind}_ckpt") or models / f"{kind}.ckpt")
        for kind in CHANNEL_KINDS
    }


def _checked_channel_paths(args: argparse.Namespace) -> Dict[str, Path]:
    paths = _channel_paths(args)
    missing = [f"{kind} ({path})" for kind, path in paths.items() if not path.exists()]
    if missing:
        raise MissingPrerequisiteError(missing)
    return paths


def _load_channels(args: argparse.Namespace,
                   table: Optional[EmbeddingTable]) -> Tuple[AudioChannel, TextChannel,
                                                             VideoChannel]:
    """The three uni-modal checkpoints, checked for existence before anything loads."""
    paths = _checked_channel_paths(args)
    channels = tuple(load_checkpoint(paths[kind], table) for kind in CHANNEL_KINDS)
    for kind, channel in zip(CHANNEL_KINDS, channels):
        if channel.kind != kind:
            raise DataError(f"{paths[kind]} holds a {channel.kind} model, expected {kind}")
    return channels


def _dlf_model(args: argparse.Namespace, table: Optional[EmbeddingTable]) -> DecisionFusion:
    return DecisionFusion(*_load_channels(args, table), read_weights(args.weights))


def _add_channel_checkpoint_args(parser: argparse.ArgumentParser) -> None:
    for kind in CHANNEL_KINDS:
        parser.add_argument(f"--{kind}-ckpt", help=f"{kind} checkpoint "
                            f"(default: <out>/models/{kind}.ckpt)")


# ============================================================================
# HANDLERS
# ============================================================================


def handle_synth(args: argparse.Namespace, config: RunConfig) -> int:
    synth = config.synth
    if args.n is not None:
        synth = dataclasses.replace(synth, n_clips=args.n)
    out = Path(args.out) if args.out else _output_dir(args) / "corpus"
    split = synth_generate(synth, out)
    print(f"# Synthetic corpus: {out / MANIFEST_NAME}\n")
    print(_markdown_table(
        ["Split", "Clips"],
        [["train", len(split.train)], ["val", len(split.validation)], ["test", len(split.test)],
         ["total", len(split)]],
    ))
    return EXIT_OK


def _build_model(kind: ModelKind, args: argparse.Namespace, config: RunConfig,
                 table: Optional[EmbeddingTable]) -> Module:
    seed = config.train.seed
    if kind is ModelKind.AUDIO:
        return AudioChannel(config.audio, seed=seed)
    if kind is ModelKind.TEXT:
        return TextChannel(config.text, table, seed=seed)
    if kind is ModelKind.VIDEO:
        return VideoChannel(config.video, seed=seed)
    audio, text, video = _load_channels(args, table)
    return build_fused(audio, text, video, kind,
                       fusion_config_for(audio, text, video, config.fusion), seed=seed)


def handle_train(args: argparse.Namespace, config: RunConfig) -> int:
    kind = ModelKind(args.model)
    manifest = Path(args.manifest)
    table = _embeddings(args, config, manifest)
    if kind.is_fusion:
        _checked_channel_paths(args)
    split = parse_manifest(manifest)
    model = _build_model(kind, args, config, table)
    loader = ClipLoader(config.video.feature_dim if config.video.source == "precomputed"
                        else None)
    model, history = train(model, loader.load_all(_require_split(split, "train")),
                           loader.load_all(_require_split(split, "val")), config.train)

    checkpoint = Path(args.checkpoint) if args.checkpoint else \
        _output_dir(args) / "models" / f"{kind.value}.ckpt"
    save_checkpoint(checkpoint, model)
    history_path = write_history(checkpoint.with_name(f"{checkpoint.stem}_history.tsv"), history)

    print(f"# Trained {kind.value}: {checkpoint}\n")
    print(_markdown_table(
        ["Epoch", "Train MSE", "Val MSE", "Best"],
        [[r.epoch, f"{r.train_mse:.6f}", f"{r.val_mse:.6f}", "*" if r.best else ""]
         for r in history.epochs],
    ))
    print(f"\nStopped: {history.stop_reason} after {len(history.epochs)} epochs "
          f"({history.steps} steps); best epoch {history.best_epoch}.")
    print(f"History: {history_path}")
    return EXIT_OK


def _weights_table(weights: FusionWeights) -> str:
    return _markdown_table(["Modality", *TRAIT_CODES], weights.to_table())


def handle_fit_dlf(args: argparse.Namespace, config: RunConfig) -> int:
    manifest = Path(args.manifest)
    table = _embeddings(args, config, manifest)
    channels = _load_channels(args, table)
    split = parse_manifest(manifest)
    devset = collect_predictions(channels, ClipLoader().load_all(_require_split(split, "val")))
    report = dlf_fit_report(devset, config.fusion)
    out = Path(args.weights) if args.weights else _output_dir(args) / "models" / "dlf_weights.txt"
    write_weights(out, report.weights)

    print(f"# Decision-level fusion weights: {out}\n")
    print(_weights_table(report.weights))
    print(f"\nDevelopment set ({len(devset)} clips), fitted MAE per trait:\n")
    print(_markdown_table(["Mean", *TRAIT_CODES],
                          [[f"{np.mean(report.objectives):.4f}",
                            *(f"{v:.4f}" for v in report.objectives)]]))
    degenerate = [code for code, flag in zip(TRAIT_CODES, report.weights.degenerate) if flag]
    if degenerate:
        print(f"\nDegenerate traits (uniform weights): {', '.join(degenerate)}")
    return EXIT_OK


def _evaluation_model(args: argparse.Namespace,
                      table: Optional[EmbeddingTable]) -> Tuple[str, Any]:
    if bool(args.model) == bool(args.weights):
        raise UsageError("pass exactly one of --model CHECKPOINT or --weights FILE")
    if args.weights:
        return "DLF", _dlf_model(args, table)
    model = load_checkpoint(args.model, table)
    return MODEL_LABELS[model.kind], model


def handle_eval(args: argparse.Namespace, config: RunConfig) -> int:
    manifest = Path(args.manifest)
    table = _embeddings(args, config, manifest)
    name, model = _evaluation_model(args, table)
    split = parse_manifest(manifest)
    records = _require_split(split, args.split)
    loader = ClipLoader()
    named = [(name, evaluate(model, loader.load_all(records)))]
    if args.baseline:
        _, baseline = baseline_train_mean(_require_split(split, "train"), records)
        named.append((ROW_ORDER[-1], baseline))

    headers = ["Model", "Mean", *TRAIT_CODES]
    if args.tsv:
        rows = [[n, kind, *(f"{v:.4f}" for v in m.as_row(kind))]
                for kind in ("mae", "accuracy") for n, m in named]
        print(_tsv(["model", "metric", "mean", *TRAIT_CODES], rows))
        return EXIT_OK
    print(f"# Evaluation on {args.split} ({len(records)} clips)\n")
    print("## MAE\n")
    print(_markdown_table(headers, _metric_rows(named, "mae")))
    print("\n## Mean accuracy (1 - MAE)\n")
    print(_markdown_table(headers, _metric_rows(named, "accuracy")))
    return EXIT_OK


def handle_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    report = run_suite(args.scope, seeds=args.seeds, tolerance=args.tolerance)
    print(f"# Gradient check: {report.scope} ({args.seeds} seeds, h=1e-5)\n")
    print(_markdown_table(
        ["Op", "Worst relative error", "Status"],
        [[r.name, f"{r.max_relative_error:.3e}", "pass" if r.passed else "FAIL"]
         for r in report.results],
    ))
    print(f"\nWorst overall: {report.worst:.3e} (tolerance {args.tolerance:g})")
    report.raise_on_failure()
    return EXIT_OK


def _clip_from_args(args: argparse.Namespace) -> ClipInputs:
    inputs = ClipInputs(clip_id=args.clip_id)
    if args.audio:
        inputs.audio = read_wav(args.audio)
    if args.transcript is not None:
        inputs.transcript = normalize_text(args.transcript)
    if args.frames:
        inputs.frames = read_frames(args.frames)
    if args.features:
        vectors = read_feature_file(args.features).get(args.clip_id)
        if not vectors:
            raise DataError(f"{args.features}: no features for clip {args.clip_id}")
        inputs.features = vectors
    return inputs


def handle_predict(args: argparse.Namespace, config: RunConfig) -> int:
    table = _embeddings(args, config)
    _, model = _evaluation_model(args, table)
    scores = model.forward(_clip_from_args(args), False)[1].data
    for code, score in zip(TRAIT_CODES, scores):
        print(f"{code}\t{score:.4f}")
    return EXIT_OK


def handle_featurize(args: argparse.Namespace, config: RunConfig) -> int:
    if args.video_ckpt:
        video = load_checkpoint(args.video_ckpt)
        if not isinstance(video, VideoChannel) or video.backbone is None:
            raise DataError(f"{args.video_ckpt} is not a video checkpoint with a backbone")
        backbone = video.backbone
    else:
        backbone = Backbone(dataclasses.replace(config.video, source="random"))
    split = parse_manifest(args.manifest)
    features = {
        record.clip_id: [backbone_features(frame, backbone)
                         for frame in read_frames(record.visual_path)]
        for record in split.records
    }
    out = Path(args.features_out)
    write_feature_file(out, features)
    print(f"# Backbone features ({backbone.output_dim}-d) for {len(features)} clips: {out}")
    if args.manifest_out:
        records = [dataclasses.replace(r, visual_path=str(out.resolve())) for r in split.records]
        write_manifest(args.manifest_out, records)
        print(f"Manifest with precomputed features: {args.manifest_out}")
    return EXIT_OK


def handle_study(args: argparse.Namespace, config: RunConfig) -> int:
    result = run_fusion_study(_output_dir(args), config)
    headers = ["Model", "Mean", *TRAIT_CODES]
    for kind, title in (("mae", "MAE"), ("accuracy", "Mean accuracy (1 - MAE)")):
        print(f"## {title}\n")
        print(_markdown_table(headers, result.table(kind)[1:]))
        print()
    print("## Decision-level fusion weights\n")
    print(_weights_table(result.weights))
    name, best = result.best_single
    print(f"\nBest single modality: {name} (MAE {best:.4f})")
    for row, gain in result.improvements.items():
        print(f"{row} vs best single: {100.0 * gain:+.2f}%")
    print(f"NNFB vs NNLB: {100.0 * result.nnfb_over_nnlb:+.2f}%")
    return EXIT_OK


COMMAND_HANDLERS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "synth": handle_synth,
    "train": handle_train,
    "fit-dlf": handle_fit_dlf,
    "eval": handle_eval,
    "gradcheck": handle_gradcheck,
    "predict": handle_predict,
    "featurize": handle_featurize,
    "study": handle_study,
}


# ============================================================================
# ARGUMENT PARSING
# ============================================================================


class ArgumentParser(argparse.ArgumentParser):
    """Raises ``UsageError`` instead of exiting, so ``main`` owns the exit code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.FIELD=VALUE", help="override a config value")
    common.add_argument("--seed", type=int, help="seed for training and synthesis")
    common.add_argument("--out-dir", help="output directory (default: $TRAITFUSION_OUTPUT_DIR "
                        "or ./traitfusion-out)")
    common.add_argument("--embeddings", help="word embedding table (text channel)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = ArgumentParser(prog="traitfusion", description=__doc__.splitlines()[1])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    synth = commands.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    synth.add_argument("--n", type=int, help="number of clips")
    synth.add_argument("--out", help="corpus directory (default: <out-dir>/corpus)")

    train_cmd = commands.add_parser("train", parents=[common], help="train one model")
    train_cmd.add_argument("model", choices=MODEL_KINDS)
    train_cmd.add_argument("--manifest", required=True)
    train_cmd.add_argument("--checkpoint", help="output checkpoint path")
    _add_channel_checkpoint_args(train_cmd)

    fit = commands.add_parser("fit-dlf", parents=[common],
                              help="fit decision-level fusion weights on the validation split")
    fit.add_argument("--manifest", required=True)
    fit.add_argument("--weights", help="output weights file")
    _add_channel_checkpoint_args(fit)

    eval_cmd = commands.add_parser("eval", parents=[common], help="evaluate a model")
    eval_cmd.add_argument("--manifest", required=True)
    eval_cmd.add_argument("--model", help="checkpoint of a channel or fused network")
    eval_cmd.add_argument("--weights", help="DLF weights file (uses the channel checkpoints)")
    eval_cmd.add_argument("--split", choices=SPLIT_CHOICES, default="test")
    eval_cmd.add_argument("--tsv", action="store_true", help="tab-separated output")
    eval_cmd.add_argument("--baseline", action="store_true",
                          help="add the train-label-mean baseline row")
    _add_channel_checkpoint_args(eval_cmd)

    check = commands.add_parser("gradcheck", parents=[common],
                                help="finite-difference gradient checks")
    check.add_argument("--scope", choices=SCOPES, default="ops")
    check.add_argument("--seeds", type=int, default=20)
    check.add_argument("--tolerance", type=float, default=1e-4)

    predict = commands.add_parser("predict", parents=[common], help="score one clip")
    predict.add_argument("--model")
    predict.add_argument("--weights")
    predict.add_argument("--clip-id", default="clip")
    predict.add_argument("--audio", help="WAV file")
    predict.add_argument("--transcript", help="transcript text")
    predict.add_argument("--frames", help="frame image or directory of frames")
    predict.add_argument("--features", help="precomputed feature file")
    _add_channel_checkpoint_args(predict)

    featurize = commands.add_parser("featurize", parents=[common],
                                    help="export frozen-backbone features for a manifest")
    featurize.add_argument("--manifest", required=True)
    featurize.add_argument("--features-out", required=True)
    featurize.add_argument("--manifest-out", help="also write a manifest using the features")
    featurize.add_argument("--video-ckpt", help="take the backbone from a video checkpoint")

    commands.add_parser("study", parents=[common],
                        help="synth, train all models and compare them on the test split")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 \
        else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def _run_config(args: argparse.Namespace) -> RunConfig:
    base = study_config() if args.command == "study" else RunConfig()
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides = [f"train.seed={args.seed}", f"synth.seed={args.seed}"] + overrides
    return apply_overrides(base, overrides)


# ============================================================================
# MAIN
# ============================================================================


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.verbose)
        return COMMAND_HANDLERS[args.command](args, _run_config(args))
    except (TraitFusionError, OSError, ArithmeticError) as e:
        print(f"{_error_kind(e)} error: {e}", file=sys.stderr)
        return exit_code_for(e)


def main_sync():
    """Synchronous entry point for use as a console script."""
    sys.exit(main())


if __name__ == "__main__":
    main_sync()
