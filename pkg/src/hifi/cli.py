"""``hifi`` command line: convert, synth, train, score, evaluate, ablate,
export-graph, selfcheck.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError, model_from_checkpoint
from .config import RunConfig, load_config
from .dataio import DataFormatError, DataValidationError, save_labels, save_series
from .datasets import DATASETS, convert, entity_dirs
from .evaluation import DetectionResult, micro_average
from .model import VARIANTS, ConfigError, HifiConfig
from .pipeline import CHECKPOINT_NAME, MANIFEST_NAME, evaluate_entity, score_entity, train_entity, write_manifest
from .train import TrainConfig

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
ABLATION_VARIANTS = ("full", "no_fi", "no_ve", "no_fi_ve", "encoder_only")

log = logging.getLogger("hifi")

_MODEL_FIELDS = [f for f in dataclasses.fields(HifiConfig) if f.name != "d"]
_TRAIN_FIELDS = list(dataclasses.fields(TrainConfig))
_SCORE_FLAGS = {"deterministic": "score", "samples": "score", "eps_seed": "score"}
_DATA_FLAGS = {"clip": "data", "stride": "data", "format": "data"}


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _type_for(f):
    t = str(f.type)
    if "bool" in t:
        return _bool
    if "float" in t:
        return float
    if "int" in t:
        return int
    return str


def _add_config_flags(p: argparse.ArgumentParser, model=True, train=True, score=True, data=True) -> None:
    p.add_argument("--config", help="key=value config file with [model]/[train]/[data]/[score] sections")
    if model:
        g = p.add_argument_group("model")
        for f in _MODEL_FIELDS:
            kw = {"choices": VARIANTS} if f.name == "variant" else {}
            g.add_argument(f"--{f.name}", type=_type_for(f), default=None, **kw)
    if train:
        g = p.add_argument_group("training")
        for f in _TRAIN_FIELDS:
            g.add_argument(f"--{f.name}", type=_type_for(f), default=None)
    if data:
        g = p.add_argument_group("data")
        g.add_argument("--clip", type=_bool, default=None)
        g.add_argument("--stride", type=int, default=None)
        g.add_argument("--format", choices=("auto", "csv", "space", "binary"), default=None)
    if score:
        g = p.add_argument_group("scoring")
        g.add_argument("--deterministic", type=_bool, default=None,
                       help="score with z = mu instead of a latent sample")
        g.add_argument("--samples", type=int, default=None, help="latent samples averaged per score")
        g.add_argument("--eps_seed", type=int, default=None)


def _run_config(args) -> RunConfig:
    run = load_config(args.config)
    for f in _MODEL_FIELDS:
        v = getattr(args, f.name, None)
        if v is not None:
            run.model[f.name] = v
    train_over = {f.name: getattr(args, f.name) for f in _TRAIN_FIELDS if getattr(args, f.name, None) is not None}
    if train_over:
        run.train = dataclasses.replace(run.train, **train_over)
    for name in _DATA_FLAGS:
        if getattr(args, name, None) is not None:
            setattr(run.data, name, getattr(args, name))
    for name in _SCORE_FLAGS:
        if getattr(args, name, None) is not None:
            setattr(run.score, name, getattr(args, name))
    # structural checks before any compute; d is a placeholder until data is read
    run.model_config(d=1)
    run.train.validate()
    return run


def cmd_convert(args) -> int:
    written = convert(args.dataset, args.in_path, args.out_dir)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import make_synthetic

    ds = make_synthetic(seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_series(ds.train, out / "train.csv")
    save_series(ds.test, out / "test.csv")
    save_labels(ds.labels, out / "labels.txt")
    (out / "segments.txt").write_text("".join(f"{a} {b} {k}\n" for a, b, k in ds.segments))
    print(out)
    return EXIT_OK


def _entity_out(data_dir: Path, entity: Path, out_dir: Path) -> Path:
    return out_dir if entity == data_dir else out_dir / entity.name


def _train_all(data_dir: Path, out_dir: Path, run: RunConfig) -> list[tuple[Path, Path]]:
    pairs = []
    for entity in entity_dirs(data_dir):
        dest = _entity_out(data_dir, entity, out_dir)
        outcome = train_entity(entity, dest, run)
        best = outcome.log.epochs[outcome.log.best_epoch]
        print(f"{entity.name}: best epoch {outcome.log.best_epoch} val_loss {best.val_loss:.6f} -> {outcome.checkpoint}")
        pairs.append((entity, dest))
    return pairs


def cmd_train(args) -> int:
    run = _run_config(args)
    _train_all(Path(args.data_dir), Path(args.out_dir), run)
    return EXIT_OK


def _checkpoint_pairs(checkpoint: Path, test_dir: Path) -> list[tuple[str, Path, Path]]:
    """Match checkpoints to test entities (single file, or one run subdirectory per entity)."""
    if checkpoint.is_file():
        return [(test_dir.name, checkpoint, test_dir)]
    if (checkpoint / CHECKPOINT_NAME).exists() and (test_dir / "test.csv").exists():
        return [(test_dir.name, checkpoint / CHECKPOINT_NAME, test_dir)]
    pairs = []
    for entity in entity_dirs(test_dir):
        ckpt = checkpoint / entity.name / CHECKPOINT_NAME
        if not ckpt.exists():
            raise CheckpointError(f"no checkpoint for entity {entity.name} at {ckpt}")
        pairs.append((entity.name, ckpt, entity))
    return pairs


def cmd_score(args) -> int:
    run = _run_config(args)
    out = Path(args.out)
    pairs = _checkpoint_pairs(Path(args.checkpoint), Path(args.test_dir))
    for name, ckpt, test_dir in pairs:
        scores = score_entity(ckpt, test_dir, run.score, run.data.format)
        dest = out if len(pairs) == 1 else out.with_name(f"{out.stem}_{name}{out.suffix}")
        scores.write(dest)
        print(dest)
    return EXIT_OK


def _evaluate(checkpoint: Path, test_dir: Path, run: RunConfig, out_dir: Path | None) -> tuple[dict, DetectionResult]:
    per_entity = {}
    for name, ckpt, tdir in _checkpoint_pairs(checkpoint, test_dir):
        scores, result = evaluate_entity(ckpt, tdir, run.score, run.data.format)
        per_entity[name] = result
        if out_dir is not None:
            dest = out_dir if tdir == test_dir else out_dir / name
            dest.mkdir(parents=True, exist_ok=True)
            scores.write(dest / "scores.txt")
    overall = next(iter(per_entity.values())) if len(per_entity) == 1 else micro_average(list(per_entity.values()))
    return per_entity, overall


def _write_report(out_dir: Path, per_entity: dict, overall: DetectionResult, extra: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.txt").write_text(
        f"F1_best={overall.f1}\nprecision={overall.precision}\nrecall={overall.recall}\n"
        f"threshold={overall.threshold}\ntp={overall.tp}\nfp={overall.fp}\nfn={overall.fn}\n")
    summary = {"overall": dataclasses.asdict(overall),
               "entities": {k: dataclasses.asdict(v) for k, v in per_entity.items()}, **extra}
    (out_dir / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n")


def cmd_evaluate(args) -> int:
    run = _run_config(args)
    out_dir = Path(args.out_dir) if args.out_dir else None
    per_entity, overall = _evaluate(Path(args.checkpoint), Path(args.test_dir), run, out_dir)
    if len(per_entity) > 1:
        for name, r in per_entity.items():
            print(f"[{name}] F1_best={r.f1:.4f} precision={r.precision:.4f} recall={r.recall:.4f} threshold={r.threshold!r}")
        print("[micro-average]")
    print(f"F1_best={overall.f1:.6f}\nprecision={overall.precision:.6f}\nrecall={overall.recall:.6f}\n"
          f"threshold={overall.threshold!r}")
    if out_dir is not None:
        _write_report(out_dir, per_entity, overall, {"score": dataclasses.asdict(run.score)})
        write_manifest(out_dir / MANIFEST_NAME, {"command": "evaluate", "checkpoint": str(args.checkpoint),
                                                 "test_dir": str(args.test_dir), "score": dataclasses.asdict(run.score),
                                                 "argv": sys.argv})
    return EXIT_OK


def cmd_ablate(args) -> int:
    run = _run_config(args)
    data_dir, out_dir = Path(args.data_dir), Path(args.out_dir)
    variants = args.variants.split(",") if args.variants else list(ABLATION_VARIANTS)
    table = {}
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        vrun = dataclasses.replace(run, model={**run.model, "variant": variant})
        vout = out_dir / variant
        _train_all(data_dir, vout / "run", vrun)
        test_dir = Path(args.test_dir) if args.test_dir else data_dir
        ckpt = vout / "run"
        per_entity, overall = _evaluate(ckpt, test_dir, vrun, vout / "eval")
        _write_report(vout / "eval", per_entity, overall, {"variant": variant})
        table[variant] = overall
    lines = ["variant        F1_best   precision recall"]
    lines += [f"{v:<14} {r.f1:.4f}    {r.precision:.4f}    {r.recall:.4f}" for v, r in table.items()]
    text = "\n".join(lines)
    print(text)
    (out_dir / "ablation.txt").write_text(text + "\n")
    (out_dir / "ablation.json").write_text(
        json.dumps({v: dataclasses.asdict(r) for v, r in table.items()}, indent=2) + "\n")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    model, _ = model_from_checkpoint(args.checkpoint)
    graph = model.interaction_graph()
    lines = ["src dst weight"] + [f"{i} {j} {w!r}" for i, j, w in graph.edges()]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"{len(lines) - 1} edges -> {args.out}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import format_results, run_selfcheck

    results = run_selfcheck()
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hifi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("convert", help="convert a public benchmark layout to per-entity text files")
    s.add_argument("--dataset", choices=DATASETS, required=True)
    s.add_argument("in_path")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("synth", help="write the bundled synthetic benchmark")
    s.add_argument("out_dir")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one model per entity")
    s.add_argument("data_dir")
    s.add_argument("out_dir")
    _add_config_flags(s, score=False)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="write per-timestamp anomaly scores")
    s.add_argument("checkpoint")
    s.add_argument("test_dir")
    s.add_argument("--out", required=True)
    _add_config_flags(s, model=False, train=False)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("evaluate", help="best-F1 evaluation under point-adjust")
    s.add_argument("checkpoint", help="checkpoint file, or a run directory with one subdirectory per entity")
    s.add_argument("test_dir")
    s.add_argument("--out_dir", default=None)
    _add_config_flags(s, model=False, train=False)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", help="train and evaluate every model variant")
    s.add_argument("data_dir")
    s.add_argument("out_dir")
    s.add_argument("--test_dir", default=None, help="defaults to data_dir")
    s.add_argument("--variants", default=None, help=f"comma-separated subset of {','.join(ABLATION_VARIANTS)}")
    _add_config_flags(s)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("export-graph", help="write the learned sparse graph as an edge list")
    s.add_argument("checkpoint")
    s.add_argument("out")
    s.set_defaults(func=cmd_export_graph)

    s = sub.add_parser("selfcheck", help="run the embedded invariant checks")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if getattr(args, "seed", "absent") is None and args.command == "synth":
        from .synthetic import DEFAULT_SEED
        args.seed = DEFAULT_SEED
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, DataValidationError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
