"""``switchpred`` command line.

Exit codes: 0 ok, 2 usage, 3 parse/format error, 4 configuration error
(including missing input files), 5 numeric error.

A JSON config file (``--config`` or ``$SWITCHPRED_CONFIG``) supplies
defaults; flags override it.  Recognised sections::

    {"model": {"beta": 5.0, "prior_mean": 0.0, "prior_variance": 1.0},
     "bucketing": {...BucketingConfig fields...},
     "task": "binary", "features": "1,2,3", "epochs": 1,
     "split": {"modulus": 10, "residue": 1},
     "generator": {...GeneratorParams fields...},
     "paths": {"log": "...", "stats": "...", "model_dir": "...", "out": "..."}}
"""

from __future__ import annotations

import argparse
import gzip
import io
import json
import logging
import os
import sys
from dataclasses import asdict, fields

from .adpredictor import ModelConfig
from .errors import ConfigError, FormatError, SwitchPredError
from .evaluation import (
    RankedPrediction,
    check_split_params,
    dataset_stats,
    evaluate,
    in_validation,
    rank_fuse,
    read_scores,
    write_scores,
)
from .features import ALL_FAMILIES, BucketingConfig, CorpusStats, build_corpus_stats, parse_family_list
from .logs import ParseStats, format_record, read_sessions, session_label
from .synthetic import GeneratorParams, write_synthetic
from .tasks import (
    TaskKind,
    TaskSpec,
    feature_ablation_report,
    load_task,
    predict_task,
    save_task,
    train,
    write_predictions,
)

log = logging.getLogger("switchpred")

CONFIG_ENV = "SWITCHPRED_CONFIG"
_CONFIG_SECTIONS = {"model", "bucketing", "task", "features", "epochs", "split", "generator", "paths"}


def load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(cfg, dict) or set(cfg) - _CONFIG_SECTIONS:
        raise ConfigError(f"{path}: unknown sections {sorted(set(cfg) - _CONFIG_SECTIONS)}")
    return cfg


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"no {what} given")
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


class _GzipOut(gzip.GzipFile):
    """Gzip writer with no file name or timestamp in the header, so equal
    content gives equal bytes.  Owns and closes the raw file."""

    def __init__(self, path):
        self._raw = open(path, "wb")
        super().__init__(filename="", mode="wb", fileobj=self._raw, mtime=0)

    def close(self):
        try:
            super().close()
        finally:
            self._raw.close()


def _open_out(path):
    """Text output; ``.gz`` paths are gzip-compressed."""
    path = os.fspath(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(_GzipOut(path), encoding="utf-8", newline="\n")
    return open(path, "w", encoding="utf-8", newline="\n")


def _model_config(args, cfg):
    section = dict(cfg.get("model", {}))
    if args.beta is not None:
        section["beta"] = args.beta
    try:
        return ModelConfig(**section)
    except TypeError as exc:
        raise ConfigError(f"model config: {exc}") from None


def _bucketing(cfg):
    return BucketingConfig.from_dict(cfg.get("bucketing", {}))


def _families(args, cfg):
    text = getattr(args, "features", None) or cfg.get("features")
    if text is None:
        return ALL_FAMILIES
    if isinstance(text, list):
        text = ",".join(map(str, text))
    return parse_family_list(text)


def _task_spec(args, cfg):
    kind = args.task or cfg.get("task", "binary")
    try:
        kind = TaskKind(kind)
    except ValueError:
        raise ConfigError(f"unknown task {kind!r}") from None
    epochs = args.epochs if args.epochs is not None else cfg.get("epochs", 1)
    return TaskSpec(kind, _model_config(args, cfg), _families(args, cfg), _bucketing(cfg), epochs)


def _read(path, args):
    stats = ParseStats()
    yield from read_sessions(_require_file(path, "log"), permissive=args.permissive, stats=stats)
    if stats.skipped:
        log.warning("%s: skipped %d malformed lines of %d", path, stats.skipped, stats.lines)


def _load_stats(path):
    with open(_require_file(path, "corpus stats"), encoding="utf-8") as fh:
        return CorpusStats.from_json(fh.read())


# -- subcommands -----------------------------------------------------------------

def cmd_gen_synthetic(args, cfg):
    section = dict(cfg.get("generator", {}))
    for f in fields(GeneratorParams):
        value = getattr(args, f.name, None)
        if value is not None:
            section[f.name] = value
    try:
        params = GeneratorParams(**section)
    except TypeError as exc:
        raise ConfigError(f"generator config: {exc}") from None
    truth_fh = _open_out(args.truth) if args.truth else None
    labels_fh = _open_out(args.labels) if args.labels else None
    try:
        with _open_out(args.out) as fh:
            truth = write_synthetic(params, fh, truth_fh, labels_fh)
    finally:
        for h in (truth_fh, labels_fh):
            if h is not None:
                h.close()
    print(json.dumps({"sessions": params.n_sessions, "expected_switch_rate": truth.expected_rate}))


def cmd_stats(args, cfg):
    st = dataset_stats(_read(args.log, args))
    print(json.dumps(st._asdict()))


def cmd_split(args, cfg):
    split = cfg.get("split", {})
    modulus = args.modulus if args.modulus is not None else split.get("modulus", 10)
    residue = args.residue if args.residue is not None else split.get("residue", 1)
    check_split_params(modulus, residue)
    counts = {"train": 0, "validation": 0}
    with _open_out(args.train_out) as tr, _open_out(args.valid_out) as va:
        for s in _read(args.log, args):
            side = "validation" if in_validation(s.session_id, modulus, residue) else "train"
            out = va if side == "validation" else tr
            for rec in s.records():
                out.write(format_record(rec) + "\n")
            counts[side] += 1
    print(json.dumps(counts))


def cmd_build_stats(args, cfg):
    stats = build_corpus_stats(_read(args.log, args))
    with _open_out(args.out) as fh:
        fh.write(stats.to_json())


def cmd_train(args, cfg):
    spec = _task_spec(args, cfg)
    stats = _load_stats(args.stats)
    models = train(spec, _read(args.log, args), stats, in_stats=not args.no_leave_one_out)
    if args.model_dir is None:
        raise ConfigError("no --model-dir given")
    save_task(args.model_dir, spec, models)
    print(json.dumps({k: m.observations_seen for k, m in sorted(models.items())}))


def cmd_predict(args, cfg):
    spec, models = load_task(_require_file(args.model_dir, "model directory"))
    stats = _load_stats(args.stats)
    preds = predict_task(spec, models, _read(args.log, args), stats)
    with _open_out(args.out) as fh:
        write_predictions(fh, spec, preds)


def cmd_ensemble(args, cfg):
    rankings = []
    for path in args.inputs:
        with open(_require_file(path, "prediction file"), encoding="utf-8") as fh:
            rankings.append(RankedPrediction(read_scores(fh)))
    fused = rank_fuse(rankings)
    with _open_out(args.out) as fh:
        write_scores(fh, fused.entries)


def cmd_evaluate(args, cfg):
    with open(_require_file(args.predictions, "prediction file"), encoding="utf-8") as fh:
        scores = read_scores(fh)
    labels = {s.session_id: session_label(s) for s in _read(args.log, args)}
    missing = [sid for sid, _ in scores if sid not in labels]
    if missing:
        raise FormatError(f"{len(missing)} scored sessions missing from log, e.g. {missing[:5]}")
    print(json.dumps(asdict(evaluate(scores, labels))))


def cmd_ablate(args, cfg):
    train_sessions = list(_read(args.train, args))
    valid_sessions = list(_read(args.valid, args))
    stats = build_corpus_stats(train_sessions)
    base = parse_family_list(args.base)
    candidate = parse_family_list(args.candidate)
    args.task = "binary"
    spec = _task_spec(args, cfg)
    report = feature_ablation_report(base, candidate, train_sessions, valid_sessions, stats, spec)
    print(json.dumps({
        "candidate": sorted(report.candidate),
        "base_auc": report.base_auc,
        "candidate_auc": report.candidate_auc,
        "delta": report.delta,
        "decision": "keep" if report.keep else "discard",
    }))


def build_parser():
    parser = argparse.ArgumentParser(prog="switchpred", description="Search engine switch prediction with AdPredictor.")
    parser.add_argument("--config", default=os.environ.get(CONFIG_ENV), help=f"JSON config file (default: ${CONFIG_ENV})")
    parser.add_argument("--permissive", action="store_true", help="skip malformed log lines instead of failing")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--beta", type=float, help="probit noise scale (default 5.0)")
        p.add_argument("--features", help="enabled families, e.g. 1,3,7,16 (default all)")
        p.add_argument("--epochs", type=int)

    p = sub.add_parser("gen-synthetic", help="write a synthetic log with known ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="JSON file for generating weights")
    p.add_argument("--labels", help="TSV file of per-session ground truth")
    for name in ("n_sessions", "n_users", "n_queries", "n_urls", "seed"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    p.add_argument("--switch-rate", dest="switch_rate", type=float)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("stats", help="count sessions, users, queries and URLs")
    p.add_argument("--log")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="proportional validation split by session ID")
    p.add_argument("--log")
    p.add_argument("--train-out", required=True)
    p.add_argument("--valid-out", required=True)
    p.add_argument("--modulus", type=int)
    p.add_argument("--residue", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-stats", help="corpus statistics from a training log")
    p.add_argument("--log")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_stats)

    p = sub.add_parser("train", help="train the models of a task")
    p.add_argument("--task", choices=[k.value for k in TaskKind])
    p.add_argument("--log")
    p.add_argument("--stats")
    p.add_argument("--model-dir")
    p.add_argument("--no-leave-one-out", action="store_true",
                   help="training log was not counted into --stats")
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict switch probabilities")
    p.add_argument("--model-dir")
    p.add_argument("--log")
    p.add_argument("--stats")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", help="fuse prediction files by harmonic mean of ranks")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate", help="AUC of a prediction or submission file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="keep/discard decision for candidate feature families")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--base", default="1,3,7,16")
    p.add_argument("--candidate", required=True)
    model_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


_PATH_ARGS = ("log", "stats", "model_dir", "out")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        for name in _PATH_ARGS:
            if hasattr(args, name) and getattr(args, name) is None:
                setattr(args, name, cfg.get("paths", {}).get(name))
        if hasattr(args, "out") and args.out is None:
            raise ConfigError("no --out given")
        args.func(args, cfg)
    except SwitchPredError as exc:
        print(f"switchpred: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"switchpred: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
