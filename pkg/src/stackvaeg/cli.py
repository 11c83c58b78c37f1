"""``stackvaeg <subcommand> --config <path>``: synth, train, score, eval, graph, lasso.

Exit codes: 0 success, 2 bad config or missing/unreadable inputs, 3 training
produced a non-finite loss.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, checkpoint, data, detector, trainer
from . import graphlearn as gl
from .config import ConfigError, format_config, load_config

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("stackvaeg")


class InputError(Exception):
    """Bad configuration or a missing artifact; maps to exit code 2."""


def _require(path, what):
    if path is None:
        raise InputError(f"no {what} given")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {p}")
    return p


def _data_path(cfg, key, default_name):
    value = getattr(cfg, key)
    return Path(value) if value else cfg.out_path(default_name)


def _echo_config(cfg, command):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}_config.txt").write_text(format_config(cfg))


def cmd_synth(cfg):
    spec = data.default_synthetic_spec(cfg.synth_channels, cfg.synth_groups, cfg.synth_train_length,
                                       cfg.synth_test_length, cfg.synth_anomalies, cfg.synth_noise,
                                       cfg.seed, cfg.synth_min_duration, cfg.synth_max_duration)
    spec.validate()
    ds, _ = data.generate_synthetic(spec, cfg.seed)
    n = cfg.synth_train_length
    train, test = ds.slice_steps(0, n), ds.slice_steps(n, ds.n_steps)
    paths = {"train": cfg.out_path("train.csv"), "train_labels": cfg.out_path("train_labels.txt"),
             "test": cfg.out_path("test.csv"), "test_labels": cfg.out_path("test_labels.txt"),
             "meta": cfg.out_path("synth_meta.txt")}
    data.save_csv(train, paths["train"])
    data.save_labels(train.labels, paths["train_labels"])
    data.save_csv(test, paths["test"])
    data.save_labels(test.labels, paths["test_labels"])
    data.write_metadata(paths["meta"], spec, cfg.seed, {"train_length": n})
    # validate what was written
    for key, lab in (("train", "train_labels"), ("test", "test_labels")):
        back = data.load_csv(paths[key], paths[lab])
        if back.n_channels != spec.n_channels:
            raise InputError(f"{paths[key]}: wrote {back.n_channels} channels, expected {spec.n_channels}")
    return paths


def _fixed_graph(cfg, n_channels):
    if not cfg.fixed_graph:
        return None
    A = gl.read_adjacency_csv(_require(cfg.fixed_graph, "fixed graph"))
    if A.shape[0] != n_channels:
        raise InputError(f"{cfg.fixed_graph}: {A.shape[0]} channels, data has {n_channels}")
    return A


def cmd_train(cfg, ckpt_path, resume=False):
    train_csv = _require(_data_path(cfg, "train_csv", "train.csv"), "train CSV")
    ds = data.load_csv(train_csv)
    log_path = cfg.out_path("train_log.tsv")
    lines = []

    def on_epoch(run, line):
        lines.append(line)
        with open(log_path, "a") as fh:
            fh.write(line + "\n")

    if resume and ckpt_path.is_file():
        run = checkpoint.load_checkpoint(ckpt_path)
        if run.graph_cfg.n_channels != ds.n_channels:
            raise InputError(f"checkpoint is for {run.graph_cfg.n_channels} channels, data has {ds.n_channels}")
        run.hyper = replace(run.hyper, epochs=cfg.epochs)
    else:
        log_path.write_text("")
        vae_cfg, graph_cfg = cfg.vae_config(), cfg.graph_config(ds.n_channels)
        fixed = _fixed_graph(cfg, ds.n_channels)
        if fixed is not None:
            if (fixed < 0).any() or not np.allclose(fixed.sum(axis=1), 1.0, atol=1e-9):
                raise InputError(f"{cfg.fixed_graph}: fixed graph must be nonnegative and row-stochastic")
            graph_cfg = replace(graph_cfg, graph_weight=0.0)
        run = trainer.init_run(ds.n_channels, vae_cfg, graph_cfg, cfg.train_hyper(), cfg.seed, fixed,
                               cfg.val_fraction, cfg.stride)
    try:
        trainer.fit(run, ds, on_epoch=on_epoch)
    except trainer.TrainingDiverged as exc:
        checkpoint.save_checkpoint(exc.run, ckpt_path.with_suffix(".last_good.bin"))
        raise
    checkpoint.save_checkpoint(run, ckpt_path)
    checkpoint.load_checkpoint(ckpt_path)  # round-trip check
    return run


def cmd_score(cfg, ckpt_path):
    run = checkpoint.load_checkpoint(_require(ckpt_path, "checkpoint"))
    test_csv = _require(_data_path(cfg, "test_csv", "test.csv"), "test CSV")
    ds = data.load_csv(test_csv)
    if ds.n_channels != run.graph_cfg.n_channels:
        raise InputError(f"{test_csv}: {ds.n_channels} channels, model expects {run.graph_cfg.n_channels}")
    ds = data.apply_normalizer(ds, run.norm_stats)
    series, per_channel = detector.score_series(ds.values, run.model, channel_errors=True)
    if cfg.threshold is not None:
        series = series.with_threshold(cfg.threshold)
    out = cfg.out_path("scores.csv")
    detector.write_scores_csv(out, series)
    if cfg.channel_errors:
        detector.write_channel_errors_csv(cfg.out_path("channel_errors.csv"), per_channel)
    scores, _ = detector.read_scores_csv(out)
    if scores.size != ds.n_steps:
        raise InputError(f"{out}: wrote {scores.size} scores for {ds.n_steps} steps")
    return series


def cmd_eval(cfg, scores_path=None):
    scores_path = _require(scores_path or cfg.out_path("scores.csv"), "scores CSV")
    labels_path = _require(_data_path(cfg, "test_labels", "test_labels.txt"), "test labels")
    scores, _ = detector.read_scores_csv(scores_path)
    labels = data.load_labels(labels_path)
    if cfg.threshold is None:
        _, report = detector.best_f1_threshold(labels, scores, cfg.point_adjust)
        mode = "best_f1"
    else:
        report = detector.evaluate(labels, scores, cfg.threshold, cfg.point_adjust)
        mode = "fixed"
    out = cfg.out_path("metrics.json")
    payload = json.loads(report.to_json())
    payload["mode"] = mode
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return report


def cmd_graph(cfg, ckpt_path):
    run = checkpoint.load_checkpoint(_require(ckpt_path, "checkpoint"))
    A = run.model.adjacency().matrix
    paths = gl.export_adjacency(A, cfg.out_dir, "adjacency")
    pix, _ = gl.read_pgm(paths["pgm"])
    if pix.shape != A.shape:
        raise InputError(f"{paths['pgm']}: image is {pix.shape}, adjacency is {A.shape}")
    return A


def cmd_lasso(cfg):
    train_csv = _require(_data_path(cfg, "train_csv", "train.csv"), "train CSV")
    ds = data.load_csv(train_csv)
    ds = data.apply_normalizer(ds, data.fit_normalizer(ds))
    A = baselines.lasso_adjacency(ds.values, cfg.lasso_config()).matrix
    gl.export_adjacency(A, cfg.out_dir, "lasso")
    return A


def build_parser():
    p = argparse.ArgumentParser(prog="stackvaeg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["synth", "train", "score", "eval", "graph", "lasso"])
    p.add_argument("--config", help="key = value config file; omitted keys take defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", help="checkpoint path (default <out>/checkpoint.bin)")
    p.add_argument("--out", help="output directory, overrides out_dir")
    p.add_argument("--scores", help="scores CSV for eval (default <out>/scores.csv)")
    p.add_argument("--resume", action="store_true", help="continue training from --checkpoint")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_command(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.checkpoint is not None:
        overrides["checkpoint"] = args.checkpoint
    cfg = replace(cfg, **overrides)
    _echo_config(cfg, args.command)
    ckpt = cfg.checkpoint_path()
    if args.command == "synth":
        cmd_synth(cfg)
    elif args.command == "train":
        run = cmd_train(cfg, ckpt, args.resume)
        print(f"trained {run.epoch} epochs, checkpoint {ckpt}")
    elif args.command == "score":
        cmd_score(cfg, ckpt)
    elif args.command == "eval":
        r = cmd_eval(cfg, args.scores)
        print(f"precision {r.precision:.4f} recall {r.recall:.4f} f1 {r.f1:.4f} threshold {r.threshold!r}")
    elif args.command == "graph":
        cmd_graph(cfg, ckpt)
    elif args.command == "lasso":
        cmd_lasso(cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        run_command(args)
    except trainer.TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InputError, ConfigError, data.ParseError, checkpoint.CheckpointError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
