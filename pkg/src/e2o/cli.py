"""Command-line entry point: dataset generation, training, evaluation, plots."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import checkpoint as ckpt
from .dataset import load_dataset, normalized_score, save_dataset
from .datagen import generate_dataset
from .diagnostics import (
    CurveBundle,
    plot_action_distance,
    plot_avg_q,
    plot_returns,
    summarize,
    summary_csv,
    summary_text,
)
from .envs import make_spec
from .errors import E2OError
from .pipeline import evaluate, load_run_config, run_experiment, train_offline, train_online


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="generate an offline dataset file")
    p.add_argument("--env", required=True, choices=("pendulum", "pointmass"))
    p.add_argument("--kind", required=True,
                   choices=("medium", "medium-replay", "medium-expert"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=100_000)
    p.add_argument("--out", required=True)
    p.add_argument("--ref-steps", type=int, default=None,
                   help="override the reference-policy training step budget")


def _add_run(sub):
    p = sub.add_parser("run", help="full offline-to-online experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=1,
                   help="sweep size; >1 writes one artifact subdirectory per seed")


def _add_train(sub):
    p = sub.add_parser("train-offline", help="offline pre-training only")
    p.add_argument("--config", required=True)
    p = sub.add_parser("train-online", help="online fine-tuning from an offline checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--from", dest="from_ckpt", required=True)


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint's deterministic policy")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=9_000_000)
    p.add_argument("--dataset", default=None, help="report a normalized score against this dataset")


def _add_plot(sub):
    p = sub.add_parser("plot", help="emit an SVG figure plus its data CSV")
    p.add_argument("kind", choices=("returns", "avgq", "actdist"))
    p.add_argument("--runs", nargs="*", default=[], help="run log CSVs (returns/avgq)")
    p.add_argument("--ckpts", nargs="*", default=[], help="checkpoints (actdist)")
    p.add_argument("--dataset", default=None, help="dataset file (actdist)")
    p.add_argument("--labels", nargs="*", default=None)
    p.add_argument("--agg", choices=("per_seed", "mean_std"), default="per_seed")
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--plot-seed", type=int, default=0)
    p.add_argument("--out", required=True)


def _add_summarize(sub):
    p = sub.add_parser("summarize", help="final score / max drop / AUC table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--labels", nargs="*", default=None)
    p.add_argument("--out", default=None, help="write the CSV here (text goes to stdout)")


def _labelled(paths, labels):
    if labels is None:
        labels = [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise E2OError("--labels must match the number of inputs")
    return list(zip(labels, paths))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="e2o")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_data(sub)
    _add_run(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_plot(sub)
    _add_summarize(sub)
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except E2OError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "gen-data":
        spec = make_spec(args.env)
        kind = args.kind.replace("-", "_")
        kwargs = {}
        if args.ref_steps is not None:
            from .datagen import train_reference_policies

            kwargs["refs"] = train_reference_policies(spec, args.seed, total_steps=args.ref_steps)
        ds = generate_dataset(kind, spec, args.seed, args.size, **kwargs)
        save_dataset(ds, args.out)
        print(f"wrote {len(ds)} records to {args.out} "
              f"(random_ref={ds.header.random_ref_score:.1f}, "
              f"expert_ref={ds.header.expert_ref_score:.1f})")
        return 0

    if args.command == "run":
        cfg = load_run_config(args.config)
        failures = 0
        for i in range(args.seeds):
            run_cfg = cfg
            if args.seeds > 1:
                run_cfg = replace(
                    cfg, seed=cfg.seed + i,
                    output_dir=str(Path(cfg.output_dir) / f"seed{cfg.seed + i}"),
                )
            manifest = run_experiment(run_cfg)
            print(f"seed {run_cfg.seed}: {manifest['status']}"
                  + (f" ({manifest['error']})" if manifest["error"] else ""))
            failures += manifest["status"] != "ok"
        return 1 if failures else 0

    if args.command == "train-offline":
        cfg = load_run_config(args.config)
        result = train_offline(cfg)
        print(f"offline checkpoint: {result.ckpt_path} "
              f"(final eval {result.final_eval:.1f}, score {result.final_score:.1f})")
        return 0

    if args.command == "train-online":
        cfg = load_run_config(args.config)
        result = train_online(cfg, args.from_ckpt)
        print(f"online checkpoint: {result.ckpt_path} "
              f"(final eval {result.final_eval:.1f}, score {result.final_score:.1f})")
        return 0

    if args.command == "eval":
        agent, env_id = ckpt.load_checkpoint(args.ckpt)
        spec = make_spec(env_id)
        mean, std = evaluate(agent.policy, spec, args.episodes, args.seed)
        line = f"{env_id}: return {mean:.2f} ± {std:.2f} over {args.episodes} episodes"
        if args.dataset:
            header = load_dataset(args.dataset).header
            line += f", normalized score {normalized_score(mean, header):.2f}"
        print(line)
        return 0

    if args.command == "plot":
        if args.kind == "actdist":
            if not args.ckpts or not args.dataset:
                raise E2OError("plot actdist needs --ckpts and --dataset")
            svg, csv = plot_action_distance(
                args.ckpts, args.dataset, args.out, labels=args.labels,
                sample_size=args.samples, seed=args.plot_seed,
            )
        else:
            if not args.runs:
                raise E2OError(f"plot {args.kind} needs --runs")
            bundle = CurveBundle(_labelled(args.runs, args.labels), aggregation=args.agg)
            plot = plot_returns if args.kind == "returns" else plot_avg_q
            svg, csv = plot(bundle, args.out)
        print(f"wrote {svg} and {csv}")
        return 0

    # summarize
    bundle = CurveBundle(_labelled(args.runs, args.labels))
    rows = summarize(bundle)
    print(summary_text(rows), end="")
    if args.out:
        Path(args.out).write_text(summary_csv(rows))
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
