"""Command line entry point: ``secure-lawn {train,evaluate,oracle,plot,augment}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from secure_lawn import augment, harness, oracles
from secure_lawn._validation import ConfigError, InputError, TrainingError
from secure_lawn.agents import OffPolicyAgent, make_agent
from secure_lawn.env import binding_schema

logger = logging.getLogger("secure_lawn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_DIVERGED = 4


def _load_config(args) -> harness.RunConfig:
    config = harness.load_run_config(args.config) if args.config else harness.RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out is not None:
        changes["output_dir"] = args.out
    return dataclasses.replace(config, **changes) if changes else config


def _require_credential(config: harness.RunConfig) -> None:
    if config.augmentation_mode == "remote" and not os.environ.get(augment.API_KEY_ENV, "").strip():
        raise augment.ProviderError(f"augmentation=remote needs the {augment.API_KEY_ENV} environment variable")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    config = _load_config(args)
    _require_credential(config)
    manifest = harness.train(config)
    summary = {}
    for seed in manifest["seeds"]:
        records = harness.read_episode_csv(Path(config.output_dir) / f"episodes_seed{seed}.csv")
        tail = records[-50:]
        summary[str(seed)] = {
            "last50_mean_return": float(np.mean([r.ret for r in tail])),
            "last50_arrival_rate": float(np.mean([r.reached for r in tail])),
        }
    _emit({"output_dir": config.output_dir, "seeds": summary})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    _require_credential(config)
    env_config = harness.with_augmentation(config.env, harness.resolve_augmentation(config))
    seed = config.seeds[0]
    if args.checkpoint:
        agent = OffPolicyAgent.load(args.checkpoint)
        if agent.obs_dim_ != env_config.obs_dim or agent.act_dim_ != env_config.action_dim:
            raise ConfigError(
                f"checkpoint expects obs/action dims {agent.obs_dim_}/{agent.act_dim_}, "
                f"config gives {env_config.obs_dim}/{env_config.action_dim}"
            )
    elif args.random:
        agent = None
    else:
        _, agent_seed = harness.seed_streams(seed)
        agent = make_agent(config.agent, random_state=agent_seed).initialize(env_config.obs_dim, env_config.action_dim)
    episodes = args.episodes if args.episodes is not None else config.eval_episodes
    summary = harness.evaluate(agent, env_config, episodes, seed)
    summary["policy"] = args.checkpoint or ("random" if args.random else "fresh")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(summary)
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = _load_config(args)
    report, plan = harness.oracle_report(config, args.grid, args.resolution)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    oracles.write_heatmap_csv(out / "heatmap.csv", config.env, plan.cell_values)
    (out / "oracle.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _emit({k: v for k, v in report.items() if k != "dp_path"})
    return EXIT_OK


def _series_from_arg(spec: str, metric: str) -> tuple[str, np.ndarray]:
    label, sep, path = spec.partition("=")
    if not sep:
        path, label = spec, ""
    p = Path(path)
    files = sorted(p.glob("episodes_seed*.csv")) if p.is_dir() else [p]
    if not files:
        raise ConfigError(f"no episode logs found at {path}")
    try:
        runs = [harness.read_episode_csv(f) for f in files]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read episode log {path}: {exc}") from exc
    lengths = {len(r) for r in runs}
    if len(lengths) != 1 or 0 in lengths:
        raise ConfigError(f"episode logs under {path} have unequal or zero length")
    return label or (p.name if p.is_dir() else p.stem), harness.records_matrix(runs, metric)


def cmd_plot(args) -> int:
    from secure_lawn.plotting import render_svg

    attr = _ATTR.get(args.metric, args.metric)
    series = [_series_from_arg(s, attr) for s in args.inputs]
    svg = render_svg(series, ylabel=args.metric.replace("_", " "))
    target = Path(args.out) if args.out else Path("learning_curves.svg")
    if target.suffix.lower() != ".svg":
        target = target / "learning_curves.svg"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(svg)
    _emit({"svg": str(target), "series": [label for label, _ in series]})
    return EXIT_OK


def cmd_augment(args) -> int:
    config = _load_config(args)
    schema = binding_schema()
    prompt = augment.build_prompt(config.env, schema)
    mode = config.augmentation_mode
    if mode == "file":
        reply = Path(config.augmentation).read_text("utf-8")
    else:
        provider = dataclasses.replace(config.provider, mode="remote" if mode == "remote" else "mock")
        reply = augment.request_augmentation(prompt, provider)
    notes: list[str] = []
    spec = augment.parse_augmentation(reply, schema, notes)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "prompt.txt").write_text("=== system ===\n" + prompt.system + "=== user ===\n" + prompt.user)
    (out / "reply.txt").write_text(reply)
    result = {"spec": spec.to_dict(), "notes": notes}
    (out / "augmentation.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _emit(result)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secure-lawn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory (overrides the config)"):
        p.add_argument("--config", metavar="PATH", help="JSON run config")
        p.add_argument("--seed", type=int, metavar="N", help="run only this master seed")
        p.add_argument("--out", metavar="DIR", help=out_help)

    p = sub.add_parser("train", help="train agents, write logs, checkpoints and a manifest")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy rollouts of a checkpoint")
    common(p, "directory for evaluation.json")
    p.add_argument("--checkpoint", metavar="PATH", help="agent .npz; omitted = freshly initialized agent")
    p.add_argument("--random", action="store_true", help="uniform random policy instead of an agent")
    p.add_argument("--episodes", type=int, metavar="N")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="secrecy heatmap and DP trajectory benchmark")
    common(p)
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--resolution", type=int, default=256)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot", help="SVG learning curves from episode logs")
    common(p, "SVG file or directory")
    p.add_argument("inputs", nargs="+", metavar="[LABEL=]PATH", help="run directory or episode CSV, one per curve")
    p.add_argument("--metric", default="return", choices=["return", "base_return", "sum_secrecy"])
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("augment", help="build the prompt, query the provider, validate the reply")
    common(p)
    p.set_defaults(func=cmd_augment)
    return parser


_ATTR = {"return": "ret"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except (augment.ProviderError, augment.AugmentationError) as exc:
        logger.error("augmentation error: %s", exc)
        return EXIT_PROVIDER
    except TrainingError as exc:
        logger.error("training diverged: %s", exc)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
