"""Run configuration, seeded training/evaluation runs, logs and manifests."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

import secure_lawn
from secure_lawn import augment, oracles
from secure_lawn._validation import ConfigError, TrainingError
from secure_lawn.agents import AgentConfig, OffPolicyAgent, make_agent
from secure_lawn.env import EnvConfig, SecrecyEnv, binding_schema
from secure_lawn.radio import Pose, RadioParams

logger = logging.getLogger(__name__)

CSV_VERSION = 1
CSV_HEADER_COMMENT = f"# secure_lawn episode log v{CSV_VERSION}"
CSV_FIELDS = ("seed", "episode", "return", "base_return", "sum_secrecy", "reached", "steps")
AUGMENTATION_MODES = ("off", "mock", "remote")


@dataclass
class EpisodeRecord:
    seed: int
    episode: int
    ret: float
    base_return: float
    sum_secrecy: float
    reached: bool
    steps: int
    wall_time: float = 0.0

    def row(self) -> list[str]:
        return [
            str(self.seed),
            str(self.episode),
            repr(float(self.ret)),
            repr(float(self.base_return)),
            repr(float(self.sum_secrecy)),
            str(int(self.reached)),
            str(int(self.steps)),
        ]


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    provider: augment.ProviderConfig = field(default_factory=augment.ProviderConfig)
    episodes: int = 300
    seeds: tuple[int, ...] = (0, 1, 2)
    augmentation: str = "off"
    output_dir: str = "runs/default"
    eval_episodes: int = 10

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not isinstance(self.augmentation, str) or not self.augmentation:
            raise ConfigError("augmentation must be 'off', 'mock', 'remote' or a file path")

    @property
    def augmentation_mode(self) -> str:
        return self.augmentation if self.augmentation in AUGMENTATION_MODES else "file"


# ------------------------------------------------------------------ config I/O


def _pose(value) -> Pose:
    if isinstance(value, Pose):
        return value
    if isinstance(value, dict):
        return Pose(value["x"], value["y"], value.get("z", 0.0))
    return Pose.from_seq(value)


def env_config_from_dict(data: dict) -> EnvConfig:
    data = dict(data)
    for key in ("start", "destination", "bs", "jammer", "eve"):
        if key in data:
            data[key] = _pose(data[key])
    if "radio" in data:
        data["radio"] = RadioParams(**data["radio"])
    if "area" in data:
        data["width"], data["height"] = data.pop("area")
    data.pop("augmentation", None)
    return EnvConfig(**data)


def env_config_to_dict(config: EnvConfig) -> dict:
    out = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name == "augmentation":
            continue
        if isinstance(value, Pose):
            value = value.to_list()
        elif isinstance(value, RadioParams):
            value = dataclasses.asdict(value)
        out[f.name] = value
    return out


def run_config_from_dict(data: dict) -> RunConfig:
    try:
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        kwargs["env"] = env_config_from_dict(data.get("env", {}))
        kwargs["agent"] = AgentConfig(**data.get("agent", {}))
        kwargs["provider"] = augment.ProviderConfig(**data.get("provider", {}))
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(kwargs["seeds"])
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def run_config_to_dict(config: RunConfig) -> dict:
    return {
        "env": env_config_to_dict(config.env),
        "agent": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(config.agent).items()},
        "provider": dataclasses.asdict(config.provider),
        "episodes": config.episodes,
        "seeds": list(config.seeds),
        "augmentation": config.augmentation,
        "output_dir": config.output_dir,
        "eval_episodes": config.eval_episodes,
    }


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text("utf-8")
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return run_config_from_dict(data)


# ------------------------------------------------------------- augmentation


def resolve_augmentation(config: RunConfig, notes: list[str] | None = None) -> augment.AugmentationSpec | None:
    """Fetch and validate the augmentation named by ``config.augmentation``.

    Raises :class:`augment.ProviderError` or :class:`augment.AugmentationError`.
    """
    mode = config.augmentation_mode
    if mode == "off":
        return None
    schema = binding_schema()
    if mode == "file":
        try:
            reply = Path(config.augmentation).read_text("utf-8")
        except OSError as exc:
            raise augment.ProviderError(f"cannot read augmentation file: {exc}") from exc
    else:
        provider = dataclasses.replace(config.provider, mode="mock" if mode == "mock" else "remote")
        prompt = augment.build_prompt(config.env, schema)
        reply = augment.request_augmentation(prompt, provider)
    return augment.parse_augmentation(reply, schema, notes)


def with_augmentation(env: EnvConfig, spec: augment.AugmentationSpec | None) -> EnvConfig:
    if spec is None:
        return env
    # fresh spec object so diagnostics are per run
    return dataclasses.replace(env, augmentation=augment.AugmentationSpec.from_dict(spec.to_dict()))


# ------------------------------------------------------------------ training


def seed_streams(master_seed: int) -> tuple[int, int]:
    """Split a master seed into (env seed, agent seed).

    ``SeedSequence(master).spawn(2)`` gives the environment and agent streams;
    the agent splits its own stream into init / exploration / replay sampling.
    """
    env_seq, agent_seq = np.random.SeedSequence(master_seed).spawn(2)
    return int(env_seq.generate_state(1)[0]), int(agent_seq.generate_state(1)[0])


def train_seed(config: RunConfig, env_config: EnvConfig, seed: int) -> tuple[OffPolicyAgent, list[EpisodeRecord]]:
    env_seed, agent_seed = seed_streams(seed)
    env = SecrecyEnv(env_config)
    agent = make_agent(config.agent, random_state=agent_seed)
    records: list[EpisodeRecord] = []
    clock = [time.perf_counter()]

    def on_episode(episode, results):
        now = time.perf_counter()
        records.append(
            EpisodeRecord(
                seed,
                episode,
                float(sum(r.reward for r in results)),
                float(sum(r.base_reward for r in results)),
                float(sum(r.c_sec for r in results)),
                results[-1].terminal_reason == "reached",
                len(results),
                now - clock[0],
            )
        )
        clock[0] = now

    with threadpool_limits(1):
        agent.fit(env, config.episodes, callback=on_episode, seed=env_seed)
    return agent, records


def write_episode_csv(path, records: list[EpisodeRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER_COMMENT + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow(r.row())


def read_episode_csv(path) -> list[EpisodeRecord]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [
        EpisodeRecord(
            int(row["seed"]),
            int(row["episode"]),
            float(row["return"]),
            float(row["base_return"]),
            float(row["sum_secrecy"]),
            bool(int(row["reached"])),
            int(row["steps"]),
        )
        for row in reader
    ]


def versions() -> dict:
    import sklearn

    return {
        "secure_lawn": secure_lawn.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scikit-learn": sklearn.__version__,
    }


def train(config: RunConfig, seeds=None, spec: augment.AugmentationSpec | None = None, resolve: bool = True) -> dict:
    """Train every seed, write logs/checkpoints/manifest; return the manifest."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    notes: list[str] = []
    if spec is None and resolve:
        spec = resolve_augmentation(config, notes)
    env_config = with_augmentation(config.env, spec)
    seeds = tuple(config.seeds if seeds is None else seeds)
    wall = {}
    finals = {}
    for seed in seeds:
        try:
            agent, records = train_seed(config, env_config, seed)
        except TrainingError as exc:
            (out / f"divergence_seed{seed}.json").write_text(
                json.dumps({"error": str(exc), "diagnostics": _plain(exc.diagnostics)}, indent=2, sort_keys=True)
            )
            raise
        write_episode_csv(out / f"episodes_seed{seed}.csv", records)
        agent.save(out / f"agent_seed{seed}.npz", run_config_to_dict(config))
        wall[str(seed)] = sum(r.wall_time for r in records)
        finals[str(seed)] = agent
    manifest = {
        "config": run_config_to_dict(config),
        "augmentation_mode": config.augmentation_mode,
        "augmentation": spec.to_dict() if spec is not None else None,
        "augmentation_notes": notes,
        "augmentation_eval_errors": env_config.augmentation.diagnostics.errors if spec is not None else 0,
        "seeds": list(seeds),
        "seed_split": "SeedSequence(seed).spawn(2) -> (env, agent); agent stream .spawn(3) -> (init, explore, replay)",
        "versions": versions(),
        "wall_time_s": wall,
        "csv_version": CSV_VERSION,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------- evaluation


def rollout(agent: OffPolicyAgent | None, env_config: EnvConfig, seed: int, rng=None):
    """One episode; greedy agent actions, or uniform random ones when ``agent`` is None."""
    env = SecrecyEnv(env_config)
    obs = env.reset(seed)
    results = []
    while True:
        if agent is None:
            action = rng.uniform(-1.0, 1.0, size=env_config.action_dim)
        else:
            action = agent.predict(obs[None, :])[0]
        obs, result = env.step(action)
        results.append(result)
        if result.terminal:
            return results


def evaluate(agent: OffPolicyAgent | None, env_config: EnvConfig, episodes: int, seed: int = 0) -> dict:
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    rng = np.random.default_rng(seed)
    returns, secrecy, reached, steps = [], [], [], []
    with threadpool_limits(1):
        for ep in range(episodes):
            results = rollout(agent, env_config, seed + ep, rng)
            returns.append(sum(r.reward for r in results))
            secrecy.append(sum(r.c_sec for r in results))
            reached.append(results[-1].terminal_reason == "reached")
            steps.append(len(results))
    return {
        "episodes": episodes,
        "mean_return": float(np.mean(returns)),
        "std_return": float(np.std(returns)),
        "mean_sum_secrecy": float(np.mean(secrecy)),
        "arrival_rate": float(np.mean(reached)),
        "mean_steps": float(np.mean(steps)),
    }


# -------------------------------------------------------------------- oracle


def oracle_report(config: RunConfig, grid: int = 10, resolution: int = 256) -> tuple[dict, oracles.DpPlan]:
    """DP benchmark on the config geometry: (JSON-ready summary, full plan)."""
    plan = oracles.dp_trajectory(config.env, grid, resolution, gamma=config.agent.gamma)
    report = {
        "grid": grid,
        "resolution": resolution,
        "dp_value": plan.value,
        "dp_discounted_value": plan.discounted_value,
        "dp_path": [list(c) for c in plan.cell_path],
        "heatmap_max": float(plan.cell_values.max()),
        "heatmap_argmax": [int(i) for i in np.unravel_index(np.argmax(plan.cell_values), plan.cell_values.shape)],
    }
    return report, plan


# -------------------------------------------------------------- learning curves


def moving_average(values, window: int = 20) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    values = np.asarray(values, dtype=float)
    csum = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def episodes_to_fraction(curve, fraction: float = 0.8, tail: int = 50) -> int:
    """First episode at which ``curve`` reaches ``fraction`` of its last-``tail`` mean."""
    curve = np.asarray(curve, dtype=float)
    final = float(np.mean(curve[-tail:]))
    target = fraction * final if final >= 0 else final / fraction
    hits = np.nonzero(curve >= target)[0]
    return int(hits[0]) if len(hits) else len(curve)


def records_matrix(records_by_seed: list[list[EpisodeRecord]], attr: str = "base_return") -> np.ndarray:
    return np.array([[getattr(r, attr) for r in recs] for recs in records_by_seed])
