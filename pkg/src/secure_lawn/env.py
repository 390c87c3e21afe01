"""Episodic secure-communication MDP: AAV kinematics, observations and rewards."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, NamedTuple, Sequence

import numpy as np

from secure_lawn import dsl
from secure_lawn._validation import ConfigError, InputError, UsageError
from secure_lawn.radio import Pose, RadioParams, distance, step_secrecy

if TYPE_CHECKING:
    from secure_lawn.augment import AugmentationSpec

BASE_FEATURES = (
    "pos_x",
    "pos_y",
    "dest_dx",
    "dest_dy",
    "dist_jam",
    "dist_eve",
    "dist_bs",
    "prev_csec",
    "t_frac",
)

# Extra names visible to expressions but not part of the observation.
_ACTORS = ("aav", "bs", "jam", "eve", "dest")
STEP_SCALARS = ("c_legit", "c_eve", "c_sec", "progress")
CONTEXT_SCALARS = ("diag", "v_max")


@dataclass(frozen=True)
class EnvConfig:
    width: float = 200.0
    height: float = 200.0
    start: Pose = Pose(0.0, 0.0, 100.0)
    destination: Pose = Pose(200.0, 200.0, 100.0)
    bs: Pose = Pose(100.0, 0.0, 0.0)
    jammer: Pose = Pose(40.0, 150.0, 0.0)
    eve: Pose = Pose(150.0, 100.0, 80.0)
    aav_altitude: float = 100.0
    v_max: float = 10.0
    dt: float = 1.0
    horizon: int = 100
    arrival_radius: float = 5.0
    w_sec: float = 0.1
    w_prog: float = 1.0
    arrival_bonus: float = 10.0
    start_jitter: float = 0.0
    radio: RadioParams = field(default_factory=RadioParams)
    augmentation: "AugmentationSpec | None" = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("area dimensions must be positive")
        if self.horizon < 1 or int(self.horizon) != self.horizon:
            raise ConfigError(f"horizon must be an integer >= 1, got {self.horizon}")
        if self.v_max <= 0 or self.dt <= 0:
            raise ConfigError("v_max and dt must be positive")
        if self.arrival_radius <= 0:
            raise ConfigError("arrival_radius must be positive")
        if self.start_jitter < 0:
            raise ConfigError("start_jitter must be >= 0")
        if self.aav_altitude < 0:
            raise ConfigError("aav_altitude must be >= 0")
        # AAV waypoints live at the flight altitude.
        object.__setattr__(self, "start", replace(self.start, z=float(self.aav_altitude)))
        object.__setattr__(
            self, "destination", replace(self.destination, z=float(self.aav_altitude))
        )
        for name in ("start", "destination"):
            p = getattr(self, name)
            if not (0 <= p.x <= self.width and 0 <= p.y <= self.height):
                raise ConfigError(f"{name} lies outside the area")
        if self.start == self.destination:
            raise ConfigError("start and destination must differ")
        if self.augmentation is not None:
            clash = set(self.augmentation.feature_names) & binding_schema(self).names
            if clash:
                raise ConfigError(f"augmented feature names clash with base names: {sorted(clash)}")

    @property
    def diag(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def action_dim(self) -> int:
        return 2 + 2 * self.radio.num_antennas

    @property
    def feature_names(self) -> tuple[str, ...]:
        aug = self.augmentation.feature_names if self.augmentation is not None else ()
        return BASE_FEATURES + tuple(aug)

    @property
    def obs_dim(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class EnvState:
    aav: Pose
    t: int
    base_features: dict
    augmented_features: dict
    terminal: bool = False

    def observation(self) -> np.ndarray:
        values = list(self.base_features.values()) + list(self.augmented_features.values())
        return np.array(values, dtype=np.float64)


class StepResult(NamedTuple):
    next_state: EnvState
    reward: float
    base_reward: float
    intrinsic: float
    c_legit: float
    c_eve: float
    c_sec: float
    terminal: bool
    terminal_reason: str | None


class EpisodeReturn(NamedTuple):
    sum_reward: float
    sum_secrecy: float
    reached: bool


def binding_schema(config: EnvConfig | None = None) -> dsl.VarSchema:
    """Variables an augmentation expression may reference."""
    scalars = list(BASE_FEATURES)
    for actor in _ACTORS:
        scalars += [f"{actor}_x", f"{actor}_y", f"{actor}_z"]
    scalars += list(STEP_SCALARS) + list(CONTEXT_SCALARS)
    vectors = {f"{actor}_pos": 3 for actor in _ACTORS}
    return dsl.VarSchema(tuple(scalars), vectors)


def _base_features(config: EnvConfig, aav: Pose, t: int, prev_csec: float) -> dict:
    diag = config.diag
    dest = config.destination
    return {
        "pos_x": aav.x / diag,
        "pos_y": aav.y / diag,
        "dest_dx": (dest.x - aav.x) / diag,
        "dest_dy": (dest.y - aav.y) / diag,
        "dist_jam": distance(aav, config.jammer) / diag,
        "dist_eve": distance(aav, config.eve) / diag,
        "dist_bs": distance(aav, config.bs) / diag,
        "prev_csec": prev_csec,
        "t_frac": t / config.horizon,
    }


def make_binding(config: EnvConfig, aav: Pose, base: dict, step: dict | None = None) -> dict:
    binding = dict(base)
    poses = {
        "aav": aav,
        "bs": config.bs,
        "jam": config.jammer,
        "eve": config.eve,
        "dest": config.destination,
    }
    for actor, pose in poses.items():
        binding[f"{actor}_x"] = pose.x
        binding[f"{actor}_y"] = pose.y
        binding[f"{actor}_z"] = pose.z
        binding[f"{actor}_pos"] = pose.as_array()
    for name in STEP_SCALARS:
        binding[name] = 0.0 if step is None else float(step[name])
    binding["diag"] = config.diag
    binding["v_max"] = config.v_max
    return binding


def _augmented_features(config: EnvConfig, binding: dict) -> dict:
    spec = config.augmentation
    if spec is None:
        return {}
    return {
        name: dsl.guarded_eval(expr, binding, 0.0, spec.diagnostics)
        for name, expr in spec.compiled_features
    }


def reset(config: EnvConfig, seed: int = 0) -> EnvState:
    start = config.start
    if config.start_jitter > 0:
        rng = np.random.default_rng(seed)
        dx, dy = rng.uniform(-config.start_jitter, config.start_jitter, size=2)
        start = replace(
            start,
            x=float(np.clip(start.x + dx, 0, config.width)),
            y=float(np.clip(start.y + dy, 0, config.height)),
        )
    base = _base_features(config, start, 0, 0.0)
    aug = _augmented_features(config, make_binding(config, start, base))
    return EnvState(start, 0, base, aug)


def decode_action(action, config: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Map a box action in ``[-1, 1]^(2+2M)`` to (velocity m/s, full-power beamformer)."""
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    m = config.radio.num_antennas
    if a.shape != (2 + 2 * m,):
        raise InputError(f"action must have {2 + 2 * m} entries, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise InputError("action has non-finite components")
    a = np.clip(a, -1.0, 1.0)
    velocity = a[:2] * config.v_max
    speed = math.hypot(velocity[0], velocity[1])
    if speed > config.v_max:
        velocity = velocity * (config.v_max / speed)
    w = a[2 : 2 + m] + 1j * a[2 + m :]
    norm = float(np.linalg.norm(w))
    if norm < 1e-12:
        w = np.ones(m, dtype=complex)
        norm = math.sqrt(m)
    w = w * (math.sqrt(config.radio.p_max) / norm)
    return velocity, w


def step(state: EnvState, action, config: EnvConfig) -> StepResult:
    if state.terminal:
        raise UsageError("cannot step a terminal state; call reset()")
    velocity, w = decode_action(action, config)
    old = state.aav
    new = Pose(
        float(np.clip(old.x + velocity[0] * config.dt, 0.0, config.width)),
        float(np.clip(old.y + velocity[1] * config.dt, 0.0, config.height)),
        old.z,
    )
    phys = step_secrecy(config.bs, new, config.eve, config.jammer, w, config.radio)
    d_prev = distance(old, config.destination)
    d_cur = distance(new, config.destination)
    progress = (d_prev - d_cur) / (config.v_max * config.dt)
    reached = d_cur <= config.arrival_radius
    base_reward = (
        config.w_sec * phys.c_sec
        + config.w_prog * progress
        + (config.arrival_bonus if reached else 0.0)
    )
    t = state.t + 1
    base = _base_features(config, new, t, phys.c_sec)
    binding = make_binding(
        config,
        new,
        base,
        {"c_legit": phys.c_legit, "c_eve": phys.c_eve, "c_sec": phys.c_sec, "progress": progress},
    )
    aug = _augmented_features(config, binding)
    intrinsic = 0.0
    reward = base_reward
    spec = config.augmentation
    if spec is not None:
        intrinsic = dsl.guarded_eval(spec.compiled_intrinsic, binding, 0.0, spec.diagnostics)
        reward = base_reward + spec.weight * intrinsic
    reason = "reached" if reached else ("horizon" if t >= config.horizon else None)
    terminal = reason is not None
    next_state = EnvState(new, t, base, aug, terminal)
    return StepResult(
        next_state,
        reward,
        base_reward,
        intrinsic,
        phys.c_legit,
        phys.c_eve,
        phys.c_sec,
        terminal,
        reason,
    )


def episode_return(results: Sequence[StepResult]) -> EpisodeReturn:
    if len(results) == 0:
        raise InputError("episode_return needs at least one step")
    return EpisodeReturn(
        float(sum(r.reward for r in results)),
        float(sum(r.c_sec for r in results)),
        results[-1].terminal_reason == "reached",
    )


class SecrecyEnv:
    """Stateful wrapper with the usual ``reset``/``step`` loop interface."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.state: EnvState | None = None

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    def reset(self, seed: int = 0) -> np.ndarray:
        self.state = reset(self.config, seed)
        return self.state.observation()

    def step(self, action) -> tuple[np.ndarray, StepResult]:
        if self.state is None:
            raise UsageError("call reset() before step()")
        result = step(self.state, action, self.config)
        self.state = result.next_state
        return self.state.observation(), result


TRACE_FIELDS = ("t", "x", "y", "c_legit", "c_eve", "c_sec", "reward")


def write_trace(path, results: Iterable[StepResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for r in results:
            s = r.next_state
            writer.writerow(
                [s.t, repr(s.aav.x), repr(s.aav.y), repr(r.c_legit), repr(r.c_eve), repr(r.c_sec), repr(r.reward)]
            )
