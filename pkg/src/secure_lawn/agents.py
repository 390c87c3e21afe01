"""Off-policy actor-critic agents (DDPG, TD3, SAC) on the numpy MLP substrate.

Agents follow the scikit-learn estimator conventions: hyperparameters are
constructor arguments (so ``get_params``/``set_params``/``clone`` work), learned
state lives in trailing-underscore attributes, ``fit`` trains against an
environment and ``predict`` returns greedy actions for a batch of observations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from secure_lawn._validation import InputError, TrainingError, check_observations
from secure_lawn.nn import Adam, Mlp, soft_update

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
CHECKPOINT_VERSION = 1


# ------------------------------------------------------------------ replay


class ReplayBuffer:
    """Fixed-capacity ring buffer; oldest transitions are evicted first."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise InputError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, act, rew: float, next_obs, done: bool) -> None:
        act = np.asarray(act, dtype=np.float64)
        if np.any(np.abs(act) > 1.0) or not np.all(np.isfinite(act)):
            raise InputError("stored actions must be finite and inside [-1, 1]")
        if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(next_obs)) and math.isfinite(rew)):
            raise InputError("transition has non-finite entries")
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self.size:
            raise InputError(f"batch {batch_size} exceeds buffer size {self.size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = self.sample_indices(batch_size, rng)
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "rew": self.rew[idx],
            "next_obs": self.next_obs[idx],
            "done": self.done[idx],
        }


# ------------------------------------------------------------------ losses
#
# Each loss returns (value, gradients w.r.t. the parameters it trains). Noise
# draws are passed in so the losses are deterministic functions of the weights.


def critic_loss(critic: Mlp, obs, act, target) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error ``mean((Q(s, a) - y)^2)``."""
    q, cache = critic.forward(np.concatenate([obs, act], axis=1), keep=True)
    err = q[:, 0] - target
    grads, _ = critic.backward(cache, (2.0 / len(err)) * err[:, None])
    return float(np.mean(err * err)), grads


def _critic_on_actions(critic: Mlp, obs, act):
    q, cache = critic.forward(np.concatenate([obs, act], axis=1), keep=True)
    return q[:, 0], cache


def _action_grad_from(critic: Mlp, cache, weight, obs_dim: int) -> np.ndarray:
    """d(sum weight * Q)/da from a kept forward pass."""
    _, g_in = critic.backward(cache, weight[:, None], need_input_grad=True, need_param_grads=False)
    return g_in[:, obs_dim:]


def deterministic_actor_loss(actor: Mlp, critic: Mlp, obs) -> tuple[float, list[np.ndarray]]:
    """``-mean Q(s, tanh(mu(s)))`` for DDPG/TD3."""
    u, cache = actor.forward(obs, keep=True)
    a = np.tanh(u)
    n = len(obs)
    q, c_cache = _critic_on_actions(critic, obs, a)
    g_a = _action_grad_from(critic, c_cache, np.full(n, -1.0 / n), obs.shape[1])
    grads, _ = actor.backward(cache, g_a * (1.0 - a * a))
    return float(-np.mean(q)), grads


def _gaussian_head(out: np.ndarray, act_dim: int):
    mean = out[:, :act_dim]
    th = np.tanh(out[:, act_dim:])
    half_span = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
    log_std = LOG_STD_MIN + half_span * (th + 1.0)
    return mean, log_std, half_span * (1.0 - th * th)


def _log1m_tanh_sq(x: np.ndarray) -> np.ndarray:
    """``log(1 - tanh(x)^2)`` without cancellation."""
    return 2.0 * (math.log(2.0) - x - np.logaddexp(0.0, -2.0 * x))


def squashed_gaussian(actor: Mlp, obs, eps, keep: bool = False):
    """Reparameterised tanh-Gaussian sample and its log-density."""
    act_dim = eps.shape[1]
    out, cache = actor.forward(obs, keep=True)
    mean, log_std, dls = _gaussian_head(out, act_dim)
    std = np.exp(log_std)
    pre = mean + std * eps
    a = np.tanh(pre)
    logp = np.sum(-0.5 * eps * eps - log_std - _HALF_LOG_2PI - _log1m_tanh_sq(pre), axis=1)
    if keep:
        return a, logp, (cache, std, dls)
    return a, logp


def sac_actor_loss(actor: Mlp, q1: Mlp, q2: Mlp, obs, eps, alpha: float) -> tuple[float, list[np.ndarray]]:
    """``mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a))`` with ``a`` reparameterised."""
    loss, grads, _ = _sac_actor_terms(actor, q1, q2, obs, eps, alpha)
    return loss, grads


def _sac_actor_terms(actor, q1, q2, obs, eps, alpha):
    n, obs_dim = obs.shape
    a, logp, (cache, std, dls) = squashed_gaussian(actor, obs, eps, keep=True)
    q1v, c1 = _critic_on_actions(q1, obs, a)
    q2v, c2 = _critic_on_actions(q2, obs, a)
    pick1 = q1v <= q2v
    qmin = np.where(pick1, q1v, q2v)
    w1 = np.where(pick1, -1.0 / n, 0.0)
    g_a = _action_grad_from(q1, c1, w1, obs_dim) + _action_grad_from(q2, c2, (-1.0 / n) - w1, obs_dim)
    g_pre = (alpha / n) * 2.0 * a + g_a * (1.0 - a * a)
    g_log_std = -(alpha / n) + g_pre * std * eps
    grads, _ = actor.backward(cache, np.concatenate([g_pre, g_log_std * dls], axis=1))
    return float(np.mean(alpha * logp - qmin)), grads, logp


def alpha_loss(log_alpha: float, logp, target_entropy: float) -> tuple[float, float]:
    """Temperature loss ``-mean(log_alpha * (log pi + H_target))`` and its derivative."""
    slack = np.asarray(logp) + target_entropy
    return float(-log_alpha * np.mean(slack)), float(-np.mean(slack))


# ------------------------------------------------------------------ config


@dataclass
class AgentConfig:
    algorithm: str = "td3"
    hidden_sizes: tuple[int, ...] = (128, 128)
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    buffer_size: int = 100_000
    warmup_steps: int = 1000
    exploration_noise: float = 0.1
    target_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    alpha: float | str = "auto"
    alpha_lr: float = 3e-4
    init_alpha: float = 0.1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in AGENTS:
            raise InputError(f"unknown algorithm {self.algorithm!r}")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise InputError("learning rates must be > 0")
        if not 0.0 < self.gamma < 1.0:
            raise InputError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise InputError("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise InputError("need 1 <= batch_size <= buffer_size")

    def estimator_params(self) -> dict:
        params = asdict(self)
        algo = params.pop("algorithm")
        params.pop("extra")
        keys = AGENTS[algo]._get_param_names()
        return {k: v for k, v in params.items() if k in keys}


# ------------------------------------------------------------------ agents


class OffPolicyAgent(BaseEstimator):
    algorithm = "base"

    def __init__(
        self,
        hidden_sizes=(128, 128),
        actor_lr=3e-4,
        critic_lr=3e-4,
        gamma=0.99,
        tau=0.005,
        batch_size=256,
        buffer_size=100_000,
        warmup_steps=1000,
        random_state=None,
    ):
        self.hidden_sizes = hidden_sizes
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.gamma = gamma
        self.tau = tau
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.warmup_steps = warmup_steps
        self.random_state = random_state

    # -- setup

    def _streams(self):
        """Independent RNG streams derived from ``random_state``: init, explore, buffer."""
        seq = np.random.SeedSequence(self.random_state)
        init, explore, buffer = seq.spawn(3)
        return (
            np.random.default_rng(init),
            np.random.default_rng(explore),
            np.random.default_rng(buffer),
        )

    def initialize(self, obs_dim: int, act_dim: int) -> "OffPolicyAgent":
        if not 0.0 < self.tau <= 1.0:
            raise InputError("tau must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise InputError("gamma must lie in (0, 1)")
        self.obs_dim_ = int(obs_dim)
        self.act_dim_ = int(act_dim)
        init_rng, self.explore_rng_, self.sample_rng_ = self._streams()
        self._build(init_rng)
        self.n_updates_ = 0
        self.n_actor_updates_ = 0
        return self

    def _critic(self, rng) -> Mlp:
        return Mlp([self.obs_dim_ + self.act_dim_, *self.hidden_sizes, 1], rng)

    def _check_finite(self, losses: dict) -> None:
        bad = {k: v for k, v in losses.items() if not math.isfinite(v)}
        nets_ok = all(net.all_finite() for net in self._nets().values())
        if bad or not nets_ok:
            raise TrainingError(
                f"non-finite training state after update {self.n_updates_}: {bad or 'parameters'}",
                {"losses": losses, "n_updates": self.n_updates_},
            )

    # -- acting

    def predict(self, X) -> np.ndarray:
        """Greedy actions for a batch of observations."""
        check_is_fitted(self, "actor_")
        X = check_observations(X, self.obs_dim_)
        return self._greedy(X)

    def select_action(self, obs, explore: bool = False) -> np.ndarray:
        check_is_fitted(self, "actor_")
        X = check_observations(obs, self.obs_dim_)
        if not explore:
            return self._greedy(X)[0]
        return self._explore(X)[0]

    def random_action(self) -> np.ndarray:
        return self.explore_rng_.uniform(-1.0, 1.0, size=self.act_dim_)

    # -- training

    def update(self, buffer: ReplayBuffer) -> dict[str, float]:
        check_is_fitted(self, "actor_")
        if len(buffer) < max(self.batch_size, 1):
            raise InputError("buffer smaller than batch size")
        batch = buffer.sample(self.batch_size, self.sample_rng_)
        losses = self._update(batch)
        self.n_updates_ += 1
        self._check_finite(losses)
        return losses

    def fit(self, env, n_episodes: int = 300, callback=None, seed: int = 0):
        """Train against ``env`` (``reset(seed)`` / ``step(action)``) for ``n_episodes``.

        ``callback(episode, results)`` receives each finished episode's step results.
        """
        if not hasattr(self, "actor_"):
            self.initialize(env.obs_dim, env.action_dim)
        buffer = ReplayBuffer(self.buffer_size, self.obs_dim_, self.act_dim_)
        self.buffer_ = buffer
        total = 0
        for episode in range(n_episodes):
            obs = env.reset(seed + episode)
            results = []
            while True:
                if total < self.warmup_steps:
                    action = self.random_action()
                else:
                    action = self.select_action(obs, explore=True)
                next_obs, result = env.step(action)
                buffer.add(obs, action, result.reward, next_obs, result.terminal)
                total += 1
                if total >= self.warmup_steps and len(buffer) >= self.batch_size:
                    self.update(buffer)
                results.append(result)
                obs = next_obs
                if result.terminal:
                    break
            if callback is not None:
                callback(episode, results)
        return self

    # -- persistence

    def save(self, path, config_echo: dict | None = None) -> None:
        check_is_fitted(self, "actor_")
        arrays = {}
        for name, net in self._nets().items():
            for key, value in net.state().items():
                arrays[f"{name}/{key}"] = value
        arrays["log_alpha"] = np.array(getattr(self, "log_alpha_", 0.0))
        meta = {
            "version": CHECKPOINT_VERSION,
            "algorithm": self.algorithm,
            "params": _jsonable(self.get_params()),
            "obs_dim": self.obs_dim_,
            "act_dim": self.act_dim_,
            "config": config_echo or {},
        }
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @staticmethod
    def load(path) -> "OffPolicyAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta["version"] != CHECKPOINT_VERSION:
                raise InputError(f"unsupported checkpoint version {meta['version']}")
            params = meta["params"]
            params["hidden_sizes"] = tuple(params["hidden_sizes"])
            agent = AGENTS[meta["algorithm"]](**params)
            agent.initialize(meta["obs_dim"], meta["act_dim"])
            for name, net in agent._nets().items():
                net.load_state({k: data[f"{name}/{k}"] for k in net.state()})
            if hasattr(agent, "log_alpha_"):
                agent.log_alpha_ = float(data["log_alpha"])
                if hasattr(agent, "_log_alpha_arr"):
                    agent._log_alpha_arr[0] = agent.log_alpha_
            agent.checkpoint_config_ = meta.get("config", {})
        return agent


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


class DDPGAgent(OffPolicyAgent):
    algorithm = "ddpg"

    def __init__(
        self,
        hidden_sizes=(128, 128),
        actor_lr=3e-4,
        critic_lr=3e-4,
        gamma=0.99,
        tau=0.005,
        batch_size=256,
        buffer_size=100_000,
        warmup_steps=1000,
        exploration_noise=0.1,
        random_state=None,
    ):
        super().__init__(hidden_sizes, actor_lr, critic_lr, gamma, tau, batch_size, buffer_size, warmup_steps, random_state)
        self.exploration_noise = exploration_noise

    def _build(self, rng):
        self.actor_ = Mlp([self.obs_dim_, *self.hidden_sizes, self.act_dim_], rng)
        self.critic1_ = self._critic(rng)
        self.actor_target_ = self.actor_.copy()
        self.critic1_target_ = self.critic1_.copy()
        self.actor_opt_ = Adam(self.actor_.params, self.actor_lr)
        self.critic1_opt_ = Adam(self.critic1_.params, self.critic_lr)

    def _nets(self) -> dict[str, Mlp]:
        return {
            "actor": self.actor_,
            "critic1": self.critic1_,
            "actor_target": self.actor_target_,
            "critic1_target": self.critic1_target_,
        }

    def _greedy(self, X):
        return np.tanh(self.actor_(X))

    def _explore(self, X):
        a = self._greedy(X)
        a = a + self.exploration_noise * self.explore_rng_.standard_normal(a.shape)
        return np.clip(a, -1.0, 1.0)

    def td_target(self, batch) -> np.ndarray:
        nxt = batch["next_obs"]
        a2 = np.tanh(self.actor_target_(nxt))
        q = self.critic1_target_(np.concatenate([nxt, a2], axis=1))[:, 0]
        return batch["rew"] + self.gamma * (1.0 - batch["done"]) * q

    def _update(self, batch):
        y = self.td_target(batch)
        c_loss, grads = critic_loss(self.critic1_, batch["obs"], batch["act"], y)
        self.critic1_opt_.step(grads)
        a_loss, grads = deterministic_actor_loss(self.actor_, self.critic1_, batch["obs"])
        self.actor_opt_.step(grads)
        self.n_actor_updates_ += 1
        soft_update(self.critic1_target_, self.critic1_, self.tau)
        soft_update(self.actor_target_, self.actor_, self.tau)
        return {"critic_loss": c_loss, "actor_loss": a_loss}


class TD3Agent(DDPGAgent):
    algorithm = "td3"

    def __init__(
        self,
        hidden_sizes=(128, 128),
        actor_lr=3e-4,
        critic_lr=3e-4,
        gamma=0.99,
        tau=0.005,
        batch_size=256,
        buffer_size=100_000,
        warmup_steps=1000,
        exploration_noise=0.1,
        target_noise=0.2,
        noise_clip=0.5,
        policy_delay=2,
        random_state=None,
    ):
        super().__init__(
            hidden_sizes, actor_lr, critic_lr, gamma, tau, batch_size, buffer_size, warmup_steps, exploration_noise, random_state
        )
        self.target_noise = target_noise
        self.noise_clip = noise_clip
        self.policy_delay = policy_delay

    def _build(self, rng):
        super()._build(rng)
        self.critic2_ = self._critic(rng)
        self.critic2_target_ = self.critic2_.copy()
        self.critic2_opt_ = Adam(self.critic2_.params, self.critic_lr)

    def _nets(self):
        nets = super()._nets()
        nets.update(critic2=self.critic2_, critic2_target=self.critic2_target_)
        return nets

    def td_target(self, batch, noise=None) -> np.ndarray:
        nxt = batch["next_obs"]
        a2 = np.tanh(self.actor_target_(nxt))
        if noise is None:
            noise = self.sample_rng_.standard_normal(a2.shape)
        noise = np.clip(self.target_noise * noise, -self.noise_clip, self.noise_clip)
        a2 = np.clip(a2 + noise, -1.0, 1.0)
        x = np.concatenate([nxt, a2], axis=1)
        q = np.minimum(self.critic1_target_(x)[:, 0], self.critic2_target_(x)[:, 0])
        return batch["rew"] + self.gamma * (1.0 - batch["done"]) * q

    def _update(self, batch):
        y = self.td_target(batch)
        l1, g1 = critic_loss(self.critic1_, batch["obs"], batch["act"], y)
        l2, g2 = critic_loss(self.critic2_, batch["obs"], batch["act"], y)
        self.critic1_opt_.step(g1)
        self.critic2_opt_.step(g2)
        losses = {"critic_loss": l1 + l2}
        if (self.n_updates_ + 1) % self.policy_delay == 0:
            a_loss, grads = deterministic_actor_loss(self.actor_, self.critic1_, batch["obs"])
            self.actor_opt_.step(grads)
            self.n_actor_updates_ += 1
            losses["actor_loss"] = a_loss
            soft_update(self.critic1_target_, self.critic1_, self.tau)
            soft_update(self.critic2_target_, self.critic2_, self.tau)
            soft_update(self.actor_target_, self.actor_, self.tau)
        return losses


class SACAgent(OffPolicyAgent):
    algorithm = "sac"

    def __init__(
        self,
        hidden_sizes=(128, 128),
        actor_lr=3e-4,
        critic_lr=3e-4,
        gamma=0.99,
        tau=0.005,
        batch_size=256,
        buffer_size=100_000,
        warmup_steps=1000,
        alpha="auto",
        alpha_lr=3e-4,
        init_alpha=0.1,
        random_state=None,
    ):
        super().__init__(hidden_sizes, actor_lr, critic_lr, gamma, tau, batch_size, buffer_size, warmup_steps, random_state)
        self.alpha = alpha
        self.alpha_lr = alpha_lr
        self.init_alpha = init_alpha

    @property
    def target_entropy(self) -> float:
        return -float(self.act_dim_)

    @property
    def alpha_(self) -> float:
        return math.exp(self.log_alpha_)

    def _build(self, rng):
        self.actor_ = Mlp([self.obs_dim_, *self.hidden_sizes, 2 * self.act_dim_], rng)
        self.critic1_ = self._critic(rng)
        self.critic2_ = self._critic(rng)
        self.critic1_target_ = self.critic1_.copy()
        self.critic2_target_ = self.critic2_.copy()
        self.actor_opt_ = Adam(self.actor_.params, self.actor_lr)
        self.critic1_opt_ = Adam(self.critic1_.params, self.critic_lr)
        self.critic2_opt_ = Adam(self.critic2_.params, self.critic_lr)
        if self.alpha == "auto":
            self.log_alpha_ = math.log(self.init_alpha)
            self._log_alpha_arr = np.array([self.log_alpha_])
            self.alpha_opt_ = Adam([self._log_alpha_arr], self.alpha_lr)
        else:
            self.log_alpha_ = math.log(float(self.alpha))
        self.entropy_trace_: list[float] = []

    def _nets(self):
        return {
            "actor": self.actor_,
            "critic1": self.critic1_,
            "critic2": self.critic2_,
            "critic1_target": self.critic1_target_,
            "critic2_target": self.critic2_target_,
        }

    def _greedy(self, X):
        mean, _, _ = _gaussian_head(self.actor_(X), self.act_dim_)
        return np.tanh(mean)

    def _explore(self, X):
        eps = self.explore_rng_.standard_normal((len(X), self.act_dim_))
        a, _ = squashed_gaussian(self.actor_, X, eps)
        return a

    def td_target(self, batch, eps=None) -> np.ndarray:
        nxt = batch["next_obs"]
        if eps is None:
            eps = self.sample_rng_.standard_normal((len(nxt), self.act_dim_))
        a2, logp2 = squashed_gaussian(self.actor_, nxt, eps)
        x = np.concatenate([nxt, a2], axis=1)
        q = np.minimum(self.critic1_target_(x)[:, 0], self.critic2_target_(x)[:, 0])
        return batch["rew"] + self.gamma * (1.0 - batch["done"]) * (q - self.alpha_ * logp2)

    def _update(self, batch):
        y = self.td_target(batch)
        l1, g1 = critic_loss(self.critic1_, batch["obs"], batch["act"], y)
        l2, g2 = critic_loss(self.critic2_, batch["obs"], batch["act"], y)
        self.critic1_opt_.step(g1)
        self.critic2_opt_.step(g2)
        eps = self.sample_rng_.standard_normal((len(y), self.act_dim_))
        a_loss, grads, logp = _sac_actor_terms(
            self.actor_, self.critic1_, self.critic2_, batch["obs"], eps, self.alpha_
        )
        self.actor_opt_.step(grads)
        self.n_actor_updates_ += 1
        entropy = float(-np.mean(logp))
        self.entropy_trace_.append(entropy)
        losses = {"critic_loss": l1 + l2, "actor_loss": a_loss, "entropy": entropy}
        if self.alpha == "auto":
            t_loss, g = alpha_loss(self.log_alpha_, logp, self.target_entropy)
            self.alpha_opt_.step([np.array([g])])
            self.log_alpha_ = float(self._log_alpha_arr[0])
            losses["alpha_loss"] = t_loss
        soft_update(self.critic1_target_, self.critic1_, self.tau)
        soft_update(self.critic2_target_, self.critic2_, self.tau)
        return losses


AGENTS: dict[str, type[OffPolicyAgent]] = {"ddpg": DDPGAgent, "td3": TD3Agent, "sac": SACAgent}


def make_agent(config: AgentConfig, random_state=None) -> OffPolicyAgent:
    return AGENTS[config.algorithm](random_state=random_state, **config.estimator_params())
