"""PPO pricing agent built directly on numpy.

The actor maps the observed history window to a diagonal Gaussian over
price profiles: a small tanh network outputs the mean through a
sigmoid scaled to (0, p_max), and a state-independent learnable log
standard deviation controls exploration.  The critic is a second tanh
network with a linear scalar head.  Both are updated by plain gradient
steps computed by hand; there is no autograd, optimizer state, GAE,
entropy bonus or mini-batching.

This module sees the game only through dynamics.env_reset/env_step and
the (state, reward) stream they produce.  It never imports the market
model and never reads user profile fields, so the agent cannot peek at
capacities, valuations, costs or demand laws.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import EnvConfig, GameState, env_reset, env_step

__all__ = [
    "MlpParams",
    "MlpGrads",
    "ActorGrads",
    "PolicyParams",
    "TrainConfig",
    "TrajectoryBuffer",
    "EpisodeStats",
    "TrainingDiverged",
    "mlp_init",
    "mlp_forward",
    "mlp_backward",
    "observe",
    "gaussian_log_prob",
    "policy_sample",
    "policy_mean_action",
    "advantage_estimates",
    "clip_ratio",
    "ppo_surrogate",
    "ppo_actor_gradient",
    "critic_loss_and_gradient",
    "train",
    "save_policy",
    "load_policy",
]

# Floor keeps exploration noise >= e^-3 of the action range.  Lower floors
# let sigma anneal into a regime where the 1/sigma score scaling amplifies
# value-estimate noise faster than the critic can track, and late training
# destabilizes.
LOG_STD_MIN = -3.0
LOG_STD_MAX = 1.0
_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# plain multilayer perceptron


@dataclass
class MlpParams:
    """Dense layers with tanh hidden activations.

    weights[i] has shape (fan_out, fan_in).  With bounded_output the
    last layer goes through a sigmoid scaled by output_scale, otherwise
    it is linear.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bounded_output: bool = False
    output_scale: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty, same length")
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError("layer shapes are inconsistent")

    def copy(self) -> "MlpParams":
        return MlpParams(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.bounded_output,
            self.output_scale,
        )


@dataclass
class MlpGrads:
    """Parameter gradients, same shapes as the owning MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def mlp_init(
    sizes: tuple[int, ...],
    rng: np.random.Generator,
    bounded_output: bool = False,
    output_scale: float = 1.0,
    out_weight_std: float | None = None,
) -> MlpParams:
    """Gaussian fan-in init; the output layer may use its own std."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        std = 1.0 / math.sqrt(fan_in)
        if i == len(sizes) - 2 and out_weight_std is not None:
            std = out_weight_std
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, bounded_output, output_scale)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cached(params: MlpParams, x: np.ndarray):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    acts = [a]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(a @ W.T + b)
        acts.append(a)
    z = a @ params.weights[-1].T + params.biases[-1]
    if params.bounded_output:
        out = params.output_scale * _sigmoid(z)
    else:
        out = z
    return out, z, acts


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network on one input (in,) or a batch (B, in)."""
    single = np.asarray(x).ndim == 1
    out, _, _ = _forward_cached(params, x)
    return out[0] if single else out


def mlp_backward(params: MlpParams, x, upstream) -> MlpGrads:
    """Backpropagate d(loss)/d(output) to parameter gradients.

    A batched upstream (B, out) yields gradients summed over the batch.
    The forward pass is recomputed from x, so the call is
    self-contained.
    """
    single = np.asarray(x).ndim == 1
    out, z, acts = _forward_cached(params, x)
    up = np.atleast_2d(np.asarray(upstream, dtype=float))
    if up.shape != out.shape:
        raise ValueError(f"upstream shape {up.shape} does not match output {out.shape}")
    if params.bounded_output:
        s = out / params.output_scale
        dz = up * params.output_scale * s * (1.0 - s)
    else:
        dz = up
    gw = [np.empty_like(W) for W in params.weights]
    gb = [np.empty_like(b) for b in params.biases]
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = dz.T @ acts[i]
        gb[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ params.weights[i]
            dz = da * (1.0 - acts[i] ** 2)  # tanh'
    return MlpGrads(gw, gb)


# ---------------------------------------------------------------------------
# Gaussian policy


@dataclass
class PolicyParams:
    """Actor network, exploration scale and critic network."""

    actor: MlpParams
    log_std: np.ndarray
    critic: MlpParams
    obs_price_scale: float

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            self.actor.copy(), self.log_std.copy(), self.critic.copy(), self.obs_price_scale
        )

    def all_finite(self) -> bool:
        arrays = self.actor.weights + self.actor.biases
        arrays += self.critic.weights + self.critic.biases
        arrays += [self.log_std]
        return all(np.all(np.isfinite(a)) for a in arrays)


def observe(state: GameState, price_scale: float) -> np.ndarray:
    """Condition the raw window for the networks.

    Prices are divided by the public cap and allocations squashed by
    log1p so every feature lands in a tanh-friendly range.  Uses only
    publicly observed quantities.
    """
    rounds = np.concatenate(
        [state.prices / price_scale, np.log1p(state.allocations)], axis=1
    )
    return rounds.reshape(-1)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> float:
    """Log density of a diagonal Gaussian at the given action."""
    z = (np.asarray(action) - mean) / np.exp(log_std)
    return float(np.sum(-0.5 * _LOG_2PI - log_std - 0.5 * z * z))


def policy_sample(policy: PolicyParams, state: GameState, rng: np.random.Generator):
    """Draw an action and report its log density before any clamping.

    The environment clamps out-of-range prices itself; the density must
    belong to the raw sample or the PPO ratios are biased.
    """
    feats = observe(state, policy.obs_price_scale)
    mean = mlp_forward(policy.actor, feats)
    action = mean + np.exp(policy.log_std) * rng.standard_normal(mean.size)
    return action, gaussian_log_prob(mean, policy.log_std, action)


def policy_mean_action(policy: PolicyParams, state: GameState) -> np.ndarray:
    """Deterministic action, the Gaussian mean."""
    return mlp_forward(policy.actor, observe(state, policy.obs_price_scale))


# ---------------------------------------------------------------------------
# trajectory buffer and PPO pieces


@dataclass
class TrajectoryBuffer:
    """On-policy records of the current episode, cleared every episode."""

    capacity: int
    features: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    bootstrap_value: float | None = None

    def add(self, feats, action, log_prob, reward, value):
        if self.size >= self.capacity:
            raise ValueError("buffer is full")
        self.features.append(np.asarray(feats, dtype=float))
        self.actions.append(np.asarray(action, dtype=float))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))

    def clear(self):
        self.features.clear()
        self.actions.clear()
        self.log_probs.clear()
        self.rewards.clear()
        self.values.clear()
        self.bootstrap_value = None

    @property
    def size(self) -> int:
        return len(self.rewards)

    def stacked(self):
        if self.size == 0:
            raise ValueError("buffer is empty")
        if self.bootstrap_value is None:
            raise ValueError("bootstrap value has not been set")
        return (
            np.stack(self.features),
            np.stack(self.actions),
            np.array(self.log_probs),
            np.array(self.rewards),
            np.array(self.values),
        )


def _targets(rewards: np.ndarray, bootstrap: float, gamma: float) -> np.ndarray:
    # target(k) = sum_{l>=k} gamma^(l-k) r(l) + gamma^(D+1-k) V(s(D+1))
    out = np.empty(rewards.size)
    acc = bootstrap
    for k in range(rewards.size - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def advantage_estimates(buffer: TrajectoryBuffer, gamma: float) -> np.ndarray:
    """Discounted reward-to-go plus bootstrap, minus the sampled values.

    Values are the critic outputs recorded when the steps were taken,
    and the bootstrap V(s(D+1)) is treated as a constant, so the
    estimates stay fixed across the inner update epochs.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    _, _, _, rewards, values = buffer.stacked()
    return _targets(rewards, buffer.bootstrap_value, gamma) - values


def clip_ratio(f, epsilon: float):
    """Clamp probability ratios into [1 - epsilon, 1 + epsilon]."""
    return np.clip(f, 1.0 - epsilon, 1.0 + epsilon)


def _ratio_pieces(policy: PolicyParams, buffer: TrajectoryBuffer, epsilon: float, gamma: float):
    feats, actions, logp_old, _, _ = buffer.stacked()
    adv = advantage_estimates(buffer, gamma)
    mean = mlp_forward(policy.actor, feats)
    std = np.exp(policy.log_std)
    z = (actions - mean) / std
    logp_now = np.sum(-0.5 * _LOG_2PI - policy.log_std - 0.5 * z * z, axis=1)
    f = np.exp(logp_now - logp_old)
    return feats, adv, mean, std, z, f


def ppo_surrogate(policy: PolicyParams, buffer: TrajectoryBuffer, epsilon: float, gamma: float) -> float:
    """Clipped surrogate objective, summed over the buffer."""
    _, adv, _, _, _, f = _ratio_pieces(policy, buffer, epsilon, gamma)
    return float(np.sum(np.minimum(f * adv, clip_ratio(f, epsilon) * adv)))


@dataclass
class ActorGrads:
    """Surrogate gradients for the actor network and log_std vector."""

    mlp: MlpGrads
    log_std: np.ndarray


def ppo_actor_gradient(
    policy: PolicyParams, buffer: TrajectoryBuffer, epsilon: float, gamma: float
) -> ActorGrads:
    """Gradient of the clipped surrogate w.r.t. actor weights and log_std.

    Each step contributes advantage * ratio * grad(log pi) while its
    unclipped branch is active or the ratio sits inside the clip band;
    once the min saturates at a clipped constant the contribution is
    exactly zero.
    """
    feats, adv, mean, std, z, f = _ratio_pieces(policy, buffer, epsilon, gamma)
    unclipped = f * adv
    clipped = clip_ratio(f, epsilon) * adv
    active = (unclipped <= clipped) | ((f >= 1.0 - epsilon) & (f <= 1.0 + epsilon))
    coef = np.where(active, f * adv, 0.0)
    upstream_mean = coef[:, None] * z / std
    mlp_grads = mlp_backward(policy.actor, feats, upstream_mean)
    log_std_grad = np.sum(coef[:, None] * (z * z - 1.0), axis=0)
    return ActorGrads(mlp_grads, log_std_grad)


def critic_loss_and_gradient(
    policy: PolicyParams, buffer: TrajectoryBuffer, gamma: float
) -> tuple[float, MlpGrads]:
    """Summed squared error of the critic against fixed return targets."""
    feats, _, _, rewards, _ = buffer.stacked()
    targets = _targets(rewards, buffer.bootstrap_value, gamma)
    v = mlp_forward(policy.critic, feats)[:, 0]
    resid = v - targets
    loss = float(np.sum(resid * resid))
    grads = mlp_backward(policy.critic, feats, (2.0 * resid)[:, None])
    return loss, grads


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    """PPO hyperparameters.  Defaults target the 5-user experiments.

    critic_lr looks small because the critic loss is summed, not
    averaged, over the batch: with D=128 the summed loss has curvature
    roughly D times a single sample's, and rates above ~4e-4 diverge.
    """

    gamma: float = 0.9
    clip_epsilon: float = 0.2
    steps_per_batch: int = 128
    update_epochs: int = 10
    actor_lr: float = 5e-4
    critic_lr: float = 2e-5
    episodes: int = 500
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if min(self.steps_per_batch, self.update_epochs, self.episodes) < 1:
            raise ValueError("steps_per_batch, update_epochs and episodes must be >= 1")
        if not (self.actor_lr > 0.0 and self.critic_lr > 0.0):
            raise ValueError("learning rates must be positive")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden sizes must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit an unsigned 64-bit integer")


@dataclass(frozen=True)
class EpisodeStats:
    """Per-episode training trace entry."""

    episode: int
    mean_reward: float
    mean_sp_payoff: float
    actor_objective: float
    critic_loss: float
    mean_prices: np.ndarray
    mean_allocations: np.ndarray
    mean_mu_payoffs: np.ndarray


class TrainingDiverged(RuntimeError):
    """Raised when any parameter stops being finite during training."""

    def __init__(self, message: str, episode: int, inner_epoch: int, snapshot: dict):
        super().__init__(message)
        self.episode = episode
        self.inner_epoch = inner_epoch
        self.snapshot = snapshot


def _init_policy(state: GameState, env_config: EnvConfig, cfg: TrainConfig, rng) -> PolicyParams:
    n = state.n_mus
    in_dim = observe(state, env_config.p_max).size
    actor = mlp_init(
        (in_dim, *cfg.hidden, n),
        rng,
        bounded_output=True,
        output_scale=env_config.p_max,
        out_weight_std=0.01,
    )
    critic = mlp_init((in_dim, *cfg.hidden, 1), rng, out_weight_std=0.01)
    log_std = np.full(n, float(cfg.log_std_init))
    return PolicyParams(actor, log_std, critic, env_config.p_max)


def _snapshot(policy: PolicyParams) -> dict:
    return {
        "actor_weights": [W.tolist() for W in policy.actor.weights],
        "actor_biases": [b.tolist() for b in policy.actor.biases],
        "critic_weights": [W.tolist() for W in policy.critic.weights],
        "critic_biases": [b.tolist() for b in policy.critic.biases],
        "log_std": policy.log_std.tolist(),
    }


def train(scenario, env_config: EnvConfig, train_config: TrainConfig, on_step=None):
    """Run the PPO loop and return (policy, per-episode trace).

    One RNG stream, seeded by train_config.seed, drives the initial
    history, the weight init and every action draw, so the trace is a
    pure function of (scenario, env_config, train_config).  The state
    carries over between episodes; only the buffer is cleared.

    on_step, if given, is called as on_step(episode, step, transition)
    after every environment step.  It observes only; it must not touch
    the RNG or the policy.
    """
    cfg = train_config
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = env_reset(scenario, env_config, rng)
    policy = _init_policy(state, env_config, cfg, rng)
    buffer = TrajectoryBuffer(cfg.steps_per_batch)
    trace: list[EpisodeStats] = []
    n = state.n_mus

    for ep in range(1, cfg.episodes + 1):
        buffer.clear()
        sum_reward = 0.0
        sum_payoff = 0.0
        sum_prices = np.zeros(n)
        sum_allocs = np.zeros(n)
        sum_mu_payoffs = np.zeros(n)
        for k in range(1, cfg.steps_per_batch + 1):
            feats = observe(state, policy.obs_price_scale)
            action, log_prob = policy_sample(policy, state, rng)
            value = float(mlp_forward(policy.critic, feats)[0])
            tr = env_step(scenario, env_config, state, action)
            if on_step is not None:
                on_step(ep, k, tr)
            buffer.add(feats, action, log_prob, tr.reward, value)
            state = tr.next_state
            sum_reward += tr.reward
            sum_payoff += tr.sp_payoff
            sum_prices += tr.action.values
            sum_allocs += tr.next_state.allocations[-1]
            sum_mu_payoffs += tr.mu_payoffs
        if buffer.size != cfg.steps_per_batch:
            raise AssertionError("buffer must hold exactly one batch at update time")
        buffer.bootstrap_value = float(
            mlp_forward(policy.critic, observe(state, policy.obs_price_scale))[0]
        )

        critic_loss = math.nan
        for epoch in range(1, cfg.update_epochs + 1):
            actor_grads = ppo_actor_gradient(policy, buffer, cfg.clip_epsilon, cfg.gamma)
            critic_loss, critic_grads = critic_loss_and_gradient(policy, buffer, cfg.gamma)
            for i in range(len(policy.actor.weights)):
                policy.actor.weights[i] += cfg.actor_lr * actor_grads.mlp.weights[i]
                policy.actor.biases[i] += cfg.actor_lr * actor_grads.mlp.biases[i]
            policy.log_std = np.clip(
                policy.log_std + cfg.actor_lr * actor_grads.log_std, LOG_STD_MIN, LOG_STD_MAX
            )
            for i in range(len(policy.critic.weights)):
                policy.critic.weights[i] -= cfg.critic_lr * critic_grads.weights[i]
                policy.critic.biases[i] -= cfg.critic_lr * critic_grads.biases[i]
            if not policy.all_finite():
                raise TrainingDiverged(
                    f"non-finite parameter after episode {ep}, inner epoch {epoch}",
                    episode=ep,
                    inner_epoch=epoch,
                    snapshot=_snapshot(policy),
                )
        d = float(cfg.steps_per_batch)
        trace.append(
            EpisodeStats(
                episode=ep,
                mean_reward=sum_reward / d,
                mean_sp_payoff=sum_payoff / d,
                actor_objective=ppo_surrogate(policy, buffer, cfg.clip_epsilon, cfg.gamma),
                critic_loss=critic_loss,
                mean_prices=sum_prices / d,
                mean_allocations=sum_allocs / d,
                mean_mu_payoffs=sum_mu_payoffs / d,
            )
        )
    return policy, trace


# ---------------------------------------------------------------------------
# checkpoints


def _mlp_record(params: MlpParams) -> dict:
    return {
        "shapes": [list(W.shape) for W in params.weights],
        "weights": [W.reshape(-1).tolist() for W in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "bounded_output": params.bounded_output,
        "output_scale": params.output_scale,
    }


def _mlp_from_record(rec: dict) -> MlpParams:
    weights = [
        np.array(flat, dtype=float).reshape(shape)
        for flat, shape in zip(rec["weights"], rec["shapes"])
    ]
    biases = [np.array(b, dtype=float) for b in rec["biases"]]
    return MlpParams(weights, biases, bool(rec["bounded_output"]), float(rec["output_scale"]))


def save_policy(path, policy: PolicyParams, env_config: EnvConfig, train_config: TrainConfig) -> None:
    """Write a self-describing JSON checkpoint.  Round-trips exactly."""
    record = {
        "format": "mcsgame-policy",
        "version": 1,
        "env": {
            "history_rounds": env_config.history_rounds,
            "reward_scale": env_config.reward_scale,
            "p_max": env_config.p_max,
            "episode_length": env_config.episode_length,
        },
        "train": {
            "gamma": train_config.gamma,
            "clip_epsilon": train_config.clip_epsilon,
            "steps_per_batch": train_config.steps_per_batch,
            "update_epochs": train_config.update_epochs,
            "actor_lr": train_config.actor_lr,
            "critic_lr": train_config.critic_lr,
            "episodes": train_config.episodes,
            "hidden": list(train_config.hidden),
            "log_std_init": train_config.log_std_init,
            "seed": train_config.seed,
        },
        "obs_price_scale": policy.obs_price_scale,
        "log_std": policy.log_std.tolist(),
        "actor": _mlp_record(policy.actor),
        "critic": _mlp_record(policy.critic),
    }
    Path(path).write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")


def load_policy(path) -> tuple[PolicyParams, dict]:
    """Read a checkpoint back; returns the policy and the raw record."""
    record = json.loads(Path(path).read_text())
    if record.get("format") != "mcsgame-policy" or record.get("version") != 1:
        raise ValueError("not a recognized policy checkpoint")
    policy = PolicyParams(
        actor=_mlp_from_record(record["actor"]),
        log_std=np.array(record["log_std"], dtype=float),
        critic=_mlp_from_record(record["critic"]),
        obs_price_scale=float(record["obs_price_scale"]),
    )
    return policy, record
