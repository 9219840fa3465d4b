"""Repeated pricing game as a deterministic decision process.

The platform observes the last L rounds of posted prices and bought
allocations, posts a new price profile, and the users respond myopically
with their static best responses.  Transitions are therefore
deterministic given the action; the only randomness is the initial
history and whatever the acting policy injects.

The platform-side learner is only ever handed states and rewards, never
user profiles, so everything private to the users stays behind
env_step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .follower import best_response
from .model import PriceProfile, Scenario, mu_payoff, sp_payoff

__all__ = [
    "EnvConfig",
    "GameState",
    "Transition",
    "respond",
    "env_reset",
    "env_step",
    "greedy_policy",
    "random_policy",
    "step_trace_columns",
]


@dataclass(frozen=True)
class EnvConfig:
    """Observation window and action/reward scaling for the environment."""

    history_rounds: int = 3
    reward_scale: float = 0.01
    p_max: float = 1.0
    episode_length: int = 128

    def __post_init__(self):
        if self.history_rounds < 1:
            raise ValueError("history_rounds must be at least 1")
        if not (math.isfinite(self.reward_scale) and self.reward_scale > 0.0):
            raise ValueError("reward_scale must be positive")
        if not (math.isfinite(self.p_max) and self.p_max > 0.0):
            raise ValueError("p_max must be positive")
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GameState:
    """The last L rounds of (prices, allocations), oldest first.

    prices and allocations have shape (L, N).  features() flattens to
    the length 2*L*N vector [p(t-L), x(t-L), ..., p(t-1), x(t-1)].
    """

    prices: np.ndarray
    allocations: np.ndarray

    def __post_init__(self):
        p = _frozen(self.prices)
        x = _frozen(self.allocations)
        if p.ndim != 2 or p.shape != x.shape:
            raise ValueError("prices and allocations must share shape (L, N)")
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "allocations", x)

    @property
    def window(self) -> int:
        return self.prices.shape[0]

    @property
    def n_mus(self) -> int:
        return self.prices.shape[1]

    def features(self) -> np.ndarray:
        rounds = np.concatenate([self.prices, self.allocations], axis=1)
        return rounds.reshape(-1).copy()


@dataclass(frozen=True)
class Transition:
    """One environment step.  action holds the executed (clamped) prices."""

    state: GameState
    action: PriceProfile
    reward: float
    next_state: GameState
    sp_payoff: float
    mu_payoffs: np.ndarray
    clamped: bool


def respond(scenario: Scenario, prices: np.ndarray) -> np.ndarray:
    """Myopic best-response allocations of every user to posted prices."""
    return np.array([
        best_response(mu, float(prices[i])).allocation for i, mu in enumerate(scenario.mus)
    ])


def env_reset(
    scenario: Scenario,
    config: EnvConfig,
    rng: np.random.Generator,
    initial_prices: np.ndarray | None = None,
) -> GameState:
    """Build the starting history window.

    Prices for each of the L seed rounds are drawn uniformly from
    [0, p_max] unless ``initial_prices`` (shape (L, N)) pins them, and
    allocations are the users' responses to those prices.
    """
    shape = (config.history_rounds, scenario.n)
    if initial_prices is None:
        prices = rng.uniform(0.0, config.p_max, size=shape)
    else:
        prices = np.array(initial_prices, dtype=float)
        if prices.shape != shape:
            raise ValueError(f"initial_prices must have shape {shape}, got {prices.shape}")
        if np.any(prices < 0.0) or np.any(prices > config.p_max):
            raise ValueError("initial_prices must lie in [0, p_max]")
    allocations = np.array([respond(scenario, prices[t]) for t in range(shape[0])])
    return GameState(prices=prices, allocations=allocations)


def env_step(scenario: Scenario, config: EnvConfig, state: GameState, action) -> Transition:
    """Post prices, collect responses, and slide the history window."""
    raw = np.asarray(getattr(action, "values", action), dtype=float)
    if raw.shape != (scenario.n,):
        raise ValueError(f"action must have {scenario.n} entries, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("action prices must be finite")
    if state.window != config.history_rounds or state.n_mus != scenario.n:
        raise ValueError("state shape does not match scenario and config")
    executed = np.clip(raw, 0.0, config.p_max)
    clamped = bool(np.any(executed != raw))
    alloc = respond(scenario, executed)
    payoff = sp_payoff(alloc, executed, scenario.utility_scale)
    payoffs = np.array([
        mu_payoff(mu, float(alloc[i]), float(executed[i])) for i, mu in enumerate(scenario.mus)
    ])
    next_state = GameState(
        prices=np.vstack([state.prices[1:], executed[None, :]]),
        allocations=np.vstack([state.allocations[1:], alloc[None, :]]),
    )
    return Transition(
        state=state,
        action=PriceProfile(executed),
        reward=config.reward_scale * payoff,
        next_state=next_state,
        sp_payoff=payoff,
        mu_payoffs=payoffs,
        clamped=clamped,
    )


def greedy_policy(scenario: Scenario, config: EnvConfig) -> np.ndarray:
    """Pay the cap to everyone, maximizing bought resource regardless of cost."""
    return np.full(scenario.n, config.p_max)


def random_policy(n_mus: int, config: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw each price uniformly from [0, p_max]."""
    if n_mus < 1:
        raise ValueError("n_mus must be at least 1")
    return rng.uniform(0.0, config.p_max, size=n_mus)


def step_trace_columns(n_mus: int) -> list[str]:
    """Column names of the per-step trace CSV."""
    cols = ["episode", "step"]
    cols += [f"p_{i+1}" for i in range(n_mus)]
    cols += [f"x_{i+1}" for i in range(n_mus)]
    cols += ["sp_payoff", "reward"]
    cols += [f"mu_payoff_{i+1}" for i in range(n_mus)]
    cols += ["clamped_flag"]
    return cols
