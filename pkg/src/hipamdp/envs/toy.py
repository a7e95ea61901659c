"""A three-state chain PAMDP small enough for exact policy evaluation.

In state k, action 0 with a parameter inside ``target[k] +- tolerance`` earns
reward 1 and advances to state k + 1 (leaving the last state ends the
episode); any other parameter earns 0 and stays put.  Action 1 ends the
episode with reward 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base import EpisodeOverError, PamdpSpec, ParamAction

MAX_STATES = 3
MAX_ACTIONS = 2
MAX_TABLE_POINTS = 21
MAX_HORIZON = 12
GL_NODES = 21


@dataclass(frozen=True)
class ToyConfig:
    targets: tuple[float, ...] = (0.7, -0.3, 0.2)
    tolerance: float = 0.15
    quit_reward: float = 0.1
    horizon: int = 6
    gamma: float = 0.9

    @classmethod
    def from_dict(cls, d: dict) -> "ToyConfig":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {"targets": list(self.targets), "tolerance": self.tolerance,
                "quit_reward": self.quit_reward, "horizon": self.horizon, "gamma": self.gamma}


class ToyPamdp:
    name = "toy"

    def __init__(self, config: ToyConfig | None = None):
        self.config = config or ToyConfig()
        c = self.config
        self.n_states = len(c.targets)
        self.spec = PamdpSpec(
            state_dim=self.n_states,
            param_dims=(1, 1),
            param_bounds=(((-1.0, 1.0),), ((-1.0, 1.0),)),
            horizon=c.horizon,
            gamma=c.gamma,
            action_names=("aim", "quit"),
        )
        self.clamp_count = 0
        self.s = 0
        self.t = 0
        self.done = True
        self.outcome: str | None = None

    def observe(self) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[min(self.s, self.n_states - 1)] = 1.0
        return obs

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.s, self.t, self.done, self.outcome = 0, 0, False, None
        return self.observe()

    def step(self, action: ParamAction):
        if self.done:
            raise EpisodeOverError("step() on a finished episode; call reset()")
        action.validate(self.spec)
        c = self.config
        x = float(action.params[0])
        if not -1.0 <= x <= 1.0:
            self.clamp_count += 1
            x = min(max(x, -1.0), 1.0)
        reward = 0.0
        if action.discrete == 1:
            reward = c.quit_reward
            self.done, self.outcome = True, "quit"
        elif abs(x - c.targets[self.s]) <= c.tolerance:
            reward = 1.0
            self.s += 1
            if self.s >= self.n_states:
                self.done, self.outcome = True, "goal"
        self.t += 1
        if not self.done and self.t >= c.horizon:
            self.done, self.outcome = True, "timeout"
        return self.observe(), reward, self.done


@dataclass
class ToyPolicyTable:
    """A stationary toy policy in tabular form.

    ``discrete_probs[s, a]`` is the action distribution in state s.  The
    parameter law of the aiming action is given either as a table over at
    most 21 support points (``param_values`` with ``param_probs[s, k]``) or
    as a density over [-1, 1] (``param_density(s, x)``), integrated by
    composite Gauss-Legendre quadrature.  Policies whose parameter law is
    easier to integrate elsewhere may pass the per-state hit probability of
    the aiming action directly as ``aim_success``.
    """

    discrete_probs: np.ndarray
    param_values: np.ndarray | None = None
    param_probs: np.ndarray | None = None
    param_density: Callable[[int, np.ndarray], np.ndarray] | None = None
    aim_success: np.ndarray | None = None


def _success_probs(toy: ToyPamdp, table: ToyPolicyTable, panels: int) -> np.ndarray:
    c = toy.config
    out = np.zeros(toy.n_states)
    if table.aim_success is not None:
        return np.asarray(table.aim_success, dtype=float)
    if table.param_values is not None:
        vals = np.asarray(table.param_values, dtype=float)
        if vals.size > MAX_TABLE_POINTS:
            raise ValueError(f"parameter table has {vals.size} points; the oracle enumerates at most {MAX_TABLE_POINTS}")
        probs = np.asarray(table.param_probs, dtype=float)
        for s in range(toy.n_states):
            hit = np.abs(np.clip(vals, -1, 1) - c.targets[s]) <= c.tolerance
            out[s] = probs[s][hit].sum()
        return out
    if table.param_density is None:
        raise ValueError("policy table needs parameter values or a density")
    nodes, weights = np.polynomial.legendre.leggauss(GL_NODES)
    for s in range(toy.n_states):
        lo = max(-1.0, c.targets[s] - c.tolerance)
        hi = min(1.0, c.targets[s] + c.tolerance)
        edges = np.linspace(lo, hi, panels + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            total += 0.5 * (b - a) * float(np.dot(weights, table.param_density(s, x)))
        out[s] = total
    return out


def toy_exact_policy_value(toy: ToyPamdp, table: ToyPolicyTable, panels: int = 64) -> float:
    """Exact expected discounted return from the start state.

    Enumerates every discrete outcome sequence up to the horizon; the
    parameter integral only enters through the per-state success probability.
    """
    c = toy.config
    if toy.n_states > MAX_STATES or toy.spec.n_discrete > MAX_ACTIONS or c.horizon > MAX_HORIZON:
        raise ValueError("toy instance exceeds the exact-enumeration limits")
    pd = np.asarray(table.discrete_probs, dtype=float)
    if pd.shape != (toy.n_states, toy.spec.n_discrete):
        raise ValueError(f"discrete table must have shape {(toy.n_states, toy.spec.n_discrete)}")
    q = _success_probs(toy, table, panels)

    def value(s: int, t: int) -> float:
        if t >= c.horizon or s >= toy.n_states:
            return 0.0
        aim, quit_ = pd[s, 0], pd[s, 1]
        hit = q[s] * (1.0 + c.gamma * value(s + 1, t + 1))
        miss = (1.0 - q[s]) * c.gamma * value(s, t + 1)
        return aim * (hit + miss) + quit_ * c.quit_reward

    return value(0, 0)


def toy_optimal_value(toy: ToyPamdp) -> float:
    """Value of the deterministic policy that always aims at the target."""
    n = toy.n_states
    table = ToyPolicyTable(
        discrete_probs=np.tile([1.0, 0.0], (n, 1)),
        param_values=np.array(toy.config.targets),
        param_probs=np.eye(n),
    )
    return toy_exact_policy_value(toy, table)
