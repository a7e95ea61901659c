"""PADDPG baseline: one flat actor for every action value and parameter.

The critic sees the state and the actor's whole output vector.  Actor
updates push the critic's input gradient back through the actor after the
invert-gradient rescaling of the parameter slices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffcore as dc
from .policies import PaddpgActor, QCritic, act_paddpg, invert_gradient
from .svg0 import ReplayBuffer

log = logging.getLogger(__name__)


@dataclass
class PaddpgConfig:
    critic_lr: float = 1e-3
    actor_lr: float = 1e-5
    minibatch: int = 64
    target_tau: float = 0.001
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_anneal_steps: int = 10_000
    explore_sigma_frac: float = 0.1
    buffer_capacity: int = 10_000_000
    warmup: int = 10_000
    hidden_sizes: tuple[int, ...] = (400, 300)
    critic_hidden_sizes: tuple[int, ...] = (400, 300)

    def __post_init__(self):
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        self.hidden_sizes = tuple(self.hidden_sizes)
        self.critic_hidden_sizes = tuple(self.critic_hidden_sizes)

    @property
    def explore_sigma(self) -> float:
        return 2.0 * self.explore_sigma_frac

    def epsilon(self, step: int) -> float:
        if self.epsilon_anneal_steps <= 0:
            return self.epsilon_end
        frac = min(1.0, step / self.epsilon_anneal_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class PaddpgAgent:
    actor: PaddpgActor
    critic: QCritic
    target_actor: PaddpgActor
    target_critic: QCritic
    actor_opt: dc.Adam
    critic_opt: dc.Adam
    buffer: ReplayBuffer
    config: PaddpgConfig
    updates: int = 0


def make_paddpg_agent(spec, config: PaddpgConfig, rng: np.random.Generator) -> PaddpgAgent:
    actor = PaddpgActor(spec, config.hidden_sizes, rng)
    critic = QCritic(spec.state_dim, actor.out_dim, config.critic_hidden_sizes, rng)
    buffer = ReplayBuffer(config.buffer_capacity, {
        "state": ((spec.state_dim,), float),
        "action_input": ((actor.out_dim,), float),
        "reward": ((), float),
        "next_state": ((spec.state_dim,), float),
        "terminal": ((), float),
    })
    return PaddpgAgent(actor, critic, actor.clone(), critic.clone(),
                       dc.Adam(actor.params, config.actor_lr), dc.Adam(critic.params, config.critic_lr),
                       buffer, config)


def bounded_output(actor: PaddpgActor, out: np.ndarray) -> np.ndarray:
    """Actor output with the parameter slices clipped to the unit box."""
    out = np.array(out, dtype=float)
    out[..., actor.n:] = np.clip(out[..., actor.n:], -1.0, 1.0)
    return out


def actor_input_gradient(actor: PaddpgActor, critic: QCritic, states) -> tuple[np.ndarray, np.ndarray]:
    """(dQ/d action vector, action vector) at the actor's clipped output."""
    vec = bounded_output(actor, actor.forward_np(states))
    a = dc.Tensor(vec, requires_grad=True)
    q = critic(states, a)
    (g,) = dc.grad(dc.mean(q), [a])
    return g.data * len(states), vec


def paddpg_actor_step(agent: PaddpgAgent, states) -> float:
    """Ascend Q(s, actor(s)) with invert-gradient on the parameter slices."""
    actor, critic = agent.actor, agent.critic
    dq, vec = actor_input_gradient(actor, critic, states)
    n = actor.n
    dq[:, n:] = invert_gradient(dq[:, n:], vec[:, n:], -1.0, 1.0)
    out = actor(states)
    # descend on -Q: seed the actor's output with the negated, averaged input gradient
    grads = dc.grad(out, list(actor.params), seed=-dq / len(states))
    agent.actor_opt.step(grads)
    return float(np.mean(critic.q_np(states, vec)))


def paddpg_update(agent: PaddpgAgent, rng: np.random.Generator) -> tuple[float, float]:
    """Critic TD step, actor step, target soft updates on one minibatch."""
    cfg = agent.config
    batch = agent.buffer.sample(cfg.minibatch, rng)
    with dc.no_grad():
        next_vec = bounded_output(agent.target_actor, agent.target_actor.forward_np(batch["next_state"]))
        q_next = agent.target_critic.q_np(batch["next_state"], next_vec)
    y = batch["reward"] + cfg.gamma * (1.0 - batch["terminal"]) * q_next
    if not np.all(np.isfinite(y)):
        raise dc.NonFiniteError("non-finite TD target")
    err = agent.critic(batch["state"], batch["action_input"]) - y
    loss = dc.mean(err * err)
    agent.critic_opt.step(dc.grad(loss, list(agent.critic.params)))
    q = paddpg_actor_step(agent, batch["state"])
    dc.soft_update(agent.target_critic.params, agent.critic.params, cfg.target_tau)
    dc.soft_update(agent.target_actor.params, agent.actor.params, cfg.target_tau)
    agent.updates += 1
    return loss.item(), q


def paddpg_train(env, config: PaddpgConfig, epochs: int, steps_per_epoch: int, seed: int,
                 on_epoch: Callable[[dict, object], bool | None] | None = None) -> tuple[PaddpgAgent, list[dict]]:
    """Epsilon-greedy acting and one update per step after warmup.

    ``on_epoch(row, agent)`` may return True to stop early.
    """
    init_rng, act_rng, learn_rng, env_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    agent = make_paddpg_agent(env.spec, config, init_rng)
    rows = []
    obs = env.reset(env_rng)
    ep_ret = 0.0
    env_steps = 0
    for epoch in range(epochs):
        returns, tds, qs = [], [], []
        for _ in range(steps_per_epoch):
            action, vec = act_paddpg(agent.actor, obs, config.epsilon(env_steps), config.explore_sigma, act_rng)
            next_obs, r, done = env.step(action)
            agent.buffer.add(state=obs, action_input=vec, reward=r, next_state=next_obs,
                             terminal=float(done and env.outcome != "timeout"))
            ep_ret += r
            env_steps += 1
            obs = next_obs
            if done:
                returns.append(ep_ret)
                ep_ret = 0.0
                obs = env.reset(env_rng)
            if len(agent.buffer) >= config.warmup:
                td, q = paddpg_update(agent, learn_rng)
                tds.append(td)
                qs.append(q)
        row = {
            "epoch": epoch,
            "env_steps": env_steps,
            "mean_return": float(np.mean(returns)) if returns else float("nan"),
            "episodes": len(returns),
            "critic_loss": float(np.mean(tds)) if tds else float("nan"),
            "mean_q": float(np.mean(qs)) if qs else float("nan"),
            "epsilon": config.epsilon(env_steps),
            "updates": agent.updates,
        }
        rows.append(row)
        log.info("epoch %d return %.3f critic %.4g", epoch, row["mean_return"], row["critic_loss"])
        if on_epoch is not None and on_epoch(row, agent):
            break
    return agent, rows
