"""PASVG(0): off-policy reparameterised actor-critic for the hierarchical policy.

The discrete head is reparameterised with Gumbel noise.  Acting executes the
hard Gumbel-Max choice and stores the noise; the actor update rebuilds the
Gumbel-Softmax simplex from that same noise and ascends Q through both heads.
"""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffcore as dc
from . import distributions as D
from .policies import ActMode, HierarchicalPolicy, QCritic, onehot

log = logging.getLogger(__name__)


@dataclass
class Svg0Config:
    critic_lr: float = 1e-3
    actor_lr: float = 1e-5
    temperature: float = 1.0
    minibatch: int = 64
    target_tau: float = 0.001
    use_targets: bool = True
    gamma: float = 0.99
    explore_sigma_frac: float = 0.1
    buffer_capacity: int = 10_000_000
    warmup: int = 10_000
    noise_mode: str = "recorded"
    hidden_sizes: tuple[int, ...] = (400, 300)
    critic_hidden_sizes: tuple[int, ...] = (400, 300)

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.noise_mode not in ("recorded", "fresh"):
            raise ValueError("noise_mode must be 'recorded' or 'fresh'")
        self.hidden_sizes = tuple(self.hidden_sizes)
        self.critic_hidden_sizes = tuple(self.critic_hidden_sizes)

    @property
    def explore_sigma(self) -> float:
        # parameters live in (-1, 1): range 2
        return 2.0 * self.explore_sigma_frac


class ReplayBuffer:
    """FIFO ring of transitions stored column-wise.

    Columns are allocated lazily and grow geometrically up to ``capacity``.
    """

    def __init__(self, capacity: int, fields: dict[str, tuple[tuple[int, ...], type]]):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.fields = dict(fields)
        self._alloc = min(self.capacity, 1024)
        self._data = {k: np.zeros((self._alloc, *shape), dtype=dt) for k, (shape, dt) in self.fields.items()}
        self._next = 0
        self._size = 0
        self.total_added = 0

    def __len__(self):
        return self._size

    def _grow(self):
        new = min(self.capacity, self._alloc * 2)
        for k, arr in self._data.items():
            bigger = np.zeros((new, *arr.shape[1:]), dtype=arr.dtype)
            bigger[: self._alloc] = arr
            self._data[k] = bigger
        self._alloc = new

    def add(self, **row):
        if self._next >= self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self._next
        for k in self.fields:
            self._data[k][i] = row[k]
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.total_added += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if batch_size > self._size:
            raise ValueError(f"cannot draw {batch_size} distinct transitions from {self._size}")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return {k: v[idx] for k, v in self._data.items()}

    def column(self, name: str) -> np.ndarray:
        """Stored values of one field, oldest first."""
        arr = self._data[name]
        if self._size < self.capacity:
            return arr[: self._size]
        return np.concatenate([arr[self._next:self.capacity], arr[: self._next]])


@contextlib.contextmanager
def frozen(params: dc.ParameterSet):
    """Treat ``params`` as constants while inside the block."""
    saved = [t.requires_grad for t in params]
    for t in params:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in zip(params, saved):
            t.requires_grad = flag


def critic_update(critic: QCritic, target_critic: QCritic, optimizer: dc.Adam, batch: dict,
                  next_action_input: Callable[[np.ndarray], np.ndarray], gamma: float) -> float:
    """One TD regression step on Q(s, action_input); returns the squared TD loss.

    Targets are r + gamma * (1 - terminal) * Q_target(s', next_action_input(s')).
    """
    with dc.no_grad():
        q_next = target_critic.q_np(batch["next_state"], next_action_input(batch["next_state"]))
    y = batch["reward"] + gamma * (1.0 - batch["terminal"]) * q_next
    if not np.all(np.isfinite(y)):
        raise dc.NonFiniteError("non-finite TD target")
    q = critic(batch["state"], batch["action_input"])
    err = q - y
    loss = dc.mean(err * err)
    optimizer.step(dc.grad(loss, list(critic.params)))
    return loss.item()


def soft_action_input(policy: HierarchicalPolicy, states, noise, temperature: float) -> dc.Tensor:
    """[Gumbel-Softmax simplex, tanh parameter means] for the critic; differentiable."""
    lp = policy.log_probs(states)
    soft = D.gumbel_softmax(lp, noise, temperature)
    x = dc.tanh(policy.param_mean(states, soft))
    return dc.concat([soft, x], axis=1)


def actor_update(policy: HierarchicalPolicy, critic: QCritic, optimizer: dc.Adam, batch: dict,
                 config: Svg0Config, rng: np.random.Generator, noise_mode: str | None = None) -> float:
    """Ascend mean Q(s, f(s, eta), pi_x(s, f(s, eta))) by one Adam step.

    ``recorded`` reuses the stored noise; ``fresh`` draws new noise.  The
    critic's parameters are treated as constants.
    """
    mode = noise_mode or config.noise_mode
    n = policy.spec.n_discrete
    states = batch["state"]
    if mode == "recorded":
        if "noise" not in batch or not np.all(batch.get("has_noise", 1.0)):
            raise ValueError("recorded-noise update on transitions without stored noise")
        noise = batch["noise"]
    else:
        noise = D.gumbel_noise(rng, (len(states), n))
    with frozen(critic.params):
        q = critic(states, soft_action_input(policy, states, noise, config.temperature))
        objective = dc.mean(q)
        g = dc.grad(objective, list(policy.params))
    optimizer.step([-t.data for t in g])
    return objective.item()


@dataclass
class GradientCheck:
    """Per-sample gradient estimates of E[Q] with respect to the logits."""

    reparam: np.ndarray
    score: np.ndarray

    @property
    def reparam_mean(self) -> np.ndarray:
        return self.reparam.mean(axis=0)

    @property
    def score_mean(self) -> np.ndarray:
        return self.score.mean(axis=0)

    @property
    def reparam_var(self) -> np.ndarray:
        return self.reparam.var(axis=0, ddof=1)

    @property
    def score_var(self) -> np.ndarray:
        return self.score.var(axis=0, ddof=1)


def reparam_gradient_check(logits, temperature: float, critic: Callable[[dc.Tensor], dc.Tensor],
                           n_samples: int, rng: np.random.Generator) -> GradientCheck:
    """Two estimators of d E[Q(a)] / d logits for a single state.

    ``critic`` maps a batch of action representations (N, n) to Q values
    (N,) and stays fixed.  The reparameterised estimate differentiates
    Q(gumbel_softmax(logits, g, t)); the score-function estimate weighs
    d ln p(a) / d logits by Q(one-hot(a)) with a the Gumbel-Max choice of
    the same noise.
    """
    logits = np.asarray(logits, dtype=float)
    n = logits.size
    g = D.gumbel_noise(rng, (n_samples, n))
    rows = dc.Tensor(np.tile(logits, (n_samples, 1)), requires_grad=True)
    soft = D.gumbel_softmax(dc.log_softmax(rows), g, temperature)
    (reparam,) = dc.grad(dc.tsum(critic(soft)), [rows])
    log_p = dc.log_softmax(logits)
    hard = D.gumbel_max_sample(log_p, g)
    with dc.no_grad():
        q_hard = critic(dc.Tensor(onehot(hard, n))).data
    score = q_hard[:, None] * (onehot(hard, n) - np.exp(log_p)[None, :])
    return GradientCheck(reparam.data, score)


@dataclass
class Svg0Agent:
    policy: HierarchicalPolicy
    critic: QCritic
    target_policy: HierarchicalPolicy
    target_critic: QCritic
    actor_opt: dc.Adam
    critic_opt: dc.Adam
    buffer: ReplayBuffer
    config: Svg0Config
    updates: int = 0


def make_svg0_agent(spec, config: Svg0Config, rng: np.random.Generator) -> Svg0Agent:
    n, m = spec.n_discrete, spec.max_param_dim
    policy = HierarchicalPolicy(spec, config.hidden_sizes, rng)
    critic = QCritic(spec.state_dim, n + m, config.critic_hidden_sizes, rng)
    buffer = ReplayBuffer(config.buffer_capacity, {
        "state": ((spec.state_dim,), float),
        "action": ((), int),
        "action_input": ((n + m,), float),
        "reward": ((), float),
        "next_state": ((spec.state_dim,), float),
        "terminal": ((), float),
        "noise": ((n,), float),
        "has_noise": ((), float),
    })
    return Svg0Agent(policy, critic, policy.clone(), critic.clone(),
                     dc.Adam(policy.params, config.actor_lr), dc.Adam(critic.params, config.critic_lr),
                     buffer, config)


def svg0_learn_step(agent: Svg0Agent, rng: np.random.Generator) -> tuple[float, float]:
    """Critic step, actor step, target soft updates on one minibatch."""
    cfg = agent.config
    batch = agent.buffer.sample(cfg.minibatch, rng)
    n = agent.policy.spec.n_discrete
    tgt_policy = agent.target_policy if cfg.use_targets else agent.policy
    tgt_critic = agent.target_critic if cfg.use_targets else agent.critic

    def next_input(states):
        g = D.gumbel_noise(rng, (len(states), n))
        with dc.no_grad():
            return soft_action_input(tgt_policy, states, g, cfg.temperature).data

    td = critic_update(agent.critic, tgt_critic, agent.critic_opt, batch, next_input, cfg.gamma)
    obj = actor_update(agent.policy, agent.critic, agent.actor_opt, batch, cfg, rng)
    if cfg.use_targets:
        dc.soft_update(agent.target_critic.params, agent.critic.params, cfg.target_tau)
        dc.soft_update(agent.target_policy.params, agent.policy.params, cfg.target_tau)
    agent.updates += 1
    return td, obj


def pasvg0_train(env, config: Svg0Config, epochs: int, steps_per_epoch: int, seed: int,
                 on_epoch: Callable[[dict, object], bool | None] | None = None) -> tuple[Svg0Agent, list[dict]]:
    """Interleave acting (storing Gumbel noise) and one update per step after warmup.

    ``on_epoch(row, agent)`` may return True to stop early.
    """
    init_rng, act_rng, learn_rng, env_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    spec = env.spec
    agent = make_svg0_agent(spec, config, init_rng)
    n, m = spec.n_discrete, spec.max_param_dim
    rows = []
    obs = env.reset(env_rng)
    ep_ret = 0.0
    env_steps = 0
    for epoch in range(epochs):
        returns, tds, objs, qs = [], [], [], []
        mismatches = 0
        for _ in range(steps_per_epoch):
            action, info = agent.policy.act(obs, act_rng, ActMode.GUMBEL_RECORDED,
                                            config.temperature, config.explore_sigma)
            replay = D.gumbel_max_sample(
                dc.log_softmax(agent.policy.discrete_net.forward_numpy(obs)), info["noise"])
            mismatches += int(replay != action.discrete)
            unit = np.zeros(m)
            unit[: len(info["unit"])] = info["unit"][: spec.param_dims[action.discrete]]
            next_obs, r, done = env.step(action)
            agent.buffer.add(state=obs, action=action.discrete,
                             action_input=np.concatenate([onehot(action.discrete, n), unit]),
                             reward=r, next_state=next_obs, terminal=float(done and env.outcome != "timeout"),
                             noise=info["noise"], has_noise=1.0)
            ep_ret += r
            env_steps += 1
            obs = next_obs
            if done:
                returns.append(ep_ret)
                ep_ret = 0.0
                obs = env.reset(env_rng)
            if len(agent.buffer) >= config.warmup:
                td, obj = svg0_learn_step(agent, learn_rng)
                tds.append(td)
                objs.append(obj)
        if len(agent.buffer) >= config.minibatch:
            probe = agent.buffer.sample(min(256, len(agent.buffer)), learn_rng)
            qs.append(float(np.mean(agent.critic.q_np(probe["state"], probe["action_input"]))))
        row = {
            "epoch": epoch,
            "env_steps": env_steps,
            "mean_return": float(np.mean(returns)) if returns else float("nan"),
            "episodes": len(returns),
            "critic_loss": float(np.mean(tds)) if tds else float("nan"),
            "mean_q": qs[0] if qs else float("nan"),
            "actor_objective": float(np.mean(objs)) if objs else float("nan"),
            "updates": agent.updates,
            "replay_mismatches": mismatches,
        }
        rows.append(row)
        log.info("epoch %d return %.3f critic %.4g", epoch, row["mean_return"], row["critic_loss"])
        if on_epoch is not None and on_epoch(row, agent):
            break
    return agent, rows
