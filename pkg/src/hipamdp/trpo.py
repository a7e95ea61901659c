"""Trust-region training of the hierarchical policy (PATRPO)."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import diffcore as dc
from . import distributions as D
from .envs.base import ParamAction
from .policies import ActMode, HierarchicalPolicy, VBaseline, onehot, param_mask

log = logging.getLogger(__name__)

LOG_RATIO_CLAMP = 20.0


class KLEstimator(str, Enum):
    SAMPLED_JOINT = "sampled_joint"
    CHAIN_RULE_SAMPLED = "chain_rule_sampled"
    CHAIN_RULE_ANALYTIC = "chain_rule_analytic"


@dataclass
class TrustRegionConfig:
    delta: float = 0.005
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_ratio: float = 0.8
    max_backtracks: int = 10
    kl_estimator: str = KLEstimator.CHAIN_RULE_ANALYTIC.value
    gamma: float = 0.99
    hidden_sizes: tuple[int, ...] = (200, 100, 50)
    log_std_init: float = -1.0
    baseline_hidden_sizes: tuple[int, ...] = (200, 100, 50)
    baseline_epochs: int = 5
    baseline_lr: float = 1e-3
    baseline_minibatch: int = 64

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        KLEstimator(self.kl_estimator)
        self.hidden_sizes = tuple(self.hidden_sizes)
        self.baseline_hidden_sizes = tuple(self.baseline_hidden_sizes)


@dataclass
class RolloutBatch:
    """Complete episodes collected with the behaviour policy, flattened.

    ``old_*`` arrays are frozen snapshots of the behaviour policy evaluated
    on the batch states: discrete log-probabilities (N, n), parameter means
    for every discrete action (N, n, m_max), and the log std (m_max,).
    """

    states: np.ndarray
    actions: np.ndarray
    pre_squash: np.ndarray
    rewards: np.ndarray
    returns: np.ndarray
    episode_returns: list[float]
    dropped_steps: int = 0
    advantages: np.ndarray | None = None
    old_logp: np.ndarray | None = None
    old_log_probs: np.ndarray | None = None
    old_means: np.ndarray | None = None
    old_log_std: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.actions)


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def collect_rollouts(env, policy: HierarchicalPolicy, n_steps: int, rng: np.random.Generator,
                     gamma: float) -> RolloutBatch:
    """Run the stochastic policy for ``n_steps`` environment steps.

    The trailing incomplete episode is dropped.
    """
    m = policy.spec.max_param_dim
    states, actions, pre, rewards, returns, ep_returns = [], [], [], [], [], []
    ep_s, ep_a, ep_u, ep_r = [], [], [], []
    obs = env.reset(rng)
    for _ in range(n_steps):
        action, info = policy.act(obs, rng, ActMode.STOCHASTIC)
        u = np.zeros(m)
        u[: len(info["pre_squash"])] = info["pre_squash"]
        ep_s.append(obs)
        ep_a.append(action.discrete)
        ep_u.append(u)
        obs, r, done = env.step(action)
        ep_r.append(r)
        if done:
            states += ep_s
            actions += ep_a
            pre += ep_u
            rewards += ep_r
            returns.append(discounted_returns(ep_r, gamma))
            ep_returns.append(float(np.sum(ep_r)))
            ep_s, ep_a, ep_u, ep_r = [], [], [], []
            obs = env.reset(rng)
    dim = policy.spec.state_dim
    return RolloutBatch(
        states=np.array(states).reshape(-1, dim),
        actions=np.array(actions, dtype=int),
        pre_squash=np.array(pre).reshape(-1, m),
        rewards=np.array(rewards),
        returns=np.concatenate(returns) if returns else np.zeros(0),
        episode_returns=ep_returns,
        dropped_steps=len(ep_s),
    )


def snapshot_behavior(policy: HierarchicalPolicy, batch: RolloutBatch):
    """Freeze the behaviour policy's distributions on the batch states."""
    n = policy.spec.n_discrete
    s = batch.states
    logits = policy.discrete_net.forward_numpy(s)
    batch.old_log_probs = dc.log_softmax(logits, axis=-1)
    batch.old_means = np.stack(
        [policy.mean_np(s, np.tile(onehot(a, n), (len(s), 1))) for a in range(n)], axis=1)
    batch.old_log_std = policy.log_std_np().copy()
    with dc.no_grad():
        batch.old_logp = policy.log_prob_joint(s, batch.actions, batch.pre_squash).data.copy()


def normalize(x: np.ndarray) -> np.ndarray:
    if len(x) < 2:
        return x - x.mean() if len(x) else x
    std = x.std()
    return (x - x.mean()) / (std if std > 1e-8 else 1.0)


# ---------------------------------------------------------------------------
# objectives


def surrogate_loss(policy: HierarchicalPolicy, batch: RolloutBatch) -> dc.Tensor:
    """mean(pi_new / pi_old * advantage) over the batch."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.old_logp is None or batch.advantages is None:
        raise ValueError("batch lacks behaviour snapshot or advantages")
    logp = policy.log_prob_joint(batch.states, batch.actions, batch.pre_squash)
    log_ratio = logp - batch.old_logp
    clamped = int(np.sum(np.abs(log_ratio.data) > LOG_RATIO_CLAMP))
    batch.stats["ratio_clamps"] = batch.stats.get("ratio_clamps", 0) + clamped
    ratio = dc.exp(dc.clip(log_ratio, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP))
    return dc.mean(ratio * batch.advantages)


def _gaussian_kl_masked(old_mean, old_log_std, new_mean, new_log_std, mask):
    var_old = np.exp(2.0 * old_log_std)
    var_new = dc.exp(2.0 * new_log_std)
    diff = new_mean - old_mean
    per_dim = new_log_std - old_log_std + (var_old + diff * diff) / (2.0 * var_new) - 0.5
    return dc.tsum(per_dim * mask, axis=-1)


def estimate_kl(policy: HierarchicalPolicy, batch: RolloutBatch,
                mode: KLEstimator | str = KLEstimator.CHAIN_RULE_ANALYTIC) -> dc.Tensor:
    """Mean KL(behaviour || policy) over the batch states.

    chain_rule_sampled: categorical KL plus the Gaussian KL at the sampled
        discrete action.
    chain_rule_analytic: categorical KL plus the behaviour-probability
        weighted Gaussian KL over every discrete action.
    sampled_joint: 0.5 * (ln pi_old(a,u|s) - ln pi(a,u|s))^2 over the joint
        samples; uses no closed form and shares the other two's curvature in
        expectation.
    """
    mode = KLEstimator(mode)
    if batch.old_log_probs is None:
        raise ValueError("batch lacks a behaviour snapshot")
    spec = policy.spec
    n = spec.n_discrete
    states = batch.states
    if mode is KLEstimator.SAMPLED_JOINT:
        diff = batch.old_logp - policy.log_prob_joint(states, batch.actions, batch.pre_squash)
        return dc.mean(0.5 * diff * diff)

    new_lp = policy.log_probs(states)
    kl_d = D.kl_categorical_logp(batch.old_log_probs, new_lp)
    log_std = policy.clipped_log_std()
    if mode is KLEstimator.CHAIN_RULE_SAMPLED:
        a = batch.actions
        new_mean = policy.param_mean(states, onehot(a, n))
        old_mean = batch.old_means[np.arange(len(a)), a]
        kl_c = _gaussian_kl_masked(old_mean, batch.old_log_std, new_mean, log_std, param_mask(spec, a))
        return dc.mean(kl_d + kl_c)

    if batch.old_means.shape[1] != n:
        raise dc.ShapeError("behaviour snapshot lacks parameter means for every discrete action")
    old_probs = np.exp(batch.old_log_probs)
    total = kl_d
    for a in range(n):
        acts = np.full(len(states), a)
        new_mean = policy.param_mean(states, onehot(acts, n))
        kl_c = _gaussian_kl_masked(batch.old_means[:, a], batch.old_log_std, new_mean, log_std,
                                   param_mask(spec, acts))
        total = total + old_probs[:, a] * kl_c
    return dc.mean(total)


def mean_entropy(policy: HierarchicalPolicy, states: np.ndarray) -> float:
    probs = policy.probs_np(states)
    h_d = -np.sum(probs * np.log(np.clip(probs, 1e-300, None)), axis=-1)
    h_c = np.sum(policy.log_std_np() + 0.5 * (1.0 + np.log(2 * np.pi)))
    return float(np.mean(h_d) + h_c)


# ---------------------------------------------------------------------------
# natural-gradient machinery


def fisher_vector_product(policy: HierarchicalPolicy, batch: RolloutBatch, v: np.ndarray,
                          mode: KLEstimator | str = KLEstimator.CHAIN_RULE_ANALYTIC,
                          damping: float = 0.1) -> np.ndarray:
    """(Hessian of the KL estimate at the behaviour policy) v + damping v."""
    hv = dc.hessian_vector_product(lambda: estimate_kl(policy, batch, mode), policy.params, v)
    return hv + damping * np.asarray(v, dtype=float)


def conjugate_gradient(Av: Callable[[np.ndarray], np.ndarray], b: np.ndarray, iters: int = 10,
                       tol: float = 1e-10, history: list | None = None) -> np.ndarray:
    """Approximately solve A x = b for symmetric positive semi-definite A."""
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    if history is not None:
        history.append(np.sqrt(rr))
    for _ in range(iters):
        if rr < tol:
            break
        Ap = Av(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0:
            if not np.isfinite(pAp):
                raise dc.NonFiniteError("conjugate gradient produced a non-finite curvature")
            break
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(r @ r)
        if not np.all(np.isfinite(x)):
            raise dc.NonFiniteError("conjugate gradient iterate is not finite")
        if history is not None:
            history.append(np.sqrt(rr_new))
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


@dataclass
class UpdateReport:
    surrogate_before: float = 0.0
    surrogate_after: float = 0.0
    kl: float = 0.0
    kl_analytic: float = 0.0
    backtracks: int = 0
    accepted: bool = False
    flagged: str = ""
    step_norm: float = 0.0
    grad_norm: float = 0.0
    ratio_clamps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def trpo_update(policy: HierarchicalPolicy, batch: RolloutBatch, config: TrustRegionConfig) -> UpdateReport:
    """One constrained natural-gradient step with backtracking line search.

    A candidate is accepted only if it improves the surrogate and its KL
    estimate stays within ``config.delta``; otherwise the policy is left
    unchanged and the report is flagged.
    """
    mode = KLEstimator(config.kl_estimator)
    report = UpdateReport()
    params = policy.params
    old = params.flat()

    loss = surrogate_loss(policy, batch)
    report.surrogate_before = report.surrogate_after = loss.item()
    g = dc.gradient(loss, params)
    report.grad_norm = float(np.linalg.norm(g))
    if report.grad_norm == 0.0:
        report.flagged = "zero gradient"
        return report

    def Av(v):
        return fisher_vector_product(policy, batch, v, mode, config.cg_damping)

    step_dir = conjugate_gradient(Av, g, config.cg_iters)
    shs = float(step_dir @ Av(step_dir))
    if not np.isfinite(shs) or shs <= 0:
        report.flagged = "non-positive curvature"
        return report
    full_step = np.sqrt(2.0 * config.delta / shs) * step_dir

    with dc.no_grad():
        for k in range(config.max_backtracks):
            params.set_flat(old + (config.backtrack_ratio ** k) * full_step)
            surr = surrogate_loss(policy, batch).item()
            kl = estimate_kl(policy, batch, mode).item()
            if np.isfinite(surr) and np.isfinite(kl) and surr > report.surrogate_before and kl <= config.delta:
                report.accepted = True
                report.backtracks = k
                report.surrogate_after = surr
                report.kl = kl
                report.kl_analytic = estimate_kl(policy, batch, KLEstimator.CHAIN_RULE_ANALYTIC).item()
                report.step_norm = float(np.linalg.norm(params.flat() - old))
                break
        else:
            params.set_flat(old)
            report.backtracks = config.max_backtracks
            report.flagged = "line search rejected every candidate"
    report.ratio_clamps = batch.stats.get("ratio_clamps", 0)
    return report


# ---------------------------------------------------------------------------
# baseline


def fit_baseline(baseline: VBaseline, batch: RolloutBatch, rng: np.random.Generator, epochs: int = 5,
                 lr: float = 1e-3, minibatch: int = 64, heldout: float = 0.0) -> list[float]:
    """Regress V(s) on the discounted returns, then set advantages = return - V(s).

    Returns per-epoch MSE on the held-out split (or on the whole batch when
    ``heldout`` is 0).  Advantages are normalised to zero mean, unit variance.
    """
    if not hasattr(baseline, "optimizer"):
        baseline.optimizer = dc.Adam(baseline.params, lr)
    opt = baseline.optimizer
    n = len(batch)
    idx = rng.permutation(n)
    n_hold = int(round(heldout * n))
    hold, train = idx[:n_hold], idx[n_hold:]
    monitor = hold if n_hold else np.arange(n)
    history = []
    for _ in range(epochs):
        order = rng.permutation(train)
        for start in range(0, len(order), minibatch):
            mb = order[start:start + minibatch]
            pred = baseline(batch.states[mb])
            err = pred - batch.returns[mb]
            opt.step(dc.gradient(dc.mean(err * err), baseline.params))
        resid = baseline.predict(batch.states[monitor]) - batch.returns[monitor]
        history.append(float(np.mean(resid ** 2)))
    batch.advantages = normalize(batch.returns - baseline.predict(batch.states))
    return history


def kl_between(policy_old: HierarchicalPolicy, policy_new: HierarchicalPolicy, states: np.ndarray) -> float:
    """Analytic chain-rule KL(old || new) averaged over ``states``."""
    probe = RolloutBatch(states=states, actions=np.zeros(len(states), dtype=int),
                         pre_squash=np.zeros((len(states), policy_old.spec.max_param_dim)),
                         rewards=np.zeros(len(states)), returns=np.zeros(len(states)), episode_returns=[])
    snapshot_behavior(policy_old, probe)
    with dc.no_grad():
        return estimate_kl(policy_new, probe, KLEstimator.CHAIN_RULE_ANALYTIC).item()


# ---------------------------------------------------------------------------
# training loop


def patrpo_train(env, config: TrustRegionConfig, epochs: int, steps_per_epoch: int, seed: int,
                 on_epoch: Callable[[dict, object], bool | None] | None = None) -> tuple[HierarchicalPolicy, list[dict]]:
    """Collect, fit baseline, update; one trust-region step per epoch.

    Each row reports the epoch's mean episode return and the update
    statistics.  ``kl_heldout`` re-measures the previous update's KL on the
    states of the next batch, which the update never saw.  ``on_epoch(row,
    policy)`` may return True to stop early.
    """
    init_rng, roll_rng, fit_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    policy = HierarchicalPolicy(env.spec, config.hidden_sizes, init_rng, config.log_std_init)
    baseline = VBaseline(env.spec.state_dim, config.baseline_hidden_sizes, init_rng)
    rows = []
    prev_policy = None
    env_steps = 0
    for epoch in range(epochs):
        batch = collect_rollouts(env, policy, steps_per_epoch, roll_rng, config.gamma)
        env_steps += steps_per_epoch
        if prev_policy is not None and rows and len(batch):
            rows[-1]["kl_heldout"] = kl_between(prev_policy, policy, batch.states)
        row = {"epoch": epoch, "env_steps": env_steps,
               "mean_return": float(np.mean(batch.episode_returns)) if batch.episode_returns else float("nan"),
               "episodes": len(batch.episode_returns)}
        if len(batch) == 0:
            row.update(UpdateReport(flagged="no complete episode").to_dict())
            rows.append(row)
            prev_policy = None
            continue
        fit_baseline(baseline, batch, fit_rng, config.baseline_epochs, config.baseline_lr, config.baseline_minibatch)
        snapshot_behavior(policy, batch)
        row["entropy"] = mean_entropy(policy, batch.states)
        prev_policy = policy.clone()
        report = trpo_update(policy, batch, config)
        row.update(report.to_dict())
        row["kl_heldout"] = float("nan")
        rows.append(row)
        log.info("epoch %d return %.3f kl %.4g backtracks %d", epoch, row["mean_return"], report.kl,
                 report.backtracks)
        if on_epoch is not None and on_epoch(row, policy):
            break
    return policy, rows
