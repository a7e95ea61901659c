"""Exact toy-domain evaluation of trained policies and greedy rollouts."""

from __future__ import annotations

import numpy as np

from .envs.toy import GL_NODES, ToyPamdp, ToyPolicyTable, toy_exact_policy_value
from .policies import ActMode, HierarchicalPolicy, onehot


def _states(toy: ToyPamdp) -> np.ndarray:
    return np.eye(toy.n_states)


def toy_table_stochastic(policy: HierarchicalPolicy, toy: ToyPamdp) -> ToyPolicyTable:
    """Tabulate the stochastic (categorical x tanh-Gaussian) policy on the toy."""
    states = _states(toy)
    probs = policy.probs_np(states)
    n = policy.spec.n_discrete
    means = policy.mean_np(states, np.tile(onehot(0, n), (toy.n_states, 1)))[:, 0]
    std = float(np.exp(policy.log_std_np()[0]))

    def density(s, x):
        x = np.clip(x, -1 + 1e-15, 1 - 1e-15)
        u = np.arctanh(x)
        z = (u - means[s]) / std
        return np.exp(-0.5 * z * z) / (std * np.sqrt(2 * np.pi)) / (1.0 - x * x)

    return ToyPolicyTable(discrete_probs=probs, param_density=density)


def toy_table_gumbel(policy: HierarchicalPolicy, toy: ToyPamdp, temperature: float,
                     panels: int = 400) -> ToyPolicyTable:
    """Tabulate the Gumbel-driven policy (noise-free parameters) on the toy.

    With two discrete actions the soft simplex depends on the noise only
    through the logistic variable d = g0 - g1.  The hit probability of the
    aiming action is integrated over d (in CDF coordinates) with composite
    Gauss-Legendre quadrature.
    """
    if policy.spec.n_discrete != 2:
        raise ValueError("Gumbel tabulation is implemented for two discrete actions")
    c = toy.config
    states = _states(toy)
    log_probs = np.log(policy.probs_np(states))
    nodes, weights = np.polynomial.legendre.leggauss(GL_NODES)
    aim_prob = np.zeros(toy.n_states)
    hit_given_aim = np.zeros(toy.n_states)
    for s in range(toy.n_states):
        thresh = log_probs[s, 1] - log_probs[s, 0]
        v_lo = 1.0 / (1.0 + np.exp(-thresh))
        aim_prob[s] = 1.0 - v_lo
        edges = np.linspace(v_lo, 1.0, panels + 1)
        vs = (0.5 * (edges[1:] - edges[:-1])[:, None] * nodes[None, :]
              + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
        w = (0.5 * (edges[1:] - edges[:-1])[:, None] * weights[None, :]).ravel()
        vs = np.clip(vs, 1e-15, 1 - 1e-15)
        d = np.log(vs) - np.log1p(-vs)
        soft0 = 1.0 / (1.0 + np.exp(-(d - thresh) / temperature))
        rep = np.stack([soft0, 1.0 - soft0], axis=1)
        x = np.tanh(policy.mean_np(np.tile(states[s], (len(vs), 1)), rep)[:, 0])
        hit = (np.abs(x - c.targets[s]) <= c.tolerance).astype(float)
        joint = float(w @ hit)
        hit_given_aim[s] = joint / aim_prob[s] if aim_prob[s] > 0 else 0.0
    probs = np.stack([aim_prob, 1.0 - aim_prob], axis=1)
    return ToyPolicyTable(discrete_probs=probs, aim_success=hit_given_aim)


def toy_policy_value(policy: HierarchicalPolicy, toy: ToyPamdp, kind: str = "stochastic",
                     temperature: float = 1.0) -> float:
    if kind == "stochastic":
        table = toy_table_stochastic(policy, toy)
    elif kind == "gumbel":
        table = toy_table_gumbel(policy, toy, temperature)
    else:
        raise ValueError(f"unknown policy kind {kind!r}")
    return toy_exact_policy_value(toy, table)


def greedy_return(env, act, rng: np.random.Generator, episodes: int = 10) -> float:
    """Mean undiscounted return of ``act(state) -> ParamAction`` over episodes."""
    total = 0.0
    for _ in range(episodes):
        obs, done = env.reset(rng), False
        while not done:
            obs, r, done = env.step(act(obs))
            total += r
    return total / episodes


def hierarchical_greedy(policy: HierarchicalPolicy):
    rng = np.random.default_rng(0)
    return lambda obs: policy.act(obs, rng, ActMode.GREEDY)[0]
