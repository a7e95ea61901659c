"""Policy and value networks.

HierarchicalPolicy parameter layout (flat vector order):
    theta_a = discrete network  [d.W0, d.b0, ..., d.Wk, d.bk]
    theta_x = parameter network [c.W0, c.b0, ..., c.Wk, c.bk] + [log_std]

The discrete network maps a state to n logits.  The parameter network maps
state concatenated with an action representation (a one-hot vector, or a
Gumbel-Softmax simplex) to m_max pre-squash means; tanh squashes them to
(-1, 1) and the action's bounds are applied afterwards.  Action a uses the
first m_a outputs.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import diffcore as dc
from . import distributions as D
from .envs.base import PamdpSpec, ParamAction

HEAD_INIT_SCALE = 1e-2


class ActMode(str, Enum):
    STOCHASTIC = "stochastic"
    GUMBEL_RECORDED = "gumbel_recorded"
    GREEDY = "greedy"


def onehot(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=int)
    out = np.zeros(a.shape + (n,))
    np.put_along_axis(out, a[..., None], 1.0, axis=-1)
    return out


def param_mask(spec: PamdpSpec, actions) -> np.ndarray:
    """(B, m_max) indicator of which parameter slots each action uses."""
    dims = np.asarray(spec.param_dims)[np.asarray(actions, dtype=int)]
    return (np.arange(spec.max_param_dim)[None, :] < dims[:, None]).astype(float)


def _check_state(state) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(state)):
        raise dc.NonFiniteError("non-finite state")
    return state


class HierarchicalPolicy:
    def __init__(self, spec: PamdpSpec, hidden_sizes=(200, 100, 50), rng: np.random.Generator | None = None,
                 log_std_init: float = -1.0, hidden_activation: str = "relu"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        n, m = spec.n_discrete, spec.max_param_dim
        self.params = dc.ParameterSet()
        self.discrete_net = dc.MLP(
            dc.MlpSpec(spec.state_dim, tuple(hidden_sizes), n, hidden_activation, "identity"),
            rng, final_scale=HEAD_INIT_SCALE, params=self.params, prefix="d.")
        self.n_discrete_params = self.params.size
        self.param_net = dc.MLP(
            dc.MlpSpec(spec.state_dim + n, tuple(hidden_sizes), m, hidden_activation, "identity"),
            rng, final_scale=HEAD_INIT_SCALE, params=self.params, prefix="c.")
        self.log_std = self.params.register("log_std", np.full(m, float(log_std_init)))

    def clone(self) -> "HierarchicalPolicy":
        return copy.deepcopy(self)

    # -- differentiable pieces -------------------------------------------

    def logits(self, states) -> dc.Tensor:
        return self.discrete_net(states)

    def log_probs(self, states) -> dc.Tensor:
        return dc.log_softmax(self.logits(states), axis=-1)

    def param_mean(self, states, action_rep) -> dc.Tensor:
        """Pre-squash parameter means for a batch of (state, action representation)."""
        return self.param_net(dc.concat([dc.as_tensor(states), dc.as_tensor(action_rep)], axis=1))

    def clipped_log_std(self) -> dc.Tensor:
        return dc.clip(self.log_std, D.LOG_STD_MIN, D.LOG_STD_MAX)

    def log_prob_joint(self, states, actions, pre_squash) -> dc.Tensor:
        """ln pi_d(a|s) + ln pi_c(u|a,s) per sample, Gaussian in pre-squash space."""
        actions = np.asarray(actions, dtype=int)
        n = self.spec.n_discrete
        lp = self.log_probs(states)
        lp_a = dc.tsum(lp * onehot(actions, n), axis=-1)
        mean = self.param_mean(states, onehot(actions, n))
        mask = param_mask(self.spec, actions)
        log_std = self.clipped_log_std()
        z = (np.asarray(pre_squash, dtype=float) - mean) * dc.exp(-log_std)
        per_dim = -0.5 * z * z - log_std - 0.5 * np.log(2 * np.pi)
        return lp_a + dc.tsum(per_dim * mask, axis=-1)

    # -- acting (no graph) ------------------------------------------------

    def probs_np(self, state) -> np.ndarray:
        return dc.softmax(self.discrete_net.forward_numpy(state))

    def mean_np(self, state, action_rep) -> np.ndarray:
        return self.param_net.forward_numpy(np.concatenate([state, action_rep], axis=-1))

    def log_std_np(self) -> np.ndarray:
        return np.clip(self.log_std.data, D.LOG_STD_MIN, D.LOG_STD_MAX)

    def act(self, state, rng: np.random.Generator, mode: ActMode | str = ActMode.STOCHASTIC,
            temperature: float = 1.0, explore_sigma: float = 0.0, noise: np.ndarray | None = None):
        """Choose a joint action.

        Returns (ParamAction, info).  ``info['unit']`` holds the squashed
        parameters in (-1, 1) padded to m_max; stochastic mode adds the
        pre-squash draw ``info['pre_squash']``; Gumbel mode adds the noise
        ``info['noise']`` (pass it back via ``noise`` to replay the choice).
        """
        mode = ActMode(mode)
        state = _check_state(state)
        n = self.spec.n_discrete
        logits = self.discrete_net.forward_numpy(state)
        log_probs = dc.log_softmax(logits)
        info = {"probs": np.exp(log_probs)}
        if mode is ActMode.STOCHASTIC:
            a = D.categorical_sample(info["probs"] / info["probs"].sum(), rng)
            mean = self.mean_np(state, onehot(a, n))
            u = mean + np.exp(self.log_std_np()) * rng.standard_normal(mean.shape)
            unit = np.tanh(u)
            info["pre_squash"] = u
        elif mode is ActMode.GUMBEL_RECORDED:
            g = D.gumbel_noise(rng, n) if noise is None else np.asarray(noise, dtype=float)
            a = D.gumbel_max_sample(log_probs, g)
            soft = D.gumbel_softmax(log_probs, g, temperature)
            unit = np.tanh(self.mean_np(state, soft))
            if explore_sigma > 0:
                unit = np.clip(unit + explore_sigma * rng.standard_normal(unit.shape), -1.0, 1.0)
            info["noise"] = g
            info["soft"] = soft
        else:
            a = int(np.argmax(log_probs))
            unit = np.tanh(self.mean_np(state, onehot(a, n)))
        info["unit"] = unit
        return ParamAction(a, self.spec.scale_params(a, unit)), info


class QCritic:
    """Q(state, action representation, padded unit-space parameters) -> scalar."""

    def __init__(self, state_dim: int, action_dim: int, hidden_sizes=(400, 300),
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.action_dim = action_dim
        self.net = dc.MLP(dc.MlpSpec(state_dim + action_dim, tuple(hidden_sizes), 1, "relu", "identity"), rng)
        self.params = self.net.params

    def __call__(self, states, action_input) -> dc.Tensor:
        x = dc.concat([dc.as_tensor(states), dc.as_tensor(action_input)], axis=1)
        return self.net(x)[:, 0]

    def q_np(self, states, action_input) -> np.ndarray:
        return self.net.forward_numpy(np.concatenate([states, action_input], axis=-1))[..., 0]

    def clone(self) -> "QCritic":
        return copy.deepcopy(self)


class VBaseline:
    def __init__(self, state_dim: int, hidden_sizes=(200, 100, 50), rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.net = dc.MLP(dc.MlpSpec(state_dim, tuple(hidden_sizes), 1, "relu", "identity"), rng)
        self.params = self.net.params

    def __call__(self, states) -> dc.Tensor:
        return self.net(states)[:, 0]

    def predict(self, states) -> np.ndarray:
        return self.net.forward_numpy(states)[..., 0]


class PaddpgActor:
    """Flat actor: n discrete-action values followed by every action's parameters.

    Output layout: [v_0 .. v_{n-1}, params of action 0, params of action 1, ...]
    in unit space; the parameter block of action a starts at n + sum(m[:a]).
    """

    def __init__(self, spec: PamdpSpec, hidden_sizes=(400, 300), rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        self.n = spec.n_discrete
        self.out_dim = self.n + sum(spec.param_dims)
        self.net = dc.MLP(dc.MlpSpec(spec.state_dim, tuple(hidden_sizes), self.out_dim, "relu", "identity"),
                          rng, final_scale=HEAD_INIT_SCALE)
        self.params = self.net.params

    def param_slice(self, a: int) -> slice:
        start = self.n + sum(self.spec.param_dims[:a])
        return slice(start, start + self.spec.param_dims[a])

    def param_mask(self) -> np.ndarray:
        mask = np.zeros(self.out_dim, dtype=bool)
        mask[self.n:] = True
        return mask

    def __call__(self, states) -> dc.Tensor:
        return self.net(states)

    def forward_np(self, states) -> np.ndarray:
        return self.net.forward_numpy(states)

    def clone(self) -> "PaddpgActor":
        return copy.deepcopy(self)


def act_paddpg(actor: PaddpgActor, state, epsilon: float, sigma: float, rng: np.random.Generator):
    """Epsilon-greedy over the actor's action values, Gaussian noise on parameters.

    With probability epsilon the whole output vector is replaced by a uniform
    draw in [-1, 1], so the stored vector always agrees with the executed
    tuple.  Returns (ParamAction, action_vector).
    """
    state = _check_state(state)
    out = actor.forward_np(state)
    if rng.random() < epsilon:
        vec = rng.uniform(-1.0, 1.0, size=out.shape)
    else:
        vec = out.copy()
        if sigma > 0:
            vec[actor.n:] += sigma * rng.standard_normal(out.size - actor.n)
    vec[actor.n:] = np.clip(vec[actor.n:], -1.0, 1.0)
    a = int(np.argmax(vec[: actor.n]))
    return ParamAction(a, actor.spec.scale_params(a, vec[actor.param_slice(a)])), vec


def invert_gradient(grad, params, low, high) -> np.ndarray:
    """Scale ascent gradients by the remaining room towards the bound they push at.

    Upward pushes are scaled by (high - p) / (high - low), downward ones by
    (p - low) / (high - low), so each factor lies in [0, 1].
    """
    grad = np.asarray(grad, dtype=float)
    p = np.asarray(params, dtype=float)
    low = np.broadcast_to(np.asarray(low, dtype=float), p.shape)
    high = np.broadcast_to(np.asarray(high, dtype=float), p.shape)
    if np.any(p < low) or np.any(p > high):
        raise ValueError("parameter outside its bounds")
    width = high - low
    return np.where(grad > 0, grad * (high - p) / width, grad * (p - low) / width)
