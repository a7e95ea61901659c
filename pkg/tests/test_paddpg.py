import numpy as np
import pytest

from hipamdp import diffcore as dc
from hipamdp.envs import PamdpSpec, ToyPamdp
from hipamdp.paddpg import (PaddpgConfig, actor_input_gradient, bounded_output, make_paddpg_agent,
                            paddpg_actor_step, paddpg_train, paddpg_update)
from hipamdp.policies import PaddpgActor, invert_gradient

SPEC = PamdpSpec(3, (1, 2), (((0.0, 4.0),), ((-1.0, 1.0), (0.0, 10.0))), 10, 0.9)


class FrozenCritic:
    """Parameter-free critic of the action vector."""

    def __init__(self, fn):
        self.fn = fn
        self.params = dc.ParameterSet()

    def __call__(self, states, action_input):
        return self.fn(dc.as_tensor(action_input))

    def q_np(self, states, action_input):
        with dc.no_grad():
            return self.fn(dc.Tensor(action_input)).data


def agent_with(critic, lr=1e-2, seed=0):
    agent = make_paddpg_agent(SPEC, PaddpgConfig(actor_lr=lr, hidden_sizes=(16,), critic_hidden_sizes=(8,)),
                              np.random.default_rng(seed))
    agent.critic = critic
    return agent


def test_bounded_output_clips_only_parameters():
    actor = PaddpgActor(SPEC, (4,), np.random.default_rng(0))
    out = np.array([3.0, -4.0, 1.5, -2.0, 0.3])
    np.testing.assert_array_equal(bounded_output(actor, out), [3.0, -4.0, 1.0, -1.0, 0.3])


def test_saturated_parameter_gets_no_update():
    w = np.array([0.0, 0.0, 1.0, -1.0, 0.5])
    agent = agent_with(FrozenCritic(lambda a: dc.tsum(a * w, axis=-1)))
    last_w, last_b = agent.actor.net.layers[-1]
    # drive output 2 above its upper bound and output 3 below its lower bound
    last_b.data[2] = 5.0
    last_b.data[3] = -5.0
    states = np.random.default_rng(1).normal(size=(16, 3)) * 0.1
    before_w, before_b = last_w.data.copy(), last_b.data.copy()
    paddpg_actor_step(agent, states)
    np.testing.assert_array_equal(last_w.data[:, 2:4], before_w[:, 2:4])
    np.testing.assert_array_equal(last_b.data[2:4], before_b[2:4])
    assert not np.array_equal(last_b.data[4], before_b[4])


def test_input_gradient_is_taken_at_clipped_output():
    w = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    agent = agent_with(FrozenCritic(lambda a: -dc.tsum((a - 0.5) ** 2 * w, axis=-1)))
    agent.actor.net.layers[-1][1].data[2] = 5.0
    dq, vec = actor_input_gradient(agent.actor, agent.critic, np.zeros((4, 3)))
    assert np.all(vec[:, 2] == 1.0)
    np.testing.assert_allclose(dq[:, 2], -2 * (1.0 - 0.5))


def test_inverted_seed_is_a_bounded_rescaling():
    rng = np.random.default_rng(2)
    agent = make_paddpg_agent(SPEC, PaddpgConfig(hidden_sizes=(16,), critic_hidden_sizes=(16,)), rng)
    agent.actor.net.layers[-1][0].data *= 300.0
    states = rng.normal(size=(64, 3))
    dq, vec = actor_input_gradient(agent.actor, agent.critic, states)
    assert np.any(np.abs(vec[:, 2:]) == 1.0)
    inv = invert_gradient(dq[:, 2:], vec[:, 2:], -1.0, 1.0)
    factor = np.divide(inv, dq[:, 2:], out=np.zeros_like(inv), where=dq[:, 2:] != 0)
    assert np.all((factor >= 0) & (factor <= 1))


def test_frozen_quadratic_critic_sets_parameters():
    target = np.array([0.4, -0.7, 0.9])
    agent = agent_with(FrozenCritic(lambda a: -dc.tsum((a[:, 2:] - target) ** 2, axis=-1)), lr=1e-2)
    rng = np.random.default_rng(3)
    for _ in range(1500):
        paddpg_actor_step(agent, rng.normal(size=(32, 3)))
    out = agent.actor.forward_np(rng.normal(size=(50, 3)))[:, 2:]
    np.testing.assert_allclose(out, np.tile(target, (50, 1)), atol=0.02)


def test_optimum_outside_box_saturates_at_bound():
    # the executed (clipped) parameters sit on the bound; once there, the
    # inverted gradient is zero, so only optimiser momentum moves the raw output
    agent = agent_with(FrozenCritic(lambda a: dc.tsum(a[:, 2:], axis=-1)), lr=1e-2)
    rng = np.random.default_rng(4)
    for _ in range(300):
        paddpg_actor_step(agent, rng.normal(size=(32, 3)))
    states = rng.normal(size=(50, 3))
    np.testing.assert_array_equal(bounded_output(agent.actor, agent.actor.forward_np(states))[:, 2:], 1.0)
    dq, vec = actor_input_gradient(agent.actor, agent.critic, states)
    np.testing.assert_array_equal(invert_gradient(dq[:, 2:], vec[:, 2:], -1.0, 1.0), 0.0)


def test_update_moves_critic_and_targets():
    rng = np.random.default_rng(5)
    cfg = PaddpgConfig(minibatch=8, target_tau=0.5, hidden_sizes=(8,), critic_hidden_sizes=(8,))
    agent = make_paddpg_agent(SPEC, cfg, rng)
    for _ in range(10):
        agent.buffer.add(state=rng.normal(size=3), action_input=rng.uniform(-1, 1, 5), reward=1.0,
                         next_state=rng.normal(size=3), terminal=0.0)
    tgt = agent.target_critic.params.flat().copy()
    td, q = paddpg_update(agent, rng)
    assert np.isfinite(td) and np.isfinite(q) and agent.updates == 1
    np.testing.assert_allclose(agent.target_critic.params.flat(), 0.5 * tgt + 0.5 * agent.critic.params.flat())


def test_epsilon_schedule():
    cfg = PaddpgConfig(epsilon_anneal_steps=100)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(50) == pytest.approx(0.55)
    assert cfg.epsilon(100) == pytest.approx(0.1) and cfg.epsilon(10**6) == pytest.approx(0.1)
    assert cfg.explore_sigma == pytest.approx(0.2)
    with pytest.raises(ValueError):
        PaddpgConfig(epsilon_start=0.1, epsilon_end=0.5)


def test_training_smoke_bounds_and_determinism():
    cfg = PaddpgConfig(warmup=200, minibatch=16, epsilon_anneal_steps=200, hidden_sizes=(8,),
                       critic_hidden_sizes=(8,))
    runs = []
    for _ in range(2):
        env = ToyPamdp()
        agent, rows = paddpg_train(env, cfg, epochs=2, steps_per_epoch=150, seed=7)
        assert env.clamp_count == 0
        assert rows[0]["updates"] == 0 and rows[1]["updates"] == 101
        assert rows[1]["epsilon"] < rows[0]["epsilon"]
        runs.append((repr(rows), agent.actor.params.flat().tobytes()))
    assert runs[0] == runs[1]
