import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hipamdp.envs import (EpisodeOverError, PamdpSpec, ParamAction, PlatformConfig, PlatformEnv, ToyConfig,
                          ToyPamdp, ToyPolicyTable, make_env, toy_exact_policy_value, toy_optimal_value)
from hipamdp.envs.platform import JUMP, LEAP, OBS_DIM, RUN

from .oracles import toy_monte_carlo

CANDIDATES = [ParamAction(a, [v]) for a, hi in enumerate((6.0, 6.0, 12.0)) for v in np.linspace(0, hi, 7)]


def lookahead_action(env):
    """Best single-step candidate, fatal outcomes heavily penalised."""
    best, choice = -np.inf, None
    for c in CANDIDATES:
        trial = copy.deepcopy(env)
        _, r, done = trial.step(c)
        v = r - 10.0 if done and trial.outcome != "goal" else r
        if v > best:
            best, choice = v, c
    return choice


def play(env, policy, seed):
    obs = env.reset(np.random.default_rng(seed))
    total, done, traj = 0.0, False, [obs]
    while not done:
        obs, r, done = env.step(policy(env))
        total += r
        traj.append(obs)
    return total, traj


# -- spec ----------------------------------------------------------------------


def test_spec_rejects_bad_bounds_and_gamma():
    with pytest.raises(ValueError):
        PamdpSpec(2, (1,), (((1.0, 1.0),),), 10, 0.9)
    with pytest.raises(ValueError):
        PamdpSpec(2, (1,), (((0.0, np.inf),),), 10, 0.9)
    with pytest.raises(ValueError):
        PamdpSpec(2, (1,), (((0.0, 1.0),),), 10, 1.0)


def test_scale_params_maps_unit_box_to_bounds():
    spec = PlatformEnv().spec
    np.testing.assert_allclose(spec.scale_params(LEAP, [-1.0]), [0.0])
    np.testing.assert_allclose(spec.scale_params(LEAP, [1.0]), [12.0])
    np.testing.assert_allclose(spec.scale_params(RUN, [0.0]), [3.0])
    np.testing.assert_allclose(spec.scale_params(RUN, [5.0]), [6.0])
    np.testing.assert_allclose(spec.unscale_params(LEAP, spec.scale_params(LEAP, [0.3])), [0.3])


def test_param_action_validation():
    spec = PlatformEnv().spec
    with pytest.raises(ValueError):
        ParamAction(3, [1.0]).validate(spec)
    with pytest.raises(ValueError):
        ParamAction(0, [1.0, 2.0]).validate(spec)


def test_make_env_by_name():
    assert isinstance(make_env("platform"), PlatformEnv)
    toy = make_env("toy", {"gamma": 0.5})
    assert isinstance(toy, ToyPamdp) and toy.spec.gamma == 0.5
    with pytest.raises(ValueError):
        make_env("soccer")


# -- platform ------------------------------------------------------------------


def test_platform_geometry():
    env = PlatformEnv()
    np.testing.assert_allclose(env.starts, [0, 31, 69])
    np.testing.assert_allclose(env.ends, [25, 61, 99])
    assert env.length == 99.0
    assert env.spec.param_bounds == (((0.0, 6.0),), ((0.0, 6.0),), ((0.0, 12.0),))


def test_platform_reset_observation():
    env = PlatformEnv()
    obs = env.reset(np.random.default_rng(0))
    assert obs.shape == (OBS_DIM,)
    assert obs[0] == 0.0 and obs[1] == 0.0 and obs[2] == 1.0
    np.testing.assert_array_equal(obs[3:6], [1, 0, 0])
    assert obs[8] == pytest.approx(25 / 30)
    assert env.state.steps == 0 and env.state.x == 0.0


def test_platform_reset_is_seed_deterministic():
    a, b = PlatformEnv(), PlatformEnv()
    np.testing.assert_array_equal(a.reset(np.random.default_rng(5)), b.reset(np.random.default_rng(5)))
    np.testing.assert_array_equal(a.state.enemy_x, b.state.enemy_x)


@pytest.mark.parametrize("seed", range(5))
def test_platform_enemy_collision_ends_episode(seed):
    env = PlatformEnv()
    total, _ = play(env, lambda e: ParamAction(RUN, [2.0]), seed)
    assert env.outcome == "enemy"
    assert 0.0 < total < 1.0
    assert total == pytest.approx(env.state.x / env.length)


@pytest.mark.parametrize("seed", range(5))
def test_platform_completion_returns_one(seed):
    env = PlatformEnv()
    total, _ = play(env, lookahead_action, seed)
    assert env.outcome == "goal"
    assert total == pytest.approx(1.0, abs=1e-12)


def test_platform_completion_without_enemies():
    env = PlatformEnv(PlatformConfig(enemy_platforms=()))
    script = iter([ParamAction(RUN, [6.0])] * 4 + [ParamAction(LEAP, [2.0])])
    total, _ = play(env, lambda e: next(script, ParamAction(LEAP, [12.0])), 0)
    assert env.outcome == "goal" and total == pytest.approx(1.0)


def test_platform_running_off_edge_falls():
    env = PlatformEnv(PlatformConfig(enemy_platforms=()))
    total, _ = play(env, lambda e: ParamAction(RUN, [6.0]), 0)
    assert env.outcome == "fall"
    # five ticks of 6 units: the agent drops at x = 30, inside the gap
    assert total == pytest.approx(30.0 / 99.0)


def test_platform_jump_does_not_cross_gap():
    env = PlatformEnv(PlatformConfig(enemy_platforms=()))
    env.reset(np.random.default_rng(0))
    env.step(ParamAction(RUN, [6.0]))
    env.step(ParamAction(RUN, [6.0]))
    env.step(ParamAction(RUN, [6.0]))
    _, _, done = env.step(ParamAction(JUMP, [6.0]))
    assert done and env.outcome == "fall"


def test_platform_zero_speed_times_out():
    env = PlatformEnv(PlatformConfig(enemy_platforms=(), max_steps=7))
    total, _ = play(env, lambda e: ParamAction(RUN, [0.0]), 0)
    assert env.outcome == "timeout" and env.state.steps == 7 and total == 0.0


def test_platform_step_after_end_is_error():
    env = PlatformEnv()
    play(env, lambda e: ParamAction(RUN, [2.0]), 0)
    with pytest.raises(EpisodeOverError):
        env.step(ParamAction(RUN, [1.0]))
    with pytest.raises(EpisodeOverError):
        PlatformEnv().step(ParamAction(RUN, [1.0]))


def test_platform_out_of_bounds_parameter_is_clamped_and_counted():
    a, b = PlatformEnv(), PlatformEnv()
    a.reset(np.random.default_rng(1))
    b.reset(np.random.default_rng(1))
    oa = a.step(ParamAction(RUN, [50.0]))
    ob = b.step(ParamAction(RUN, [6.0]))
    assert a.clamp_count == 1 and b.clamp_count == 0
    np.testing.assert_array_equal(oa[0], ob[0])
    assert oa[1] == ob[1]


def test_platform_config_validation():
    with pytest.raises(ValueError):
        PlatformConfig(gap_widths=(6.0,))
    with pytest.raises(ValueError):
        PlatformConfig(platform_widths=(10.0, 30.0, 30.0))


def random_actions(seed, n=200):
    rng = np.random.default_rng(seed)
    highs = (6.0, 6.0, 12.0)
    out = []
    for _ in range(n):
        a = int(rng.integers(3))
        out.append(ParamAction(a, [rng.uniform(0, highs[a])]))
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), act_seed=st.integers(0, 2**31))
def test_platform_return_bounds_and_observation_scale(seed, act_seed):
    env = PlatformEnv()
    actions = iter(random_actions(act_seed))
    total, traj = play(env, lambda e: next(actions), seed)
    assert 0.0 <= total <= 1.0 + 1e-12
    if env.outcome != "goal":
        assert total < 1.0
    obs = np.array(traj)
    assert np.all(np.isfinite(obs)) and np.all(np.abs(obs) <= 1.0 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), act_seed=st.integers(0, 2**31))
def test_platform_determinism(seed, act_seed):
    acts = random_actions(act_seed)
    runs = []
    for _ in range(2):
        it = iter(acts)
        runs.append(play(PlatformEnv(), lambda e: next(it), seed))
    assert runs[0][0] == runs[1][0]
    np.testing.assert_array_equal(np.array(runs[0][1]), np.array(runs[1][1]))


# -- toy -----------------------------------------------------------------------


def test_toy_reset_is_state_zero():
    toy = ToyPamdp()
    np.testing.assert_array_equal(toy.reset(np.random.default_rng(3)), [1, 0, 0])


def test_toy_hit_advances():
    toy = ToyPamdp()
    toy.reset()
    obs, r, done = toy.step(ParamAction(0, [0.7]))
    assert r == 1.0 and not done
    np.testing.assert_array_equal(obs, [0, 1, 0])


def test_toy_miss_stays_and_quit_ends():
    toy = ToyPamdp()
    toy.reset()
    obs, r, done = toy.step(ParamAction(0, [0.0]))
    assert r == 0.0 and not done and obs[0] == 1
    _, r, done = toy.step(ParamAction(1, [0.0]))
    assert r == pytest.approx(0.1) and done and toy.outcome == "quit"
    with pytest.raises(EpisodeOverError):
        toy.step(ParamAction(0, [0.7]))


def test_toy_horizon():
    toy = ToyPamdp()
    toy.reset()
    for i in range(6):
        _, _, done = toy.step(ParamAction(0, [-1.0]))
    assert done and toy.outcome == "timeout"


def test_toy_optimal_value_by_hand():
    assert toy_optimal_value(ToyPamdp()) == pytest.approx(1 + 0.9 + 0.81, abs=1e-12)


def test_toy_gamma_to_zero_is_first_step_reward():
    toy = ToyPamdp(ToyConfig(gamma=1e-9))
    table = ToyPolicyTable(discrete_probs=np.tile([0.4, 0.6], (3, 1)),
                           param_density=lambda s, x: np.full_like(x, 0.5))
    # P(hit | aim) in state 0 = 0.3 / 2
    expected = 0.4 * 0.15 + 0.6 * 0.1
    assert toy_exact_policy_value(toy, table) == pytest.approx(expected, abs=1e-8)


def test_toy_uniform_policy_matches_monte_carlo():
    toy = ToyPamdp()
    c = toy.config
    table = ToyPolicyTable(discrete_probs=np.tile([0.5, 0.5], (3, 1)),
                           param_density=lambda s, x: np.full_like(x, 0.5))
    exact = toy_exact_policy_value(toy, table)
    mean, se = toy_monte_carlo(c.targets, c.tolerance, c.quit_reward, c.horizon, c.gamma, [0.5] * 3,
                               lambda s, k, rng: rng.uniform(-1, 1, k), 1_000_000, np.random.default_rng(0))
    assert abs(exact - mean) < 3 * se


def test_toy_table_policy_matches_env_rollouts():
    toy = ToyPamdp()
    vals = np.linspace(-1, 1, 21)
    rng = np.random.default_rng(1)
    probs = rng.dirichlet(np.ones(21), size=3)
    table = ToyPolicyTable(discrete_probs=np.tile([0.8, 0.2], (3, 1)), param_values=vals, param_probs=probs)
    exact = toy_exact_policy_value(toy, table)
    rets = []
    for _ in range(20000):
        obs, done, ret, disc = toy.reset(), False, 0.0, 1.0
        while not done:
            s = toy.s
            a = int(rng.random() < 0.2)
            x = vals[rng.choice(21, p=probs[s])]
            obs, r, done = toy.step(ParamAction(a, [x]))
            ret += disc * r
            disc *= toy.config.gamma
        rets.append(ret)
    rets = np.array(rets)
    assert abs(exact - rets.mean()) < 3 * rets.std(ddof=1) / np.sqrt(len(rets))


def test_toy_oracle_refuses_large_instances():
    big = ToyPamdp(ToyConfig(targets=(0.1, 0.2, 0.3, 0.4)))
    with pytest.raises(ValueError):
        toy_exact_policy_value(big, ToyPolicyTable(discrete_probs=np.ones((4, 2)) / 2, aim_success=np.ones(4)))
    toy = ToyPamdp()
    with pytest.raises(ValueError):
        toy_exact_policy_value(toy, ToyPolicyTable(discrete_probs=np.ones((3, 2)) / 2,
                                                   param_values=np.linspace(-1, 1, 22),
                                                   param_probs=np.ones((3, 22)) / 22))
