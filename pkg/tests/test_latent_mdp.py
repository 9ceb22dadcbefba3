import numpy as np
import pytest

from ssclab.codec import LinearDecoder
from ssclab.designers import NeuralDesigner, PolicyNetwork, RandomDesigner
from ssclab.latent_mdp import (EpisodeConfig, Trajectory, extract_states, initial_state, load_trajectories,
                               rollout, rollout_latents, save_trajectories, text_to_trajectory, transition,
                               trajectory_to_text)
from ssclab.reward import NoveltyPlayabilityReward, RewardConfig


def test_config_validation():
    assert EpisodeConfig(n=4, h=25).eval_steps == 50
    for kw in ({"n": 25, "h": 25}, {"gamma": 0.0}, {"gamma": 1.5}, {"h": 10, "eval_steps": 5}):
        with pytest.raises(ValueError):
            EpisodeConfig(**kw)


def test_initial_state_range_and_determinism():
    cfg = EpisodeConfig(n=4, h=10, d=8)
    s = initial_state(cfg, 11)
    assert s.shape == (4, 8)
    assert np.all(np.abs(s) <= 1)
    assert np.array_equal(s, initial_state(cfg, 11))


def test_initial_state_golden():
    # Generator(PCG64(2024)).uniform(-1, 1): frozen from -1 + 2 * random() on the raw stream.
    s = initial_state(EpisodeConfig(n=2, h=5, d=2), 2024)
    expected = [[0.3516626759625636, -0.5713535975234847], [-0.3810959382366166, 0.5989321935496663]]
    assert s.tolist() == expected


def test_transition_shift():
    a, b, c, d, e = (np.full(2, float(i)) for i in range(5))
    state = np.stack([a, b, c, d])
    out = transition(state, e)
    assert np.array_equal(out, np.stack([b, c, d, e]))
    assert np.array_equal(state, np.stack([a, b, c, d]))
    assert np.array_equal(transition(a[None], b), b[None])
    with pytest.raises(ValueError):
        transition(state, np.zeros(3))


def test_n_transitions_replace_window():
    rng = np.random.default_rng(0)
    state = rng.uniform(-1, 1, (3, 2))
    acts = rng.uniform(-1, 1, (3, 2))
    for a in acts:
        state = transition(state, a)
    assert np.array_equal(state, acts)


def test_markov_property_from_different_histories():
    rng = np.random.default_rng(1)
    target = rng.uniform(-1, 1, (2, 3))
    a = rng.uniform(-1, 1, 3)
    s1 = transition(transition(rng.uniform(-1, 1, (2, 3)), target[0]), target[1])
    s2 = transition(transition(rng.uniform(-1, 1, (2, 3)), target[0]), target[1])
    assert np.array_equal(transition(s1, a), transition(s2, a))


@pytest.fixture(scope="module")
def env():
    cfg = EpisodeConfig(n=4, h=25, d=8)
    net = PolicyNetwork.init(4, 8, hidden=16, sigma=0.2, seed=3)
    return cfg, NeuralDesigner(net), LinearDecoder(8), NoveltyPlayabilityReward(RewardConfig(n=4))


def test_rollout_lengths(env):
    cfg, des, dec, rw = env
    t = rollout(des, dec, rw, cfg, 2 * cfg.h, 5)
    assert len(t.segments) == 54
    assert len(t.rewards) == t.steps == 50
    assert len(extract_states(t, cfg)) == 51
    for k in range(cfg.n, len(t.segments)):
        assert np.array_equal(t.segments[k], dec(t.actions[k - cfg.n]))
    assert np.all(np.abs(t.latents) <= 1)


def test_rollout_rejects_bad_input(env):
    cfg, des, dec, rw = env
    with pytest.raises(ValueError):
        rollout(des, dec, rw, cfg, 0, 1)
    with pytest.raises(ValueError):
        rollout(RandomDesigner(7), dec, rw, cfg, 3, 1)


def test_rollout_deterministic(env):
    cfg, des, dec, rw = env
    a, b = rollout(des, dec, rw, cfg, 10, 9), rollout(des, dec, rw, cfg, 10, 9)
    assert np.array_equal(a.latents, b.latents)
    assert np.array_equal(a.rewards, b.rewards)
    assert np.array_equal(a.segments, b.segments)


def test_rollout_latents_matches_rollout(env):
    cfg, des, dec, rw = env
    det = des.deterministic()
    assert np.array_equal(rollout_latents(det, cfg, 12, 4), rollout(det, dec, rw, cfg, 12, 4).latents)


def test_extract_states_reproduces_observations(env):
    cfg, des, dec, rw = env
    t = rollout(des, dec, rw, cfg, 20, 2)
    states = extract_states(t, cfg)
    assert [i for i, _ in states] == list(range(21))
    for (_, s), seen in zip(states, t.observed):
        assert np.array_equal(s, seen)


def test_extract_states_small_examples():
    lat = np.arange(5.0)[:, None]
    cfg = EpisodeConfig(n=2, h=3, d=1)
    t = Trajectory(lat[:2], lat[2:], np.zeros(3))
    got = [(i, s.ravel().tolist()) for i, s in extract_states(t, cfg)]
    assert got == [(0, [0, 1]), (1, [1, 2]), (2, [2, 3]), (3, [3, 4])]
    one = Trajectory(lat[:2], lat[2:2], np.zeros(0))
    assert len(extract_states(one, cfg)) == 1


def test_extract_states_count_formula():
    cfg = EpisodeConfig(n=4, h=25, d=2)
    lat = np.random.default_rng(0).uniform(-1, 1, (54, 2))
    t = Trajectory(lat[:4], lat[4:], np.zeros(50))
    explicit = [lat[i:i + 4] for i in range(len(lat)) if i + 4 <= len(lat)]
    states = extract_states(t, cfg)
    assert len(states) == len(explicit) == 51
    assert all(np.array_equal(s, e) for (_, s), e in zip(states, explicit))


def test_trajectory_text_round_trip(env, tmp_path):
    cfg, des, dec, rw = env
    trajs = [rollout(des, dec, rw, cfg, 7, s) for s in (1, 2)]
    text = trajectory_to_text(trajs[0])
    assert text.splitlines()[0] == "trajectory n=4 d=8 steps=7 seed=1"
    back = text_to_trajectory(text)
    np.testing.assert_allclose(back.latents, trajs[0].latents, rtol=1e-9, atol=0)
    assert np.array_equal(back.latents, trajs[0].latents)
    assert np.array_equal(back.rewards, trajs[0].rewards)
    save_trajectories(trajs, tmp_path / "t.txt")
    loaded = load_trajectories(tmp_path / "t.txt")
    assert [t.seed for t in loaded] == [1, 2]
    assert np.array_equal(loaded[1].actions, trajs[1].actions)
