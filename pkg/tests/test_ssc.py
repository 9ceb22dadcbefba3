import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import GridCodec, random_finite_instance, reachable_sets
from ssclab.designers import NeuralDesigner, PeriodicDesigner, PolicyNetwork, RandomDesigner, TableDesigner
from ssclab.latent_mdp import EpisodeConfig
from ssclab.ssc import (SSCPreconditionError, StateExplosionError, categorize_states, coverage_statistic,
                        detect_ssc_finite, enumerate_state_sets, key_of, step_image, verify_property1)

A, B = np.array([-1.0]), np.array([1.0])


def keys(*states):
    return {key_of(np.asarray(s, dtype=float).reshape(-1, 1)) for s in states}


class StepUp:
    """d=1 policy that moves one grid notch up from the newest latent (saturating at 1)."""

    kind = "table"
    d = 1

    def __init__(self, levels):
        self.step = 2.0 / (levels - 1)

    def act(self, state, rng=None, step=0):
        return np.minimum(state[-1] + self.step, 1.0)


def test_periodic_alternates():
    cfg = EpisodeConfig(n=1, h=3, d=1)
    seq = enumerate_state_sets(PeriodicDesigner([A, B]), 3, cfg, [np.array([[0.0]])], 6)
    assert seq.per_step[0] == keys([0.0])
    for i in range(1, 7):
        assert seq.per_step[i] == keys(A if i % 2 == 1 else B)


def test_constant_policy_fixed_point():
    cfg = EpisodeConfig(n=2, h=4, d=1)
    const = PeriodicDesigner([A])
    seq = enumerate_state_sets(const, 3, cfg, [np.array([[0.0], [1.0]]), np.array([[1.0], [0.0]])], 6)
    for i in range(2, 7):
        assert seq.per_step[i] == keys([-1.0, -1.0])
    report = detect_ssc_finite(seq, 2, 4)
    assert report.occurred and report.closure_set == keys([-1.0, -1.0])
    res = verify_property1(const, 3, cfg, [np.array([[0.0], [1.0]])], 2, 4, horizon_multiplier=7)
    assert res.holds and res.reverse_holds


def test_injective_progression_no_closure():
    cfg = EpisodeConfig(n=1, h=4, d=1)
    seq = enumerate_state_sets(StepUp(9), 9, cfg, [np.array([[-1.0]])], 6)
    for h in range(1, 7):
        assert not detect_ssc_finite(seq, 0, h).occurred
    with pytest.raises(SSCPreconditionError):
        verify_property1(StepUp(9), 9, cfg, [np.array([[-1.0]])], 0, 3)


def test_periodic_closure_by_hand():
    # S_1 = {a}, S_2 = {b}, S_3 = {a} -> S_3 within S_1 u S_2 = {a, b}
    cfg = EpisodeConfig(n=1, h=3, d=1)
    seq = enumerate_state_sets(PeriodicDesigner([A, B]), 3, cfg, [np.array([[0.0]])], 3)
    report = detect_ssc_finite(seq, 1, 3)
    assert report.occurred
    assert report.closure_set == keys(A, B)
    with pytest.raises(ValueError):
        detect_ssc_finite(seq, 3, 3)


class Cycle:
    """s0 -> s1 -> s2 -> s1 on a d=1, n=1 grid (s0=-1, s1=0, s2=1)."""

    kind = "table"
    d = 1
    table = {-1.0: 0.0, 0.0: 1.0, 1.0: 0.0}

    def act(self, state, rng=None, step=0):
        return np.array([self.table[float(state[-1, 0])]])


def test_three_state_cycle():
    cfg = EpisodeConfig(n=1, h=3, d=1)
    res = verify_property1(Cycle(), 3, cfg, [np.array([[-1.0]])], 1, 3, horizon_multiplier=5)
    assert res.holds and res.witness is None
    seq = enumerate_state_sets(Cycle(), 3, cfg, [np.array([[-1.0]])], 3)
    assert detect_ssc_finite(seq, 1, 3).closure_set == keys([0.0], [1.0])


def test_time_varying_policy_can_break_the_chain():
    # A non-stationary policy (repeated entries in a periodic list) is outside the
    # Markov argument: closure at [1, 2] is detected but step 3 escapes it.
    cfg = EpisodeConfig(n=1, h=2, d=1)
    pol = PeriodicDesigner([A, A, B])
    res = verify_property1(pol, 3, cfg, [np.array([[0.0]])], 1, 2, horizon_multiplier=3)
    assert not res.holds and res.witness == (3, key_of(B[None]))


def test_rejects_stochastic_and_offgrid():
    cfg = EpisodeConfig(n=1, h=3, d=1)
    with pytest.raises(SSCPreconditionError):
        enumerate_state_sets(RandomDesigner(1), 3, cfg, [np.array([[0.0]])], 2)
    with pytest.raises(SSCPreconditionError):
        enumerate_state_sets(NeuralDesigner(PolicyNetwork.init(1, 1, hidden=2), sigma=0.1), 3, cfg,
                             [np.array([[0.0]])], 2)
    with pytest.raises(SSCPreconditionError):
        enumerate_state_sets(PeriodicDesigner([A]), 3, cfg, [np.array([[0.3]])], 2)


def test_state_explosion_guard():
    cfg = EpisodeConfig(n=2, h=3, d=1)
    grid = [np.array([[a], [b]]) for a in (-1.0, 0.0, 1.0) for b in (-1.0, 0.0, 1.0)]
    pol = TableDesigner(np.array([[-1.0], [0.0], [1.0]]), salt=1)
    with pytest.raises(StateExplosionError):
        enumerate_state_sets(pol, 3, cfg, grid, 3, cap=2)


@pytest.mark.parametrize("seed", range(24))
def test_matches_bfs_oracle(seed):
    policy, levels, cfg, initial, g = random_finite_instance(seed, max_states=20_000)
    max_step = 12
    seq = enumerate_state_sets(policy, levels, cfg, initial, max_step)
    _, layers = reachable_sets(policy, levels, cfg, initial, max_step)
    for step, (got, want) in enumerate(zip(seq.per_step, layers)):
        assert {g.index(np.array(k).reshape(cfg.n, cfg.d)) for k in got} == want, step


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_image_is_monotone(seed, data):
    policy, levels, cfg, _, g = random_finite_instance(seed % 300, max_states=3_000)
    ids = data.draw(st.sets(st.integers(0, g.size - 1), min_size=1, max_size=30))
    sub = data.draw(st.sets(st.sampled_from(sorted(ids)), min_size=1))
    big = {key_of(g.state(i)) for i in ids}
    small = {key_of(g.state(i)) for i in sub}
    step = 1 if policy.kind == "periodic" else 0
    assert step_image(small, policy, levels, cfg.d, step) <= step_image(big, policy, levels, cfg.d, step)


def test_coverage_examples():
    prec = [np.zeros((1, 2))]
    assert coverage_statistic(prec, prec, 0.01) == 1.0
    assert coverage_statistic(prec, [np.full((1, 2), 5.0)], 1.0) == 0.0
    succ = [np.array([[0.0, 0.5]]), np.array([[3.0, 4.0]])]
    assert coverage_statistic(prec, succ, 1.0) == 0.5
    with pytest.raises(ValueError):
        coverage_statistic([], succ, 1.0)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(0.01, 2.0), st.floats(0.0, 2.0))
def test_coverage_monotone_in_epsilon(seed, eps, extra):
    rng = np.random.default_rng(seed)
    prec, succ = rng.uniform(-1, 1, (15, 2, 2)), rng.uniform(-1, 1, (20, 2, 2))
    assert coverage_statistic(prec, succ, eps) <= coverage_statistic(prec, succ, eps + extra)


def test_categorize_boundaries():
    cfg = EpisodeConfig(n=4, h=25, d=1)
    states = [(i, np.full((4, 1), float(i))) for i in (3, 4, 10, 24, 25, 40, 50)]
    cats = categorize_states(states, cfg)
    steps = {c: [int(s[0, 0]) for s in v] for c, v in cats.items()}
    assert steps == {"initial": [3], "precedent": [4, 10, 24], "successor": [25, 40, 50]}


def test_categorize_partition_and_overflow(caplog):
    cfg = EpisodeConfig(n=2, h=5, d=1)
    states = [(i, np.full((2, 1), float(i))) for i in range(14)]
    cats = categorize_states(states, cfg)
    flat = sorted(int(s[0, 0]) for v in cats.values() for s in v)
    assert flat == list(range(11))
    assert "ignored 3 states" in caplog.text


def test_grid_codec_round_trip():
    g = GridCodec(2, 2, 3)
    for i in range(g.size):
        assert g.index(g.state(i)) == i
