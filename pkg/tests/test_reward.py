import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssclab.codec import BLOCK, EMPTY, GROUND, SEGMENT_H, SEGMENT_W
from ssclab.reward import RewardConfig, hamming, novelty, playable, reward

CFG = RewardConfig(n=4, novelty_cap=1.0)


def flat(floor_rows: int = 1) -> np.ndarray:
    seg = np.full((SEGMENT_H, SEGMENT_W), EMPTY, dtype=np.uint8)
    seg[SEGMENT_H - floor_rows:] = GROUND
    return seg


def filled(tile) -> np.ndarray:
    return np.full((SEGMENT_H, SEGMENT_W), tile, dtype=np.uint8)


def with_gap(width: int, start: int = 5) -> np.ndarray:
    seg = flat(2)
    seg[:, start:start + width] = EMPTY
    return seg


def test_novelty_examples():
    g = flat()
    assert novelty(g, [g, g, g]) == 0.0
    assert novelty(filled(BLOCK), [filled(EMPTY), filled(GROUND)]) == 1.0
    # hamming(all-ground, all-empty) = 1 and hamming(all-ground, all-ground) = 0 -> mean 0.5
    assert hamming(filled(GROUND), filled(EMPTY)) == 1.0
    assert novelty(filled(GROUND), [filled(EMPTY), filled(GROUND)]) == 0.5
    with pytest.raises(ValueError):
        novelty(g, [])
    with pytest.raises(ValueError):
        novelty(g, [g[:, :3]])


def test_novelty_cap_saturates():
    assert novelty(filled(BLOCK), [filled(EMPTY)], cap=0.6) == 1.0
    half = filled(EMPTY)
    half[: SEGMENT_H // 2] = BLOCK
    assert novelty(half, [filled(EMPTY)], cap=0.6) == pytest.approx(0.5 / 0.6)


def test_novelty_permutation_symmetric():
    rng = np.random.default_rng(0)
    segs = [rng.integers(0, 6, (SEGMENT_H, SEGMENT_W)) for _ in range(4)]
    new = rng.integers(0, 6, (SEGMENT_H, SEGMENT_W))
    vals = {round(novelty(new, list(p), 0.6), 12) for p in itertools.permutations(segs)}
    assert len(vals) == 1


def test_playable_basic():
    assert playable(flat(), flat(), CFG)
    assert not playable(flat(), filled(EMPTY), CFG)


def test_playable_gap_width_boundary():
    cfg = RewardConfig(max_gap=4)
    assert playable(flat(2), with_gap(4), cfg)
    assert not playable(flat(2), with_gap(5), cfg)


def test_playable_jump_height():
    cfg = RewardConfig(jump_height=4)
    wall = flat(2)
    wall[SEGMENT_H - 2 - 4:, 8:] = GROUND  # rises 4 rows
    assert playable(flat(2), wall, cfg)
    wall[SEGMENT_H - 2 - 5:, 8:] = GROUND  # rises 5 rows
    assert not playable(flat(2), wall, cfg)
    drop = filled(EMPTY)
    drop[SEGMENT_H - 1:] = GROUND
    high = filled(EMPTY)
    high[3:] = GROUND
    assert playable(high, drop, cfg)  # any drop is allowed


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 2 * SEGMENT_W - 1), min_size=1, max_size=8))
def test_playable_monotone_in_bottom_ground(seed, cols):
    rng = np.random.default_rng(seed)
    pair = np.where(rng.random((SEGMENT_H, 2 * SEGMENT_W)) < 0.12,
                    rng.integers(1, 6, (SEGMENT_H, 2 * SEGMENT_W)), EMPTY).astype(np.uint8)
    before = playable(pair[:, :SEGMENT_W], pair[:, SEGMENT_W:], CFG)
    pair[SEGMENT_H - 1, cols] = GROUND
    after = playable(pair[:, :SEGMENT_W], pair[:, SEGMENT_W:], CFG)
    assert after or not before


def test_reward_examples():
    g = flat()
    assert reward(g, [g], RewardConfig(n=1, novelty_cap=1.0)) == 1.0
    assert reward(filled(BLOCK), [filled(EMPTY)], RewardConfig(n=1, novelty_cap=1.0)) == 0.0
    half = flat()
    other = flat()
    other[: SEGMENT_H // 2] = BLOCK
    cfg = RewardConfig(n=1, w_novelty=1.0, w_play=0.5, novelty_cap=1.0)
    assert hamming(half, other) == 0.5
    assert reward(half, [other], cfg) == 1.0
    with pytest.raises(ValueError):
        reward(g, [], CFG)


def test_reward_bounds():
    rng = np.random.default_rng(3)
    cfg = RewardConfig(n=3, w_novelty=0.7, w_play=1.3)
    for _ in range(200):
        segs = rng.integers(0, 6, (4, SEGMENT_H, SEGMENT_W)) * (rng.random((4, SEGMENT_H, SEGMENT_W)) < 0.3)
        r = reward(segs[0], list(segs[1:]), cfg)
        assert -cfg.w_play <= r <= cfg.w_novelty + cfg.w_play


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(w_novelty=0, w_play=0)
    with pytest.raises(ValueError):
        RewardConfig(novelty_cap=0)
