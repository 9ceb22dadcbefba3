"""Segment reward: novelty against the recent window, gated by a walker playability check."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import EMPTY


@dataclass
class RewardConfig:
    n: int = 4
    w_novelty: float = 1.0
    w_play: float = 1.0
    novelty_cap: float = 0.6
    jump_height: int = 4
    max_gap: int = 4

    def __post_init__(self):
        if self.w_novelty < 0 or self.w_play < 0:
            raise ValueError("reward weights must be non-negative")
        if self.w_novelty == 0 and self.w_play == 0:
            raise ValueError("reward weights cannot both be zero")
        if not 0.0 < self.novelty_cap <= 1.0:
            raise ValueError("novelty_cap must lie in (0, 1]")
        if self.jump_height < 1 or self.max_gap < 1:
            raise ValueError("jump_height and max_gap must be positive")


def hamming(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"segment shapes differ: {a.shape} vs {b.shape}")
    return float(np.count_nonzero(a != b)) / a.size


def novelty(new: np.ndarray, history: Sequence[np.ndarray], cap: float = 1.0) -> float:
    if len(history) == 0:
        raise ValueError("novelty needs a non-empty history")
    return float(np.mean([min(hamming(new, h), cap) / cap for h in history]))


def standable(grid: np.ndarray) -> np.ndarray:
    """Solid-footing mask: a non-empty tile with an empty tile (or the sky) directly above."""
    solid = grid != EMPTY
    clear_above = np.ones_like(solid)
    clear_above[1:] = grid[:-1] == EMPTY
    return solid & clear_above


def playable(prev: np.ndarray, new: np.ndarray, cfg: RewardConfig) -> bool:
    """Can a walker starting anywhere on ``prev`` reach the last column of ``new``?

    The walker hops from a foothold to any foothold at most ``max_gap + 1`` columns
    to the right, rising at most ``jump_height`` rows and dropping any distance.
    Since falling is free, only the highest reachable foothold per column matters.
    """
    if prev.shape != new.shape:
        raise ValueError("segments must share dimensions")
    grid = np.concatenate([prev, new], axis=1)
    feet = standable(grid)
    H, cols = grid.shape
    W = prev.shape[1]
    top = np.full(cols, H + cfg.jump_height + 1)  # sentinel: unreachable
    for c in range(cols):
        rows = np.flatnonzero(feet[:, c])
        if c < W:
            if rows.size:
                top[c] = rows[0]
            continue
        lo = max(0, c - cfg.max_gap - 1)
        limit = top[lo:c].min() - cfg.jump_height
        ok = rows[rows >= limit]
        if ok.size:
            top[c] = ok[0]
    return bool(top[-1] < H)


def reward(new: np.ndarray, history: Sequence[np.ndarray], cfg: RewardConfig) -> float:
    if len(history) == 0:
        raise ValueError("reward needs a non-empty history")
    nov = novelty(new, history[-cfg.n:], cfg.novelty_cap)
    play = 1.0 if playable(history[-1], new, cfg) else -1.0
    return cfg.w_novelty * nov + cfg.w_play * play


class NoveltyPlayabilityReward:
    def __init__(self, cfg: RewardConfig):
        self.cfg = cfg

    def score(self, new, history, action=None) -> float:
        return reward(new, history, self.cfg)


class TargetReward:
    """``-||a - target||^2``; ignores the decoded segment."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def score(self, new, history, action) -> float:
        return -float(np.sum((np.asarray(action) - self.target) ** 2))


class ConstantReward:
    def __init__(self, value: float = 1.0):
        self.value = value

    def score(self, new, history, action=None) -> float:
        return self.value
