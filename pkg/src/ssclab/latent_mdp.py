"""The online-generation MDP over windows of latent vectors.

A state is an ``(n, d)`` float array holding the ``n`` most recent latents,
oldest first. Acting appends the chosen latent and drops the oldest one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np


class Designer(Protocol):
    d: int

    def act(self, state: np.ndarray, rng: np.random.Generator, step: int) -> np.ndarray: ...


class Decoder(Protocol):
    d: int

    def __call__(self, z: np.ndarray) -> np.ndarray: ...


class RewardModel(Protocol):
    def score(self, new: np.ndarray, history: Sequence[np.ndarray], action: np.ndarray) -> float: ...


@dataclass
class EpisodeConfig:
    n: int = 4
    h: int = 25
    eval_steps: int | None = None
    gamma: float = 0.9
    d: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.eval_steps is None:
            self.eval_steps = 2 * self.h
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not self.n < self.h:
            raise ValueError(f"need n < h, got n={self.n}, h={self.h}")
        if self.eval_steps < self.h:
            raise ValueError("eval_steps must be >= h")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass
class Trajectory:
    initial_latents: np.ndarray          # (n, d)
    actions: np.ndarray                  # (steps, d)
    rewards: np.ndarray                  # (steps,)
    segments: np.ndarray | None = None   # (n + steps, H, W)
    seed: int | None = None
    observed: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.initial_latents)

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def latents(self) -> np.ndarray:
        return np.concatenate([self.initial_latents, self.actions])


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def initial_state(config: EpisodeConfig, rng) -> np.ndarray:
    """``n`` latents drawn i.i.d. uniformly from [-1, 1]^d with ``Generator.uniform``."""
    return as_rng(rng).uniform(-1.0, 1.0, size=(config.n, config.d))


def transition(state: np.ndarray, action) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    action = np.asarray(action, dtype=float)
    if action.shape != state.shape[1:]:
        raise ValueError(f"action shape {action.shape} does not match latent shape {state.shape[1:]}")
    return np.concatenate([state[1:], action[None, :]])


def _checked_action(designer: Designer, state, rng, step: int) -> np.ndarray:
    a = np.asarray(designer.act(state, rng, step), dtype=float)
    if a.shape != state.shape[1:]:
        raise ValueError(f"designer emitted shape {a.shape}, expected {state.shape[1:]}")
    return np.clip(a, -1.0, 1.0)


def rollout(designer: Designer, decoder: Decoder, reward: RewardModel, config: EpisodeConfig,
            steps: int, rng) -> Trajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if designer.d != config.d or decoder.d != config.d:
        raise ValueError("designer, decoder and config disagree on the latent dimension")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = as_rng(rng)
    state = initial_state(config, rng)
    init = state.copy()
    segments = [decoder(z) for z in state]
    actions, rewards, observed = [], [], []
    for i in range(steps):
        observed.append(state)
        a = _checked_action(designer, state, rng, i)
        seg = decoder(a)
        rewards.append(reward.score(seg, segments[-config.n:], a))
        segments.append(seg)
        actions.append(a)
        state = transition(state, a)
    return Trajectory(init, np.array(actions), np.array(rewards, dtype=float),
                      np.stack(segments), seed, observed)


def rollout_latents(designer: Designer, config: EpisodeConfig, steps: int, rng) -> np.ndarray:
    """Latent sequence only (``n + steps`` rows); skips decoding and scoring."""
    rng = as_rng(rng)
    state = initial_state(config, rng)
    out = [*state]
    for i in range(steps):
        a = _checked_action(designer, state, rng, i)
        out.append(a)
        state = transition(state, a)
    return np.array(out)


def sliding_windows(latents: np.ndarray, n: int) -> np.ndarray:
    latents = np.asarray(latents)
    return np.lib.stride_tricks.sliding_window_view(latents, n, axis=0).transpose(0, 2, 1).copy()


def extract_states(trajectory: Trajectory, config: EpisodeConfig) -> list[tuple[int, np.ndarray]]:
    """Slide a width-``n`` window over initial latents + actions; index 0 is the all-initial window."""
    windows = sliding_windows(trajectory.latents, config.n)
    return list(enumerate(windows))


# ---- text record ----
# trajectory n=<n> d=<d> steps=<steps> seed=<seed|none>
# latents <n + steps>
# <d space-separated components>   (one line per latent)
# rewards <steps>
# <reward>                          (one line per step)

def trajectory_to_text(traj: Trajectory) -> str:
    n, d = traj.initial_latents.shape
    seed = "none" if traj.seed is None else str(int(traj.seed))
    lines = [f"trajectory n={n} d={d} steps={traj.steps} seed={seed}",
             f"latents {n + traj.steps}"]
    lines += [" ".join(f"{x:.17g}" for x in z) for z in traj.latents]
    lines.append(f"rewards {traj.steps}")
    lines += [f"{r:.17g}" for r in traj.rewards]
    return "\n".join(lines) + "\n"


def text_to_trajectory(text: str) -> Trajectory:
    lines = text.splitlines()
    head = dict(tok.split("=") for tok in lines[0].split()[1:])
    n, d, steps = int(head["n"]), int(head["d"]), int(head["steps"])
    seed = None if head["seed"] == "none" else int(head["seed"])
    if lines[1] != f"latents {n + steps}":
        raise ValueError("latent block header does not match trajectory header")
    lat = np.array([[float(x) for x in line.split()] for line in lines[2:2 + n + steps]])
    if lat.shape != (n + steps, d):
        raise ValueError("latent block has the wrong shape")
    at = 2 + n + steps
    if lines[at] != f"rewards {steps}":
        raise ValueError("reward block header does not match trajectory header")
    rewards = np.array([float(x) for x in lines[at + 1:at + 1 + steps]])
    return Trajectory(lat[:n], lat[n:], rewards, None, seed)


def save_trajectories(trajs: Sequence[Trajectory], path: Path) -> None:
    Path(path).write_text("".join(trajectory_to_text(t) for t in trajs))


def load_trajectories(path: Path) -> list[Trajectory]:
    blocks, cur = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("trajectory ") and cur:
            blocks.append(cur)
            cur = []
        cur.append(line)
    if cur:
        blocks.append(cur)
    return [text_to_trajectory("\n".join(b)) for b in blocks]
