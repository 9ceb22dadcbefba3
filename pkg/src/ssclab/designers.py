"""Designers (policies over latent windows) and REINFORCE training for the neural one."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .latent_mdp import EpisodeConfig, as_rng, initial_state, transition

PARAM_NAMES = ("W1", "b1", "W2", "b2")


class RandomDesigner:
    """Ignores the state and samples uniformly from the latent box (the plain GAN sampler)."""

    kind = "random"

    def __init__(self, d: int):
        self.d = d

    def act(self, state, rng, step=0):
        return rng.uniform(-1.0, 1.0, self.d)


class PeriodicDesigner:
    """Cycles through a fixed action list by step index: ``actions[step % period]``."""

    kind = "periodic"

    def __init__(self, actions):
        self.actions = np.clip(np.asarray(actions, dtype=float), -1.0, 1.0)
        if self.actions.ndim != 2 or len(self.actions) == 0:
            raise ValueError("periodic designer needs a non-empty (p, d) action list")
        self.d = self.actions.shape[1]

    @property
    def period(self) -> int:
        return len(self.actions)

    def act(self, state, rng=None, step=0):
        return self.actions[step % self.period].copy()


class TableDesigner:
    """Deterministic scripted policy: hashes the exact window bytes into a fixed action list.

    Any state maps to one action regardless of history or step, so it is a
    stationary policy suitable for exact finite-state analysis.
    """

    kind = "table"

    def __init__(self, choices, salt: int = 0):
        self.choices = np.asarray(choices, dtype=float)
        self.d = self.choices.shape[1]
        self.salt = salt

    def index(self, state) -> int:
        key = np.ascontiguousarray(state, dtype=float).tobytes() + self.salt.to_bytes(8, "little")
        return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") % len(self.choices)

    def act(self, state, rng=None, step=0):
        return self.choices[self.index(state)].copy()


@dataclass
class PolicyNetwork:
    """``n*d -> hidden -> d`` MLP with tanh activations; output is the Gaussian mean."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    sigma: float = 0.3

    @classmethod
    def init(cls, n: int, d: int, hidden: int = 64, sigma: float = 0.3, seed=0,
             out_scale: float = 1.0) -> "PolicyNetwork":
        rng = as_rng(seed)
        fan_in = n * d
        return cls(
            W1=rng.normal(0.0, 1.0 / math.sqrt(fan_in), (hidden, fan_in)),
            b1=np.zeros(hidden),
            W2=rng.normal(0.0, out_scale / math.sqrt(hidden), (d, hidden)),
            b2=np.zeros(d),
            sigma=sigma,
        )

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(*(p.copy() for p in self.params.values()), sigma=self.sigma)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        at = 0
        for k in PARAM_NAMES:
            p = getattr(self, k)
            setattr(self, k, np.asarray(vec[at:at + p.size], dtype=float).reshape(p.shape).copy())
            at += p.size


def _flatten_state(net: PolicyNetwork, state) -> np.ndarray:
    x = np.asarray(state, dtype=float).reshape(-1)
    if x.size != net.in_dim:
        raise ValueError(f"state has {x.size} components, network expects {net.in_dim}")
    return x


def forward(net: PolicyNetwork, state) -> np.ndarray:
    x = _flatten_state(net, state)
    return np.tanh(net.W2 @ np.tanh(net.W1 @ x + net.b1) + net.b2)


def _batch_grad(net: PolicyNetwork, X: np.ndarray, actions: np.ndarray, weights: np.ndarray):
    """Sum over rows of ``weights[t] * grad log N(actions[t]; mu(X[t]), sigma^2 I)``."""
    hid = np.tanh(X @ net.W1.T + net.b1)
    mu = np.tanh(hid @ net.W2.T + net.b2)
    g_out = weights[:, None] * (actions - mu) / net.sigma ** 2 * (1.0 - mu ** 2)
    g_hid = (g_out @ net.W2) * (1.0 - hid ** 2)
    return {"W1": g_hid.T @ X, "b1": g_hid.sum(0), "W2": g_out.T @ hid, "b2": g_out.sum(0)}


def grad_log_prob(net: PolicyNetwork, state, action) -> dict[str, np.ndarray]:
    if net.sigma <= 0:
        raise ValueError("log-probability gradient needs sigma > 0")
    x = _flatten_state(net, state)
    a = np.asarray(action, dtype=float)
    return _batch_grad(net, x[None, :], a[None, :], np.ones(1))


def log_prob(net: PolicyNetwork, state, action) -> float:
    mu = forward(net, state)
    a = np.asarray(action, dtype=float)
    k = a.size
    return float(-0.5 * np.sum((a - mu) ** 2) / net.sigma ** 2
                 - k * math.log(net.sigma) - 0.5 * k * math.log(2 * math.pi))


class NeuralDesigner:
    """Gaussian policy around the network mean, clamped to the latent box.

    ``sigma = 0`` gives the deterministic evaluation policy and draws nothing from ``rng``.
    """

    kind = "neural"

    def __init__(self, net: PolicyNetwork, sigma: float | None = None):
        self.net = net
        self.sigma = net.sigma if sigma is None else sigma
        self.d = net.out_dim

    def act(self, state, rng=None, step=0):
        mu = forward(self.net, state)
        if self.sigma > 0:
            mu = mu + self.sigma * rng.standard_normal(self.d)
        return np.clip(mu, -1.0, 1.0)

    def deterministic(self) -> "NeuralDesigner":
        return NeuralDesigner(self.net, sigma=0.0)


@dataclass
class TrainConfig:
    total_steps: int = 20000
    learning_rate: float = 0.003
    baseline: str = "mean-return"
    batch_episodes: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.baseline not in ("none", "mean-return"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.batch_episodes < 1:
            raise ValueError("batch_episodes must be >= 1")


@dataclass
class TrainResult:
    designer: NeuralDesigner
    curve: list[float] = field(default_factory=list)


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _episode(net, decoder, reward_model, config: EpisodeConfig, rng):
    state = initial_state(config, rng)
    segments = [decoder(z) for z in state]
    X, raw, rewards = [], [], []
    for _ in range(config.h):
        mu = forward(net, state)
        sample = mu + net.sigma * rng.standard_normal(config.d)
        a = np.clip(sample, -1.0, 1.0)
        seg = decoder(a)
        rewards.append(reward_model.score(seg, segments[-config.n:], a))
        segments.append(seg)
        X.append(state.ravel())
        raw.append(sample)
        state = transition(state, a)
    return np.array(X), np.array(raw), np.array(rewards)


def train(designer: NeuralDesigner, env, cfg: TrainConfig) -> TrainResult:
    """Episodic REINFORCE with Adam on the flattened parameters.

    ``env`` is ``(decoder, reward_model, episode_config)``; episodes last ``h`` steps.
    Returns a trained copy with evaluation ``sigma = 0`` and the per-episode mean reward.
    """
    decoder, reward_model, config = env
    net = designer.net.copy()
    if net.sigma <= 0:
        raise ValueError("training needs sigma > 0")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.flat().size, cfg.learning_rate)
    episodes = max(1, math.ceil(cfg.total_steps / config.h))
    curve: list[float] = []
    done = 0
    while done < episodes:
        batch = [_episode(net, decoder, reward_model, config, rng)
                 for _ in range(min(cfg.batch_episodes, episodes - done))]
        done += len(batch)
        returns = np.array([discounted_returns(r, config.gamma) for _, _, r in batch])
        if cfg.baseline == "mean-return":
            returns = returns - returns.mean(axis=0)
        grad = np.zeros_like(opt.m)
        for (X, raw, r), adv in zip(batch, returns):
            g = _batch_grad(net, X, raw, adv)
            grad += np.concatenate([g[k].ravel() for k in PARAM_NAMES])
            curve.append(float(r.mean()))
        grad /= len(batch)
        net.set_flat(net.flat() + opt.step(grad))
        if not np.all(np.isfinite(net.flat())):
            raise FloatingPointError("policy weights became non-finite")
    return TrainResult(NeuralDesigner(net, sigma=0.0), curve)


# ---- checkpoints ----
# designer <kind>
# d <d>                          (random)
# period <p> d <d> + p rows      (periodic)
# dims <in> <hidden> <out> / sigma <s> / one "<name> <rows> <cols>" header per tensor
# followed by its rows           (neural)

def _dump(name: str, arr: np.ndarray) -> list[str]:
    arr2 = np.atleast_2d(arr)
    lines = [f"{name} {arr2.shape[0]} {arr2.shape[1]}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in arr2]
    return lines


def designer_to_text(designer) -> str:
    lines = [f"designer {designer.kind}"]
    if designer.kind == "random":
        lines.append(f"d {designer.d}")
    elif designer.kind == "periodic":
        lines += _dump("actions", designer.actions)
    elif designer.kind == "neural":
        net = designer.net
        lines.append(f"dims {net.in_dim} {net.W1.shape[0]} {net.out_dim}")
        lines.append(f"sigma {net.sigma:.17g}")
        lines.append(f"eval_sigma {designer.sigma:.17g}")
        for k in PARAM_NAMES:
            lines += _dump(k, getattr(net, k))
    else:
        raise ValueError(f"cannot serialize designer kind {designer.kind!r}")
    return "\n".join(lines) + "\n"


def _read_tensor(lines: list[str], at: int, name: str):
    head = lines[at].split()
    if head[0] != name:
        raise ValueError(f"expected tensor {name!r}, found {head[0]!r}")
    rows, cols = int(head[1]), int(head[2])
    arr = np.array([[float(x) for x in lines[at + 1 + i].split()] for i in range(rows)])
    if arr.shape != (rows, cols):
        raise ValueError(f"tensor {name!r} has the wrong shape")
    return arr, at + 1 + rows


def text_to_designer(text: str):
    lines = text.splitlines()
    kind = lines[0].split()[1]
    if kind == "random":
        return RandomDesigner(int(lines[1].split()[1]))
    if kind == "periodic":
        actions, _ = _read_tensor(lines, 1, "actions")
        return PeriodicDesigner(actions)
    if kind == "neural":
        sigma = float(lines[2].split()[1])
        eval_sigma = float(lines[3].split()[1])
        at, params = 4, {}
        for k in PARAM_NAMES:
            arr, at = _read_tensor(lines, at, k)
            params[k] = arr.ravel() if k.startswith("b") else arr
        return NeuralDesigner(PolicyNetwork(**params, sigma=sigma), sigma=eval_sigma)
    raise ValueError(f"unknown designer kind {kind!r}")


def save_designer(designer, path: Path) -> None:
    Path(path).write_text(designer_to_text(designer))


def load_designer(path: Path):
    return text_to_designer(Path(path).read_text())
