"""State space closure: exact detection on quantized latents and a sampled surrogate.

Exact analysis works on finite state sets. States are keyed by the tuple of
their flattened quantized components, so set membership is exact equality.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import quantize
from .latent_mdp import EpisodeConfig, transition
from .metrics import nearest_distances

log = logging.getLogger(__name__)

CATEGORIES = ("initial", "precedent", "successor")

StateKey = tuple


class StateExplosionError(RuntimeError):
    pass


class SSCPreconditionError(ValueError):
    pass


def key_of(state) -> StateKey:
    return tuple(np.asarray(state, dtype=float).ravel().tolist())


def state_of(key: StateKey, d: int) -> np.ndarray:
    return np.array(key, dtype=float).reshape(-1, d)


@dataclass
class StateSetSequence:
    per_step: list[frozenset]
    n: int
    d: int

    def __len__(self) -> int:
        return len(self.per_step)

    def union(self, start: int, end: int) -> frozenset:
        """Union of the sets at steps ``start..end`` inclusive."""
        out: set = set()
        for s in self.per_step[start:end + 1]:
            out |= s
        return frozenset(out)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.per_step]


@dataclass
class ClosureReport:
    g: int
    h: int
    occurred: bool
    closure_set: frozenset | None = None
    coverage: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    set_sizes: list[int] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"g: {self.g}",
            f"h: {self.h}",
            f"occurred: {str(self.occurred).lower()}",
            f"coverage: {'' if self.coverage is None else f'{self.coverage:.6f}'}",
            f"epsilon: {'' if self.epsilon is None else f'{self.epsilon:.6f}'}",
            f"delta: {'' if self.delta is None else f'{self.delta:.6f}'}",
            f"closure_size: {'' if self.closure_set is None else len(self.closure_set)}",
            "set_sizes: " + " ".join(str(s) for s in self.set_sizes),
        ]
        return "\n".join(lines) + "\n"


def _is_stochastic(policy) -> bool:
    return getattr(policy, "kind", "") == "random" or getattr(policy, "sigma", 0.0) > 0


def _is_stationary(policy) -> bool:
    return getattr(policy, "kind", "") != "periodic"


def step_image(states: Iterable[StateKey], policy, levels: int, d: int, step: int,
               cache: dict | None = None) -> frozenset:
    """One application of (transition after quantized policy action) to every state."""
    out = set()
    for key in states:
        if cache is not None and key in cache:
            out.add(cache[key])
            continue
        s = state_of(key, d)
        a = quantize(policy.act(s, None, step), levels)
        nxt = key_of(transition(s, a))
        if cache is not None:
            cache[key] = nxt
        out.add(nxt)
    return frozenset(out)


def enumerate_state_sets(policy, levels: int, config: EpisodeConfig, initial_set,
                         max_step: int, cap: int = 100_000) -> StateSetSequence:
    """``S_0`` = the initial set, ``S_{i+1}`` = image of ``S_i`` under one policy step."""
    if _is_stochastic(policy):
        raise SSCPreconditionError("exact enumeration needs a deterministic policy")
    init = []
    for s in initial_set:
        s = np.asarray(s, dtype=float).reshape(config.n, config.d)
        if not np.array_equal(quantize(s, levels), s):
            raise SSCPreconditionError("initial states must lie on the quantization grid")
        init.append(key_of(s))
    if not init:
        raise SSCPreconditionError("initial set is empty")
    cache = {} if _is_stationary(policy) else None
    per_step = [frozenset(init)]
    for i in range(max_step):
        nxt = step_image(per_step[-1], policy, levels, config.d, i, cache)
        if len(nxt) > cap:
            raise StateExplosionError(f"|S_{i + 1}| = {len(nxt)} exceeds cap {cap}")
        per_step.append(nxt)
    return StateSetSequence(per_step, config.n, config.d)


def detect_ssc_finite(seq: StateSetSequence, g: int, h: int) -> ClosureReport:
    """Closure occurs at [g, h] when every state at step h already appeared in steps g..h-1."""
    if g >= h:
        raise ValueError(f"need g < h, got g={g}, h={h}")
    if h >= len(seq):
        raise ValueError(f"sequence covers steps 0..{len(seq) - 1}, need step {h}")
    earlier = seq.union(g, h - 1)
    occurred = seq.per_step[h] <= earlier
    return ClosureReport(g, h, occurred, earlier if occurred else None, set_sizes=seq.sizes())


@dataclass
class Property1Result:
    holds: bool
    horizon: int
    witness: tuple[int, StateKey] | None
    reverse_holds: bool
    reverse_missing: frozenset


def verify_property1(policy, levels: int, config: EpisodeConfig, initial_set, g: int, h: int,
                     horizon_multiplier: int = 5) -> Property1Result:
    """Simulate to ``horizon_multiplier * h`` and check ``S_{h..H}`` stays inside ``S_{g..h-1}``.

    The converse containment (every closure state recurs in ``S_{h..H}``) is
    reported separately since transient states may never come back.
    """
    H = horizon_multiplier * h
    seq = enumerate_state_sets(policy, levels, config, initial_set, H)
    report = detect_ssc_finite(seq, g, h)
    if not report.occurred:
        raise SSCPreconditionError(f"no closure detected at [{g}, {h}]")
    closure = report.closure_set
    witness = None
    for i in range(h, H + 1):
        outside = seq.per_step[i] - closure
        if outside:
            witness = (i, min(outside))
            break
    later = seq.union(h, H)
    missing = closure - later
    return Property1Result(witness is None, H, witness, not missing, frozenset(missing))


# ---- sampled (continuous) states ----

def default_epsilon(n: int, d: int) -> float:
    return 0.05 * math.sqrt(n * d)


def _flat(states: Sequence) -> np.ndarray:
    return np.array([np.asarray(s, dtype=float).ravel() for s in states])


def coverage_statistic(precedent: Sequence, successor: Sequence, epsilon: float) -> float:
    """Fraction of successor states within ``epsilon`` of some precedent state."""
    if len(precedent) == 0:
        raise ValueError("precedent set is empty")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if len(successor) == 0:
        return 1.0
    dist = nearest_distances(_flat(successor), _flat(precedent))
    return float(np.mean(dist <= epsilon))


def category_of(step: int, config: EpisodeConfig) -> str | None:
    """initial ``[0, n-1]``, precedent ``[n, h-1]``, successor ``[h, 2h]``; None outside."""
    if step < 0 or step > 2 * config.h:
        return None
    if step < config.n:
        return "initial"
    return "precedent" if step < config.h else "successor"


def categorize_states(states: Iterable[tuple[int, np.ndarray]], config: EpisodeConfig) -> dict[str, list]:
    out: dict[str, list] = {c: [] for c in CATEGORIES}
    dropped = 0
    for step, s in states:
        cat = category_of(step, config)
        if cat is None:
            dropped += 1
        else:
            out[cat].append(s)
    if dropped:
        log.warning("ignored %d states outside steps 0..%d", dropped, 2 * config.h)
    return out


def detect_ssc_sampled(categorized: dict[str, list], config: EpisodeConfig,
                       epsilon: float | None = None, delta: float = 0.01,
                       set_sizes: list[int] | None = None) -> ClosureReport:
    """Sampled closure at [n, h]: coverage of successor by precedent states is at least 1 - delta."""
    eps = default_epsilon(config.n, config.d) if epsilon is None else epsilon
    cov = coverage_statistic(categorized["precedent"], categorized["successor"], eps)
    return ClosureReport(config.n, config.h, cov >= 1.0 - delta, None, cov, eps, delta,
                         set_sizes or [])


def write_set_sizes(path: Path, sizes: Sequence[int], distinct: Sequence[int] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "states", "distinct"])
        for i, s in enumerate(sizes):
            w.writerow([i, s, "" if distinct is None else distinct[i]])
