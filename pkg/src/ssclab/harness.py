"""Config-driven experiment pipeline over a (gamma, n) designer grid.

Run layout (``<out>/run-NNN/``)::

    config.toml                 copy of the experiment config
    status.json                 per-cell stage outcome
    summary.csv                 metric rows x cell columns
    cells/gamma=<g>_n=<n>/
        designer.txt            checkpoint (evaluation sigma = 0)
        learning_curve.csv      episode, mean_reward
        trajectories.txt        evaluation trajectories
        baseline_trajectories.txt
        levels/level_NNN.txt    evaluation levels in level text format
        references.csv          k-means centroids used by MND
        closure_report.txt      sampled closure at [n, h]
        set_sizes.csv           step, states, distinct
        scatter.csv             x, y, category, level, step
        mnd.csv                 step, mean, std
        mnd_repeats.csv         repeat, step, mnd
        reward_steps.csv        step, mean, std
        div.csv                 d_M, mean_pairwise, div, pair_count
        interval_rewards.csv    interval, lo, hi, mean_reward
        *.png                   plots
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
import shutil
import traceback
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .codec import DecoderSpec, level_to_text
from .designers import (NeuralDesigner, PolicyNetwork, RandomDesigner, TrainConfig, load_designer,
                        save_designer, train)
from .latent_mdp import (EpisodeConfig, load_trajectories, rollout, rollout_latents,
                         save_trajectories, sliding_windows)
from .metrics import div_score, interval_reward_stats, kmeans, nearest_distances
from .reward import NoveltyPlayabilityReward, RewardConfig
from .ssc import CATEGORIES, categorize_states, category_of, detect_ssc_sampled

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("train", "generate", "analyze", "report")
DEFAULT_INTERVALS = ((1, 10), (11, 25), (26, 50))


class ConfigError(ValueError):
    pass


@dataclass
class EpisodeBlock:
    h: int = 25
    d: int = 8
    eval_steps: int | None = None


@dataclass
class TrainBlock:
    total_steps: int = 20000
    learning_rate: float = 0.003
    baseline: str = "mean-return"
    batch_episodes: int = 8
    sigma: float = 0.3
    hidden: int = 64


@dataclass
class GridBlock:
    gamma: list[float] = field(default_factory=lambda: [0.7, 0.99])
    n: list[int] = field(default_factory=lambda: [2, 4])


@dataclass
class EvalBlock:
    num_levels: int = 100
    mnd_repeats: int = 30
    pair_count: int = 1000
    k: int = 10
    epsilon: float | None = None
    delta: float = 0.01
    intervals: list[list[int]] = field(default_factory=lambda: [list(i) for i in DEFAULT_INTERVALS])


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs"
    episode: EpisodeBlock = field(default_factory=EpisodeBlock)
    decoder: DecoderSpec = field(default_factory=DecoderSpec)
    reward: dict = field(default_factory=dict)
    train: TrainBlock = field(default_factory=TrainBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    evaluation: EvalBlock = field(default_factory=EvalBlock)
    source_text: str = ""

    def cells(self) -> list[tuple[float, int]]:
        return [(float(g), int(n)) for g in self.grid.gamma for n in self.grid.n]

    def episode_config(self, gamma: float, n: int) -> EpisodeConfig:
        e = self.episode
        return EpisodeConfig(n=n, h=e.h, eval_steps=e.eval_steps, gamma=gamma, d=e.d, seed=self.seed)

    def reward_config(self, n: int) -> RewardConfig:
        return RewardConfig(n=n, **self.reward)


_BLOCKS = {"episode": EpisodeBlock, "decoder": DecoderSpec, "train": TrainBlock,
           "grid": GridBlock, "evaluation": EvalBlock}
_REWARD_KEYS = {f.name for f in fields(RewardConfig)} - {"n"}


def _strict(cls, name: str, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    top = {"seed", "out", "reward", *_BLOCKS}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    kw = {k: _strict(cls, k, data.get(k, {})) for k, cls in _BLOCKS.items()}
    reward = data.get("reward", {})
    if set(reward) - _REWARD_KEYS:
        raise ConfigError(f"unknown key(s) in [reward]: {', '.join(sorted(set(reward) - _REWARD_KEYS))}")
    cfg = ExperimentConfig(seed=int(data.get("seed", 0)), out=str(data.get("out", "runs")),
                           reward=reward, source_text=text, **kw)
    if kw["decoder"].d != cfg.episode.d:
        raise ConfigError("[decoder] d must equal [episode] d")
    if not cfg.cells():
        raise ConfigError("designer grid is empty")
    for gamma, n in cfg.cells():
        try:
            cfg.episode_config(gamma, n)
            cfg.reward_config(n)
        except ValueError as exc:
            raise ConfigError(f"cell gamma={gamma}, n={n}: {exc}") from exc
    return cfg


def load_config(path: Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---- seeds and layout ----

def derive_seed(*parts) -> int:
    """64-bit seed from sha256 of the ``|``-joined ``repr`` of ``parts``."""
    digest = hashlib.sha256("|".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def cell_name(gamma: float, n: int) -> str:
    return f"gamma={gamma:g}_n={n}"


def cell_seed(master: int, gamma: float, n: int) -> int:
    return derive_seed(int(master), float(gamma), int(n))


def new_run_dir(base: Path) -> Path:
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    taken = [int(m.group(1)) for p in base.iterdir() if (m := re.fullmatch(r"run-(\d+)", p.name))]
    run = base / f"run-{max(taken, default=0) + 1:03d}"
    run.mkdir()
    return run


def latest_run_dir(base: Path) -> Path:
    runs = sorted(p for p in Path(base).glob("run-*") if p.is_dir())
    if not runs:
        raise FileNotFoundError(f"no run directories under {base}")
    return runs[-1]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---- per-cell stages ----

@dataclass
class Cell:
    cfg: ExperimentConfig
    gamma: float
    n: int
    root: Path

    @property
    def dir(self) -> Path:
        return self.root / "cells" / cell_name(self.gamma, self.n)

    @property
    def seed(self) -> int:
        return cell_seed(self.cfg.seed, self.gamma, self.n)

    @property
    def episode(self) -> EpisodeConfig:
        return self.cfg.episode_config(self.gamma, self.n)

    def env(self):
        return (self.cfg.decoder.build(self.root), NoveltyPlayabilityReward(self.cfg.reward_config(self.n)),
                self.episode)


def stage_train(cell: Cell) -> None:
    t = cell.cfg.train
    cell.dir.mkdir(parents=True, exist_ok=True)
    net = PolicyNetwork.init(cell.n, cell.cfg.episode.d, t.hidden, t.sigma, derive_seed(cell.seed, "init"))
    tc = TrainConfig(t.total_steps, t.learning_rate, t.baseline, t.batch_episodes, derive_seed(cell.seed, "train"))
    result = train(NeuralDesigner(net), cell.env(), tc)
    save_designer(result.designer, cell.dir / "designer.txt")
    write_csv(cell.dir / "learning_curve.csv", ["episode", "mean_reward"], enumerate(result.curve))


def _generate_corpus(designer, cell: Cell, tag: str):
    decoder, reward_model, episode = cell.env()
    return [rollout(designer, decoder, reward_model, episode, episode.eval_steps,
                    derive_seed(cell.seed, tag, i))
            for i in range(cell.cfg.evaluation.num_levels)]


def stage_generate(cell: Cell) -> None:
    designer = load_designer(cell.dir / "designer.txt")
    trajs = _generate_corpus(designer, cell, "eval")
    save_trajectories(trajs, cell.dir / "trajectories.txt")
    levels_dir = cell.dir / "levels"
    if levels_dir.exists():
        shutil.rmtree(levels_dir)
    levels_dir.mkdir()
    for i, t in enumerate(trajs):
        (levels_dir / f"level_{i:03d}.txt").write_text(level_to_text(t.segments))
    baseline = _generate_corpus(RandomDesigner(cell.cfg.episode.d), cell, "baseline")
    save_trajectories(baseline, cell.dir / "baseline_trajectories.txt")


def projector(n: int, d: int, master_seed: int) -> np.ndarray:
    """Fixed linear map R^{n*d} -> R^2 shared by every cell with the same window size."""
    rng = np.random.default_rng(derive_seed(int(master_seed), "projector", n * d))
    return rng.standard_normal((n * d, 2)) / np.sqrt(n * d)


def emit_scatter(categorized: dict[str, list], proj: np.ndarray, path: Path | None = None,
                 tags: dict[str, list] | None = None) -> list[tuple]:
    rows = []
    for cat in CATEGORIES:
        for j, s in enumerate(categorized.get(cat, [])):
            x, y = np.asarray(s, dtype=float).ravel() @ proj
            level, step = tags[cat][j] if tags else ("", "")
            rows.append((float(x), float(y), cat, level, step))
    if not rows:
        raise ValueError("no states to project")
    if path is not None:
        write_csv(path, ["x", "y", "category", "level", "step"], rows)
    return rows


def per_step_mnd(latents: np.ndarray, refs: np.ndarray, n: int) -> np.ndarray:
    """MND at every step, pooling all levels; step 0 is the last initial latent."""
    by_step = np.asarray(latents)[:, n - 1:, :]
    return np.array([np.mean(nearest_distances(by_step[:, i], refs)) for i in range(by_step.shape[1])])


def stage_analyze(cell: Cell) -> None:
    ev, episode = cell.cfg.evaluation, cell.episode
    n = cell.n
    designer = load_designer(cell.dir / "designer.txt")
    trajs = load_trajectories(cell.dir / "trajectories.txt")
    baseline = load_trajectories(cell.dir / "baseline_trajectories.txt")
    decoder = cell.cfg.decoder.build(cell.root)

    latents = np.array([t.latents for t in trajs])
    refs = kmeans(latents.reshape(-1, episode.d), ev.k, seed=derive_seed(cell.seed, "kmeans"),
                  provenance=cell_name(cell.gamma, n))
    write_csv(cell.dir / "references.csv", [f"z{j}" for j in range(episode.d)], refs.centroids)

    windows = [sliding_windows(t.latents, n) for t in trajs]
    tagged = [(step, s, li) for li, w in enumerate(windows) for step, s in enumerate(w)]
    categorized = categorize_states([(step, s) for step, s, _ in tagged], episode)
    tags = {c: [] for c in CATEGORIES}
    for step, _, li in tagged:
        cat = category_of(step, episode)
        if cat is not None:
            tags[cat].append((li, step))
    W = np.array(windows)
    distinct = [len({s.tobytes() for s in W[:, i]}) for i in range(W.shape[1])]
    report = detect_ssc_sampled(categorized, episode, ev.epsilon, ev.delta, distinct)
    (cell.dir / "closure_report.txt").write_text(report.to_text())
    write_csv(cell.dir / "set_sizes.csv", ["step", "states", "distinct"],
              [(i, W.shape[0], c) for i, c in enumerate(distinct)])
    emit_scatter(categorized, projector(n, episode.d, cell.cfg.seed), cell.dir / "scatter.csv", tags)

    repeats = []
    for r in range(ev.mnd_repeats):
        lat = np.array([rollout_latents(designer, episode, episode.eval_steps,
                                        derive_seed(cell.seed, "mnd", r, i))
                        for i in range(ev.num_levels)])
        repeats.append(per_step_mnd(lat, refs.centroids, n))
    M = np.array(repeats)
    write_csv(cell.dir / "mnd_repeats.csv", ["repeat", "step", "mnd"],
              [(r, i, M[r, i]) for r in range(M.shape[0]) for i in range(M.shape[1])])
    write_csv(cell.dir / "mnd.csv", ["step", "mean", "std"],
              [(i, M[:, i].mean(), M[:, i].std()) for i in range(M.shape[1])])

    R = np.array([t.rewards for t in trajs])
    write_csv(cell.dir / "reward_steps.csv", ["step", "mean", "std"],
              [(i + 1, R[:, i].mean(), R[:, i].std()) for i in range(R.shape[1])])

    levels = [decoder.decode_many(t.latents) for t in trajs]
    base_levels = [decoder.decode_many(t.latents) for t in baseline]
    div = div_score(levels, base_levels, window=n, pair_count=ev.pair_count,
                    seed=derive_seed(cell.seed, "div"))
    write_csv(cell.dir / "div.csv", ["d_M", "mean_pairwise", "div", "pair_count"],
              [tuple(div.row().values())])

    intervals = [tuple(i) for i in ev.intervals if i[1] <= episode.eval_steps]
    stats = interval_reward_stats(trajs, intervals)
    write_csv(cell.dir / "interval_rewards.csv", ["interval", "lo", "hi", "mean_reward"],
              [(f"R_{lo}:{hi}", lo, hi, v) for (lo, hi), v in stats.items()])


def read_closure_report(path: Path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(":")
        out[key.strip()] = value.strip()
    return out


def stage_report(cell: Cell) -> dict:
    """Cell summary column, recomputed from the persisted CSVs only."""
    column = {row["interval"]: float(row["mean_reward"])
              for row in read_csv(cell.dir / "interval_rewards.csv")}
    column["Div"] = float(read_csv(cell.dir / "div.csv")[0]["div"])
    closure = read_closure_report(cell.dir / "closure_report.txt")
    column["coverage"] = float(closure["coverage"])
    column["ssc"] = 1.0 if closure["occurred"] == "true" else 0.0
    from .plots import plot_cell
    plot_cell(cell.dir, cell.episode.h)
    return column


STAGE_FUNCS = {"train": stage_train, "generate": stage_generate, "analyze": stage_analyze,
               "report": stage_report}


def run_stages(cfg: ExperimentConfig, run: Path, stages, cell_filter=None) -> dict:
    """Run ``stages`` for every selected cell; a failing cell is recorded and skipped."""
    status_path = run / "status.json"
    status = json.loads(status_path.read_text()) if status_path.exists() else {"cells": {}}
    status["seed"] = cfg.seed
    columns = {}
    for gamma, n in cfg.cells():
        if cell_filter and (gamma, n) != cell_filter:
            continue
        cell = Cell(cfg, gamma, n, run)
        name = cell_name(gamma, n)
        entry = status["cells"].setdefault(name, {"completed": []})
        try:
            for stage in stages:
                log.info("%s: %s", name, stage)
                out = STAGE_FUNCS[stage](cell)
                if stage == "report":
                    columns[name] = out
                if stage not in entry["completed"]:
                    entry["completed"].append(stage)
            entry.pop("error", None)
            entry["ok"] = True
        except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the grid
            log.error("%s failed: %s", name, exc)
            entry["ok"] = False
            entry["error"] = f"{type(exc).__name__}: {exc}"
            entry["traceback"] = traceback.format_exc()
    if "report" in stages and columns:
        write_summary(run / "summary.csv", columns)
    status["ok"] = all(e.get("ok") for e in status["cells"].values())
    status_path.write_text(json.dumps(status, indent=2, sort_keys=True) + "\n")
    return status


def write_summary(path: Path, columns: dict) -> None:
    names = list(columns)
    metrics = list(dict.fromkeys(k for col in columns.values() for k in col))
    write_csv(path, ["metric", *names], [[m, *(columns[c].get(m, "") for c in names)] for m in metrics])


def start_run(cfg: ExperimentConfig, out: Path) -> Path:
    run = new_run_dir(out)
    (run / "config.toml").write_text(cfg.source_text)
    return run

