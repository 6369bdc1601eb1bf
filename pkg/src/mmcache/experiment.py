"""Training loop, frozen evaluation, cache-size sweeps and result CSVs."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import QOS_TABLE
from .config import DRL_SCHEMES, ExperimentConfig
from .drl import Agent, QNetwork
from .simulation import EpisodeResult, make_agent, run_episode

TRAIN_SEED_BASE = 1_000_000

RESULT_HEADER = ["scheme", "seed", "cache_size_bytes", "window_index", "avg_hops", "hit_ratio",
                 "reduced_load_ratio", "unsatisfied_ratio", "total_requests"]
AGGREGATE_HEADER = ["scheme", "cache_size_bytes", "n_seeds"] + [
    f"{m}_{stat}" for m in ("avg_hops", "hit_ratio", "reduced_load_ratio", "unsatisfied_ratio")
    for stat in ("mean", "std")]
CURVE_HEADER = ["episode", "epsilon", "mean_loss", "episode_reward", "unsatisfied_ratio"]
METRICS = ("avg_hops", "hit_ratio", "reduced_load_ratio", "unsatisfied_ratio")


def training_seed(config: ExperimentConfig, episode: int) -> int:
    """Training episodes draw workloads disjoint from the evaluation seeds."""
    return TRAIN_SEED_BASE + 100_000 * config.train_seed + episode


@dataclass
class CurveRow:
    episode: int
    epsilon: float
    mean_loss: float
    episode_reward: float
    unsatisfied_ratio: float


@dataclass
class TrainResult:
    scheme: str
    agent: Agent
    best: QNetwork
    best_episode: int
    best_unsatisfied: float
    curve: list[CurveRow] = field(default_factory=list)
    stopped_early: bool = False

    def frozen_agent(self, use_best: bool = True) -> Agent:
        """The learner with the chosen parameters loaded, for evaluation."""
        agent = self.agent
        if use_best:
            agent = make_agent_like(agent, self.best)
        return agent


def make_agent_like(agent: Agent, net: QNetwork) -> Agent:
    clone = Agent.__new__(Agent)
    clone.__dict__.update(agent.__dict__)
    clone.online = net.copy()
    return clone


class EarlyStop:
    """Stop when the 100-episode moving average of reward has not improved by
    1 % of its best value for ``patience`` episodes."""

    def __init__(self, patience: int, window: int = 100, min_gain: float = 0.01):
        self.patience = patience
        self.window = window
        self.min_gain = min_gain
        self.recent: deque = deque(maxlen=window)
        self.best: float | None = None
        self.best_at = 0

    def update(self, episode: int, reward: float) -> bool:
        self.recent.append(reward)
        if len(self.recent) < self.window:
            self.best_at = episode
            return False
        ma = sum(self.recent) / len(self.recent)
        if self.best is None or ma > self.best + self.min_gain * abs(self.best):
            self.best, self.best_at = ma, episode
            return False
        return episode - self.best_at >= self.patience


def train(config: ExperimentConfig, scheme: str = "d3qn", episodes: int | None = None,
          out_dir: str | Path | None = None, progress=None) -> TrainResult:
    if scheme not in DRL_SCHEMES:
        raise ValueError(f"{scheme} is not a learning scheme")
    episodes = config.episodes if episodes is None else episodes
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    agent = make_agent(config, scheme)
    stopper = EarlyStop(config.early_stop_patience)
    curve: list[CurveRow] = []
    best, best_ep, best_unsat = agent.online.copy(), 0, math.inf
    stopped = False
    for ep in range(1, episodes + 1):
        res = run_episode(config, scheme, training_seed(config, ep), "train", agent, episode=ep)
        unsat = res.snapshot.unsatisfied_ratio if res.snapshot else math.nan
        curve.append(CurveRow(ep, agent.schedule.current, res.mean_loss, res.reward_total, unsat))
        if unsat < best_unsat:
            best, best_ep, best_unsat = agent.online.copy(), ep, unsat
        if progress:
            progress(curve[-1])
        if stopper.update(ep, res.reward_total):
            stopped = True
            break
    result = TrainResult(scheme, agent, best, best_ep, best_unsat, curve, stopped)
    if out_dir is not None:
        save_training(result, out_dir)
    return result


def save_training(result: TrainResult, out_dir: str | Path):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.best.save(out / f"{result.scheme}_best.qnet")
    result.agent.online.save(out / f"{result.scheme}_final.qnet")
    _write(out / f"{result.scheme}_curve.csv", curve_to_csv(result.curve))


def curve_to_csv(curve: list[CurveRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in curve:
        w.writerow([r.episode, _fmt(r.epsilon), _fmt(r.mean_loss), _fmt(r.episode_reward),
                    _fmt(r.unsatisfied_ratio)])
    return buf.getvalue()


def load_agent(config: ExperimentConfig, scheme: str, checkpoint: str | Path) -> Agent:
    agent = make_agent(config, scheme)
    net = QNetwork.load(checkpoint)
    if not net.same_shape(agent.online):
        raise ValueError(f"{checkpoint} does not fit scheme {scheme}")
    agent.online = net
    agent.target = net.copy()
    return agent


# -- evaluation --------------------------------------------------------------------

def evaluate(config: ExperimentConfig, scheme: str, agent: Agent | None = None,
             seeds=None, cache_sizes=None, jobs: int = 1) -> list[EpisodeResult]:
    """Frozen (greedy) runs over seeds × cache sizes; learning schemes need ``agent``."""
    if scheme in DRL_SCHEMES and agent is None:
        raise ValueError(f"{scheme} needs a trained agent")
    seeds = config.seeds if seeds is None else seeds
    sizes = [config.cache_size_bytes] if cache_sizes is None else cache_sizes
    mode = "frozen" if scheme in DRL_SCHEMES else "none"
    cells = [(config, scheme, seed, mode, agent, size) for size in sizes for seed in seeds]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return results


def _run_cell(cell) -> EpisodeResult:
    config, scheme, seed, mode, agent, size = cell
    res = run_episode(config, scheme, seed, mode, agent, cache_size=size)
    res.accumulator = None
    return res


@dataclass
class SweepResult:
    episodes: list[EpisodeResult]
    training: dict[str, TrainResult]

    def aggregate(self) -> list[dict]:
        return aggregate(self.episodes)


def sweep(config: ExperimentConfig, trained: dict[str, TrainResult] | None = None,
          jobs: int = 1, progress=None) -> SweepResult:
    """Cross product of schemes × cache sizes × seeds.  Each learning scheme is
    trained once at the default cache size and then evaluated frozen."""
    trained = dict(trained or {})
    episodes: list[EpisodeResult] = []
    for scheme in config.schemes:
        agent = None
        if scheme in DRL_SCHEMES:
            if scheme not in trained:
                trained[scheme] = train(config, scheme)
            agent = trained[scheme].frozen_agent()
        episodes += evaluate(config, scheme, agent, cache_sizes=config.cache_sizes_bytes, jobs=jobs)
        if progress:
            progress(scheme)
    return SweepResult(episodes, trained)


def aggregate(results: list[EpisodeResult]) -> list[dict]:
    cells: dict[tuple, list[EpisodeResult]] = {}
    for r in results:
        cells.setdefault((r.scheme, r.cache_size), []).append(r)
    rows = []
    for (scheme, size), group in sorted(cells.items()):
        row = {"scheme": scheme, "cache_size_bytes": size, "n_seeds": len(group)}
        for m in METRICS:
            vals = np.array([getattr(r.snapshot, m) for r in group if r.snapshot is not None])
            row[f"{m}_mean"] = float(vals.mean()) if len(vals) else math.nan
            row[f"{m}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


# -- CSV -------------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _metric_row(r: EpisodeResult, index: int, snap) -> tuple:
    if snap is None or snap.total_requests == 0:
        vals = ["", "", "", ""]
        n = 0
    else:
        vals = [_fmt(getattr(snap, m)) for m in METRICS]
        n = snap.total_requests
    return (r.scheme, r.cache_size, r.seed, index), [r.scheme, r.seed, r.cache_size, index, *vals, n]


def results_to_csv(results: list[EpisodeResult]) -> str:
    rows = []
    for r in results:
        rows.append(_metric_row(r, -1, r.snapshot))
        rows += [_metric_row(r, i, s) for i, s in r.series]
    rows.sort(key=lambda kv: kv[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    w.writerows(row for _, row in rows)
    return buf.getvalue()


def aggregate_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for row in rows:
        w.writerow([_fmt(row[k]) if not isinstance(row[k], str) else row[k] for k in AGGREGATE_HEADER])
    return buf.getvalue()


def _write(path: Path, text: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(text)


def emit_csv(results: list[EpisodeResult], path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write(path, results_to_csv(results))


def emit_sweep(result: SweepResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(result.episodes, out / "results.csv")
    _write(out / "aggregate.csv", aggregate_to_csv(result.aggregate()))
    for tr in result.training.values():
        save_training(tr, out)
    return [out / "results.csv", out / "aggregate.csv"]


# -- scenario helpers ------------------------------------------------------------------

def stationary_config(config: ExperimentConfig, rate: float | None = None) -> ExperimentConfig:
    """Constant arrival rate, fixed popularity, no releases.  The default rate
    matches the horizon-average of the configured phases."""
    wl = config.workload
    if rate is None:
        starts = [s for s, _ in wl.phase_schedule] + [wl.horizon_slots]
        rate = sum((min(b, wl.horizon_slots) - a) * r for (a, r), b
                   in zip(wl.phase_schedule, starts[1:]) if a < wl.horizon_slots) / wl.horizon_slots
    workload = dataclasses.replace(wl, phase_schedule=[(0, rate)], shift_schedule=[],
                                   release_schedule=[])
    return config.replace(workload=workload)


def adaptation_config(config: ExperimentConfig, shift_slot: int = 240, shift_seed: int = 1234,
                      n_releases: int = 10) -> ExperimentConfig:
    """Popularity reshuffle plus ``n_releases`` new contents at ``shift_slot``;
    release classes cycle through the QoS table."""
    classes = list(QOS_TABLE)
    releases = [(shift_slot, classes[i % len(classes)]) for i in range(n_releases)]
    workload = dataclasses.replace(config.workload, shift_schedule=[(shift_slot, shift_seed)],
                                   release_schedule=releases)
    return config.replace(workload=workload)


@dataclass(frozen=True)
class Recovery:
    pre_mean: float
    post: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(p / self.pre_mean for p in self.post)

    def recovered(self, fraction: float = 0.8) -> bool:
        return any(p >= fraction * self.pre_mean for p in self.post)


def hit_recovery(results: list[EpisodeResult], shift_slot: int, window: int,
                 post_windows: int = 2) -> Recovery:
    """Seed-averaged windowed hit ratio before a shift versus the first
    ``post_windows`` windows after it."""
    if shift_slot % window:
        raise ValueError("shift must fall on a window boundary")
    first_post = shift_slot // window
    series = np.array([[s.hit_ratio for _, s in r.series] for r in results])
    mean = np.nanmean(series, axis=0)
    pre = float(np.nanmean(mean[:first_post]))
    return Recovery(pre, tuple(float(x) for x in mean[first_post:first_post + post_windows]))
