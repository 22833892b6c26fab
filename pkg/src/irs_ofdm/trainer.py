"""Training loop, greedy evaluation, baselines, sweeps and the assignment oracle."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from ._jit import USE_NUMBA
from .config import BASELINES, SWEEP_AXES, ExperimentConfig, check_sweep_values
from .ddpg import DdpgAgent
from .env import EnvConfig, IrsOfdmEnv, compute_reward, discounted_return
from .mdqn import MdqnAgent, MdqnConfig
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)

MAX_ENUMERATION = 10 ** 6


class TrainingError(RuntimeError):
    pass


@dataclass
class MetricsRow:
    episode: int
    mean_reward: float
    sum_rate: float
    user_rates: np.ndarray
    violations: int
    discounted_return: float
    wall_seconds: float = 0.0


@dataclass
class Agents:
    mdqn: MdqnAgent
    ddpg: DdpgAgent


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: list
    agents: Optional[Agents] = None


@dataclass
class SweepRow:
    axis_value: float
    scheme: str
    mean: float
    std: float
    n_seeds: int
    values: list = field(default_factory=list)


def seed_streams(seed: int) -> dict:
    """Independent child seeds so each random consumer is isolated from the others."""
    names = ("env", "init", "explore", "replay", "eval_env", "eval_policy")
    return dict(zip(names, np.random.SeedSequence(seed).spawn(len(names))))


def scheme_config(cfg: ExperimentConfig, kind: str) -> ExperimentConfig:
    """The experiment variant a baseline runs under."""
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    if kind == "no-irs":
        cfg = cfg.with_env(irs_enabled=False)
    elif kind == "fixed-beamforming":
        cfg = cfg.with_env(beamforming="fixed")
    return cfg.replace(baseline=kind)


def build_agents(cfg: ExperimentConfig, env: IrsOfdmEnv, rng) -> Agents:
    e = cfg.env
    mdqn = MdqnAgent(env.state_dim, e.K, e.C, cfg.mdqn, rng)
    ddpg = DdpgAgent(env.state_dim, e.K, e.C, e.continuous_dim, cfg.ddpg, rng)
    return Agents(mdqn, ddpg)


class _EpisodeStats:
    def __init__(self, K):
        self.rewards, self.sum_rates, self.user = [], [], np.zeros(K)
        self.violations = 0
        self.t0 = time.perf_counter()

    def add(self, out):
        self.rewards.append(out.reward)
        self.sum_rates.append(out.sum_rate)
        self.user += out.per_user_rates
        self.violations += out.min_rate_violations

    def row(self, episode, gamma):
        n = len(self.rewards)
        return MetricsRow(
            episode,
            float(np.mean(self.rewards)),
            float(np.mean(self.sum_rates)),
            self.user / n,
            self.violations,
            discounted_return(self.rewards, gamma),
            time.perf_counter() - self.t0,
        )


def train(cfg: ExperimentConfig, progress=None, out_dir=None) -> RunResult:
    """Run the hybrid MDQN-DDPG learner for ``cfg.episodes`` episodes."""
    if cfg.baseline == "random":
        return run_random(cfg, out_dir=out_dir)
    streams = seed_streams(cfg.seed)
    env = IrsOfdmEnv(cfg.env, streams["env"])
    agents = build_agents(cfg, env, np.random.default_rng(streams["init"]))
    mdqn, ddpg = agents.mdqn, agents.ddpg
    explore = np.random.default_rng(streams["explore"])
    replay_rng = np.random.default_rng(streams["replay"])
    buf = ReplayBuffer(cfg.replay_capacity, env.state_dim, cfg.env.C, cfg.env.continuous_dim)
    reward_scale = cfg.env.rate_scale
    learn_start = cfg.learn_start or max(cfg.mdqn.batch_size, cfg.ddpg.batch_size)
    shared_batch = cfg.mdqn.batch_size == cfg.ddpg.batch_size

    metrics, step = [], 0
    for ep in range(cfg.episodes):
        s = env.reset()
        stats = _EpisodeStats(cfg.env.K)
        for t in range(cfg.env.steps_per_episode):
            try:
                a1 = mdqn.select_discrete(s, mdqn.epsilon(step), explore)
                a2 = ddpg.select_continuous(s, ddpg.noise_sigma(step), explore)
                out = env.step(env.decode_action(a1, a2))
                buf.push(Transition(s, a1, a2, out.reward / reward_scale, out.next_state))
                if buf.ready(learn_start):
                    batch = buf.sample(cfg.mdqn.batch_size, replay_rng)
                    mdqn.train_step(batch)
                    if not shared_batch:
                        batch = buf.sample(cfg.ddpg.batch_size, replay_rng)
                    # both gradients use the pre-update critic
                    ddpg.actor_train_step(batch)
                    ddpg.critic_train_step(batch)
                step += 1
                if step % cfg.mdqn.target_sync == 0:
                    mdqn.sync_targets()
                if cfg.ddpg.soft_tau is not None:
                    ddpg.soft_sync()
                elif step % cfg.ddpg.target_sync == 0:
                    ddpg.sync_targets()
            except Exception as exc:
                raise TrainingError(f"episode {ep} step {t}: {exc}") from exc
            stats.add(out)
            s = out.next_state
        row = stats.row(ep, cfg.mdqn.gamma)
        metrics.append(row)
        if progress is not None:
            progress(row)
    result = RunResult(cfg, metrics, agents)
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def _rollout(env: IrsOfdmEnv, policy, episodes: int, gamma: float) -> list:
    metrics = []
    for ep in range(episodes):
        s = env.reset()
        stats = _EpisodeStats(env.config.K)
        for _ in range(env.config.steps_per_episode):
            a1, a2 = policy(s)
            out = env.step(env.decode_action(a1, a2))
            stats.add(out)
            s = out.next_state
        metrics.append(stats.row(ep, gamma))
    return metrics


def random_policy(env_cfg: EnvConfig, rng: np.random.Generator):
    """Uniform assignment, uniform raw beams/phases in [-1, 1] (decoded and power-projected)."""

    def policy(_state):
        a1 = rng.integers(0, env_cfg.K, env_cfg.C)
        a2 = rng.uniform(-1.0, 1.0, env_cfg.continuous_dim)
        return a1, a2

    return policy


def greedy_policy(agents: Agents):
    # with epsilon = 0 the draws made by select_discrete never affect the choice
    unused = np.random.default_rng(0)

    def policy(state):
        return agents.mdqn.select_discrete(state, 0.0, unused), agents.ddpg.act(state)

    return policy


def evaluate(agents: Agents, cfg: ExperimentConfig, episodes: Optional[int] = None) -> list:
    """Greedy rollouts (no exploration, no learning) on the evaluation channel stream."""
    streams = seed_streams(cfg.seed)
    # same users as training, evaluation-only channel draws
    env = IrsOfdmEnv(cfg.env, streams["env"], channel_seed=streams["eval_env"])
    return _rollout(env, greedy_policy(agents), episodes or cfg.eval_episodes, cfg.mdqn.gamma)


def run_random(cfg: ExperimentConfig, evaluation: bool = False, out_dir=None) -> RunResult:
    """Random-selection baseline; `evaluation` switches to the evaluation channel stream."""
    streams = seed_streams(cfg.seed)
    env = IrsOfdmEnv(cfg.env, streams["env"], channel_seed=streams["eval_env"] if evaluation else None)
    rng = np.random.default_rng(streams["eval_policy" if evaluation else "explore"])
    episodes = cfg.eval_episodes if evaluation else cfg.episodes
    result = RunResult(cfg, _rollout(env, random_policy(cfg.env, rng), episodes, cfg.mdqn.gamma))
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def run_baseline(kind: str, cfg: ExperimentConfig, out_dir=None, progress=None) -> RunResult:
    """Run one scheme: random rollouts, or training under the no-IRS / fixed-beamforming variant."""
    cfg = scheme_config(cfg, kind)
    if kind == "random":
        return run_random(cfg, out_dir=out_dir)
    return train(cfg, progress=progress, out_dir=out_dir)


def evaluate_scheme(kind: str, cfg: ExperimentConfig) -> list:
    """Evaluation metrics for one scheme (training first where the scheme learns)."""
    cfg = scheme_config(cfg, kind)
    if kind == "random":
        return run_random(cfg, evaluation=True).metrics
    result = train(cfg)
    return evaluate(result.agents, cfg)


def _sweep_cell(args):
    axis, value, kind, seed, cfg = args
    cell = cfg.replace(seed=seed)
    if axis == "power":
        cell = cell.with_env(p_t_dbm=float(value))
    elif axis == "elements":
        cell = cell.with_env(N=int(value))
    try:
        rows = evaluate_scheme(kind, cell)
        return float(np.mean([r.sum_rate for r in rows])), None
    except Exception as exc:  # isolate failing cells
        return float("nan"), f"{type(exc).__name__}: {exc}"


def sweep(cfg: ExperimentConfig, axis: str, values=None, schemes=BASELINES, seeds=None, out_dir=None) -> list:
    """Mean/std of evaluated sum rate per (axis value, scheme) over paired seeds."""
    if axis not in SWEEP_AXES or axis == "none":
        raise ValueError(f"sweep axis must be one of power/elements, got {axis!r}")
    values = tuple(values if values is not None else (cfg.sweep_values or SWEEP_AXES[axis]))
    check_sweep_values(axis, values)
    seeds = list(seeds if seeds is not None else range(cfg.seed, cfg.seed + cfg.n_seeds))
    cells = [(axis, v, kind, s, cfg) for v in values for kind in schemes for s in seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    if out_dir is not None:
        cell_dir = Path(out_dir) / "cells"
        cell_dir.mkdir(parents=True, exist_ok=True)
        for (ax, v, kind, s, _), (val, err) in zip(cells, results):
            with open(cell_dir / f"{ax}_{v}_{kind}_seed{s}.csv", "w", newline="") as fh:
                csv.writer(fh).writerows([["axis_value", "scheme", "seed", "sum_rate", "error"], [v, kind, s, repr(val), err or ""]])

    rows = []
    for v in values:
        for kind in schemes:
            vals = [res[0] for c, res in zip(cells, results) if c[1] == v and c[2] == kind]
            errors = [res[1] for c, res in zip(cells, results) if c[1] == v and c[2] == kind and res[1]]
            for e in errors:
                log.warning("sweep cell %s=%s %s failed: %s", axis, v, kind, e)
            ok = [x for x in vals if np.isfinite(x)]
            mean = float(np.mean(ok)) if ok else float("nan")
            std = float(np.std(ok)) if ok else float("nan")
            rows.append(SweepRow(v, kind, mean, std, len(ok), vals))
    if out_dir is not None:
        write_sweep(rows, Path(out_dir) / "sweep.csv")
    return rows


# ------------------------------------------------------------------- oracle

def brute_force_assignment(channels, theta, beams, env_cfg: EnvConfig, backend=None):
    """Best assignment over all K**C candidates under the penalised reward, with its score."""
    M, N, K, C = channels.dims
    if K ** C > MAX_ENUMERATION:
        raise ValueError(f"K**C = {K ** C} exceeds the enumeration limit {MAX_ENUMERATION}")
    rates = kernels.rate_matrix(
        channels.h_bu, channels.H_br, channels.h_ru, theta, beams, env_cfg.sigma2,
        env_cfg.bandwidth / C, env_cfg.irs_enabled, backend,
    )
    return kernels.best_assignment(rates, env_cfg.r_min_vector, env_cfg.b_vector, env_cfg.w1, env_cfg.w2, backend)


@dataclass
class OracleOutcome:
    seed: int
    learned: np.ndarray
    optimal: np.ndarray
    learned_score: float
    optimal_score: float

    @property
    def agrees(self) -> bool:
        return bool(np.array_equal(self.learned, self.optimal))


def oracle_env_config(**overrides) -> EnvConfig:
    base = dict(M=2, N=4, K=2, C=2, channel_refresh="frozen", steps_per_episode=100)
    base.update(overrides)
    return EnvConfig(**base)


def oracle_check(seed: int, env_cfg: Optional[EnvConfig] = None, mdqn_cfg=None, steps: int = 2000, replay_capacity: int = 1000) -> OracleOutcome:
    """Train only the MDQN on a frozen channel with a fixed continuous action and
    compare its greedy assignment with exhaustive enumeration.

    With the channel frozen and the continuous action pinned, the reward does not
    depend on the state, so the greedy policy is optimal for any discount and
    gamma=0 is used to drop the constant bootstrap offset. The short buffer lets
    early transitions (taken while the other heads were still random) age out.
    """
    env_cfg = env_cfg or oracle_env_config()
    mdqn_cfg = mdqn_cfg or MdqnConfig(hidden=(64, 64, 64), gamma=0.0, eps_decay_steps=steps // 4, dtype="float64")
    streams = seed_streams(seed)
    env = IrsOfdmEnv(env_cfg, streams["env"])
    s = env.reset()
    fixed_a2 = np.random.default_rng(streams["eval_policy"]).uniform(-1.0, 1.0, env_cfg.continuous_dim)
    agent = MdqnAgent(env.state_dim, env_cfg.K, env_cfg.C, mdqn_cfg, np.random.default_rng(streams["init"]))
    explore = np.random.default_rng(streams["explore"])
    replay_rng = np.random.default_rng(streams["replay"])
    buf = ReplayBuffer(replay_capacity, env.state_dim, env_cfg.C, env_cfg.continuous_dim)
    scale = env_cfg.rate_scale
    for step in range(steps):
        if env.t >= env_cfg.steps_per_episode:
            s = env.reset()
        a1 = agent.select_discrete(s, agent.epsilon(step), explore)
        out = env.step(env.decode_action(a1, fixed_a2))
        buf.push(Transition(s, a1, fixed_a2, out.reward / scale, out.next_state))
        if buf.ready(mdqn_cfg.batch_size):
            agent.train_step(buf.sample(mdqn_cfg.batch_size, replay_rng))
        if (step + 1) % mdqn_cfg.target_sync == 0:
            agent.sync_targets()
        s = out.next_state

    # greedy rollout from a fresh episode; the assignment it settles on is the answer
    s = env.reset()
    for _ in range(env_cfg.steps_per_episode):
        a1 = agent.select_discrete(s, 0.0, explore)
        out = env.step(env.decode_action(a1, fixed_a2))
        s = out.next_state
    action = env.decode_action(a1, fixed_a2)
    optimal, best = brute_force_assignment(env.channels, action.theta, action.beams, env_cfg)
    _, per_user = env.rates(action)
    return OracleOutcome(seed, np.asarray(a1), optimal, compute_reward(per_user, env_cfg), best)


# ------------------------------------------------------------------ outputs

def metrics_header(K: int):
    return ["episode", "mean_reward", "sum_rate"] + [f"rate_user_{k}" for k in range(K)] + ["violations", "discounted_return"]


def write_metrics(metrics, path) -> None:
    """metrics.csv holds only reproducible columns; wall-clock goes to timings.csv."""
    path = Path(path)
    K = len(metrics[0].user_rates) if metrics else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics_header(K))
        for m in metrics:
            w.writerow([m.episode, repr(m.mean_reward), repr(m.sum_rate), *(repr(float(r)) for r in m.user_rates), m.violations, repr(m.discounted_return)])
    with open(path.with_name("timings.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "wall_seconds"])
        for m in metrics:
            w.writerow([m.episode, f"{m.wall_seconds:.6f}"])


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        users = sorted((k for k in r if k.startswith("rate_user_")), key=lambda k: int(k.rsplit("_", 1)[1]))
        out.append(MetricsRow(int(r["episode"]), float(r["mean_reward"]), float(r["sum_rate"]),
                              np.array([float(r[k]) for k in users]), int(r["violations"]), float(r["discounted_return"])))
    return out


def write_sweep(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis_value", "scheme", "mean", "std", "n_seeds"])
        for r in rows:
            w.writerow([r.axis_value, r.scheme, repr(r.mean), repr(r.std), r.n_seeds])


def write_manifest(cfg: ExperimentConfig, path, **extra) -> None:
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "baseline": cfg.baseline,
        "numba": USE_NUMBA,
        "config": cfg.to_dict(),
        **extra,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_run(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(result.metrics, out / "metrics.csv")
    if result.agents is not None:
        result.agents.mdqn.save(out / "checkpoints")
        result.agents.ddpg.save(out / "checkpoints")
    write_manifest(result.config, out / "run.json")


def load_agents(cfg: ExperimentConfig, checkpoint_dir) -> Agents:
    """Rebuild agents for `cfg` and fill them from a checkpoint directory."""
    env = IrsOfdmEnv(cfg.env, seed_streams(cfg.seed)["env"])
    agents = build_agents(cfg, env, np.random.default_rng(0))
    agents.mdqn.load(checkpoint_dir)
    agents.ddpg.load(checkpoint_dir)
    return agents
