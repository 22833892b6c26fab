import dataclasses

import numpy as np
import pytest

from irs_ofdm import trainer
from irs_ofdm.channel import ChannelSet
from irs_ofdm.config import ExperimentConfig
from irs_ofdm.ddpg import DdpgConfig
from irs_ofdm.env import EnvConfig, IrsOfdmEnv, compute_reward
from irs_ofdm.mdqn import MdqnConfig
from irs_ofdm import phy


def tiny(**kw):
    cfg = ExperimentConfig(
        env=EnvConfig(M=2, N=3, K=2, C=2, steps_per_episode=8),
        mdqn=MdqnConfig(hidden=(16, 16), batch_size=8, target_sync=5, eps_decay_steps=20),
        ddpg=DdpgConfig(hidden=(16, 16), batch_size=8, target_sync=5),
        episodes=3,
        eval_episodes=2,
        n_seeds=2,
    )
    return cfg.replace(**kw)


def test_seed_streams_independent_and_stable():
    a, b = trainer.seed_streams(5), trainer.seed_streams(5)
    assert set(a) == {"env", "init", "explore", "replay", "eval_env", "eval_policy"}
    draws = {k: np.random.default_rng(v).integers(0, 2**63) for k, v in a.items()}
    assert len(set(draws.values())) == len(draws)
    assert all(np.random.default_rng(b[k]).integers(0, 2**63) == v for k, v in draws.items())


def test_train_rows_and_determinism(tmp_path):
    cfg = tiny()
    r1 = trainer.train(cfg, out_dir=tmp_path / "a")
    r2 = trainer.train(cfg, out_dir=tmp_path / "b")
    assert len(r1.metrics) == cfg.episodes
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    for row in r1.metrics:
        assert np.isfinite(row.mean_reward) and np.isfinite(row.sum_rate) and np.all(np.isfinite(row.user_rates))
    assert (tmp_path / "a" / "run.json").exists() and (tmp_path / "a" / "timings.csv").exists()
    assert (tmp_path / "a" / "checkpoints" / "actor.bin").exists()


def test_different_seeds_differ():
    a = trainer.train(tiny(seed=1)).metrics
    b = trainer.train(tiny(seed=2)).metrics
    assert [r.mean_reward for r in a] != [r.mean_reward for r in b]


def test_metrics_csv_round_trip(tmp_path):
    res = trainer.train(tiny())
    trainer.write_metrics(res.metrics, tmp_path / "metrics.csv")
    back = trainer.read_metrics(tmp_path / "metrics.csv")
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "episode,mean_reward,sum_rate,rate_user_0,rate_user_1,violations,discounted_return"
    for a, b in zip(res.metrics, back):
        assert a.mean_reward == b.mean_reward and np.array_equal(a.user_rates, b.user_rates)


def test_training_error_carries_context(monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("bad")

    monkeypatch.setattr(trainer.MdqnAgent, "train_step", boom)
    with pytest.raises(trainer.TrainingError, match=r"episode 0 step 7"):
        trainer.train(tiny(learn_start=8))


def test_evaluate_deterministic_and_feasible(monkeypatch):
    cfg = tiny()
    res = trainer.train(cfg)
    a = trainer.evaluate(res.agents, cfg)
    b = trainer.evaluate(res.agents, cfg)
    assert [r.mean_reward for r in a] == [r.mean_reward for r in b]
    seen = []
    original = IrsOfdmEnv.check_constraints

    def spy(self, action):
        seen.append(phy.total_power(action.a1, action.beams) <= self.config.p_t * (1 + 1e-9))
        return original(self, action)

    monkeypatch.setattr(IrsOfdmEnv, "check_constraints", spy)
    trainer.evaluate(res.agents, cfg)
    assert seen and all(seen)


def test_scheme_configs():
    cfg = tiny()
    assert trainer.scheme_config(cfg, "no-irs").env.irs_enabled is False
    assert trainer.scheme_config(cfg, "fixed-beamforming").env.beamforming == "fixed"
    with pytest.raises(ValueError):
        trainer.scheme_config(cfg, "oracle")


@pytest.mark.parametrize("kind", ["random", "no-irs", "fixed-beamforming"])
def test_run_baseline(kind):
    rows = trainer.run_baseline(kind, tiny()).metrics
    assert len(rows) == 3


def test_random_baseline_monotone_in_power():
    base = tiny(episodes=2)
    sums = [np.mean([r.sum_rate for r in trainer.run_random(base.with_env(p_t_dbm=p)).metrics]) for p in (15.0, 25.0, 35.0)]
    assert sums[0] <= sums[1] <= sums[2]


def test_sweep_rows_and_files(tmp_path):
    rows = trainer.sweep(tiny(episodes=1, eval_episodes=1), "power", (15.0, 40.0), ("random",), out_dir=tmp_path)
    assert [(r.axis_value, r.scheme, r.n_seeds) for r in rows] == [(15.0, "random", 2), (40.0, "random", 2)]
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == "axis_value,scheme,mean,std,n_seeds"
    assert len(list((tmp_path / "cells").iterdir())) == 4


def test_sweep_default_axes():
    rows = trainer.sweep(tiny(episodes=1, eval_episodes=1, n_seeds=1), "elements", schemes=("random",))
    assert [r.axis_value for r in rows] == [16, 32, 48, 64]
    with pytest.raises(ValueError):
        trainer.sweep(tiny(), "power", (50.0,))
    with pytest.raises(ValueError):
        trainer.sweep(tiny(), "none")


def test_sweep_isolates_failures(monkeypatch):
    real = trainer.evaluate_scheme

    def flaky(kind, cfg):
        if cfg.seed == 1:
            raise RuntimeError("cell exploded")
        return real(kind, cfg)

    monkeypatch.setattr(trainer, "evaluate_scheme", flaky)
    rows = trainer.sweep(tiny(episodes=1, eval_episodes=1, seed=0), "power", (20.0,), ("random",))
    assert rows[0].n_seeds == 1 and np.isnan(rows[0].values[1])


def test_brute_force_trivial_and_constructed():
    env_cfg = EnvConfig(M=1, N=1, K=1, C=2, r_min=0.0)
    one = np.ones((1, 1, 2), complex)
    ch = ChannelSet(one, one.copy(), one.copy())
    lam, _ = trainer.brute_force_assignment(ch, np.zeros(1), np.ones((1, 2)), env_cfg)
    assert lam.tolist() == [0, 0]

    env_cfg = EnvConfig(M=1, N=1, K=2, C=2, r_min=0.0)
    h_bu = np.full((1, 2, 2), 1e-10, complex)
    h_bu[0, 0, 0] = h_bu[0, 1, 1] = 1e-5
    ch = ChannelSet(h_bu, np.zeros((1, 1, 2), complex), np.zeros((1, 2, 2), complex))
    lam, _ = trainer.brute_force_assignment(ch, np.zeros(1), np.ones((1, 2)), env_cfg)
    assert lam.tolist() == [0, 1]


def test_brute_force_beats_random_assignments():
    env_cfg = EnvConfig(M=3, N=4, K=3, C=4)
    env = IrsOfdmEnv(env_cfg, 0)
    env.reset()
    rng = np.random.default_rng(0)
    action = env.decode_action(np.zeros(4, int), rng.uniform(-1, 1, env_cfg.continuous_dim))
    lam, best = trainer.brute_force_assignment(env.channels, action.theta, action.beams, env_cfg)
    for _ in range(100):
        cand = rng.integers(0, 3, 4)
        _, per = phy.sum_rate(cand, env.channels, action.theta, action.beams, env_cfg.sigma2, env_cfg.bandwidth)
        assert compute_reward(per, env_cfg) <= best * (1 + 1e-12)
    _, per = phy.sum_rate(lam, env.channels, action.theta, action.beams, env_cfg.sigma2, env_cfg.bandwidth)
    assert compute_reward(per, env_cfg) == pytest.approx(best, rel=1e-12)


def test_brute_force_refuses_huge_spaces():
    env_cfg = EnvConfig(M=1, N=1, K=4, C=11)
    ch = ChannelSet(np.ones((1, 4, 11), complex), np.ones((1, 1, 11), complex), np.ones((1, 4, 11), complex))
    with pytest.raises(ValueError):
        trainer.brute_force_assignment(ch, np.zeros(1), np.ones((1, 11)), env_cfg)


def test_oracle_check_runs_small():
    out = trainer.oracle_check(0, steps=200)
    assert out.learned.shape == (2,) and out.optimal.shape == (2,)
    assert out.learned_score <= out.optimal_score * (1 + 1e-12)


def test_load_agents_round_trip(tmp_path):
    cfg = tiny()
    res = trainer.train(cfg, out_dir=tmp_path)
    agents = trainer.load_agents(cfg, tmp_path / "checkpoints")
    s = np.random.default_rng(0).standard_normal(IrsOfdmEnv(cfg.env).state_dim)
    assert np.array_equal(agents.ddpg.act(s), res.agents.ddpg.act(s))
    assert np.array_equal(agents.mdqn.q_values(s), res.agents.mdqn.q_values(s))
