import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from amble import netcore
from amble.config import PpoConfig, default_config
from amble.errors import NumericalError
from amble.model import build_default_model
from amble.ppo import (METRIC_COLUMNS, PolicyHead, PolicyOptimizer, Trainer,
                       build_policy, build_value, compute_gae, entropy,
                       load_checkpoint, log_prob, ppo_update,
                       relabel_rewards, sample_action, sample_actions,
                       save_checkpoint)
from amble.rewards import TERM_NAMES, RewardWeights, total_reward


def tiny_head(obs_dim=4, act_dim=2, seed=0, log_std=-0.5):
    rng = np.random.default_rng(seed)
    net = netcore.orthogonal_init((obs_dim, 16, act_dim), ("tanh", "identity"),
                                  rng, output_gain=0.1)
    return PolicyHead(mean_net=net, log_std=np.full(act_dim, float(log_std)),
                      obs_scale=np.ones(obs_dim))


def brute_force_gae(rewards, values, next_values, falls, dones, gamma, lam):
    """O(T^2) oracle: explicit sum of discounted, episode-cut deltas."""
    T, N = rewards.shape
    deltas = rewards + gamma * next_values * (1.0 - falls) - values
    adv = np.zeros((T, N))
    for n in range(N):
        for t in range(T):
            acc = 0.0
            coeff = 1.0
            for l in range(t, T):
                acc += coeff * deltas[l, n]
                if dones[l, n]:
                    break
                coeff *= gamma * lam
            adv[t, n] = acc
    return adv


class TestSampling:
    def test_deterministic_mode_returns_mean(self, rng):
        head = tiny_head()
        obs = rng.standard_normal(4)
        action, logp = sample_action(head, obs, rng, deterministic=True)
        np.testing.assert_array_equal(action, head.mean(obs))

    def test_log_prob_at_mean(self, rng):
        head = tiny_head()
        obs = rng.standard_normal(4)
        action, logp = sample_action(head, obs, rng, deterministic=True)
        expected = -0.5 * float(np.sum(np.log(2 * math.pi * head.std() ** 2)))
        assert logp == pytest.approx(expected, abs=1e-12)

    def test_log_prob_recomputation_matches(self, rng):
        head = tiny_head()
        for _ in range(100):
            obs = rng.standard_normal(4)
            action, logp = sample_action(head, obs, rng)
            assert log_prob(head, obs, action) == pytest.approx(logp, abs=1e-12)

    def test_monte_carlo_mean(self, rng):
        head = tiny_head(log_std=-1.0)
        obs = rng.standard_normal(4)
        n = 100_000
        actions, _ = sample_actions(head, np.tile(obs, (n, 1)), rng)
        mean = head.mean(obs)
        tol = 4.0 * head.std() / math.sqrt(n)
        assert np.all(np.abs(actions.mean(axis=0) - mean) < tol)

    def test_entropy_formula(self):
        head = tiny_head(log_std=-0.5)
        expected = 2 * (-0.5) + 0.5 * 2 * (1 + math.log(2 * math.pi))
        assert entropy(head) == pytest.approx(expected, abs=1e-12)

    def test_log_std_clamped(self):
        head = tiny_head()
        head.log_std[:] = 100.0
        head.clamp_log_std()
        assert np.all(head.log_std <= head.log_std_bounds[1])


class TestGae:
    def test_lambda_zero_one_step_td(self, rng):
        T, N = 12, 3
        r = rng.standard_normal((T, N))
        v = rng.standard_normal((T, N))
        nv = rng.standard_normal((T, N))
        falls = np.zeros((T, N))
        dones = np.zeros((T, N))
        adv, ret = compute_gae(r, v, nv, falls, dones, 0.99, 0.0)
        np.testing.assert_allclose(adv, r + 0.99 * nv - v, atol=1e-12)
        np.testing.assert_allclose(ret, adv + v, atol=1e-12)

    def test_gamma_zero_myopic(self, rng):
        T, N = 9, 2
        r = rng.standard_normal((T, N))
        v = rng.standard_normal((T, N))
        nv = rng.standard_normal((T, N))
        adv, _ = compute_gae(r, v, nv, np.zeros((T, N)), np.zeros((T, N)),
                             0.0, 0.95)
        np.testing.assert_allclose(adv, r - v, atol=1e-12)

    def test_fall_zeroes_bootstrap(self, rng):
        r = np.zeros((1, 1))
        v = np.zeros((1, 1))
        nv = np.full((1, 1), 10.0)
        adv_fall, _ = compute_gae(r, v, nv, np.ones((1, 1)), np.ones((1, 1)),
                                  0.99, 0.95)
        adv_timeout, _ = compute_gae(r, v, nv, np.zeros((1, 1)),
                                     np.ones((1, 1)), 0.99, 0.95)
        assert adv_fall[0, 0] == 0.0
        assert adv_timeout[0, 0] == pytest.approx(9.9, abs=1e-12)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(100):
            T = int(rng.integers(2, 24))
            N = int(rng.integers(1, 5))
            r = rng.standard_normal((T, N))
            v = rng.standard_normal((T, N))
            nv = rng.standard_normal((T, N))
            falls = (rng.random((T, N)) < 0.15).astype(float)
            dones = np.maximum(falls, (rng.random((T, N)) < 0.1)).astype(float)
            gamma = float(rng.uniform(0.8, 1.0))
            lam = float(rng.uniform(0.0, 1.0))
            adv, ret = compute_gae(r, v, nv, falls, dones, gamma, lam)
            oracle = brute_force_gae(r, v, nv, falls, dones, gamma, lam)
            np.testing.assert_allclose(adv, oracle, atol=1e-10)
            np.testing.assert_allclose(ret, adv + v, atol=1e-12)


class TestPpoUpdate:
    def _batch_from_head(self, head, n, rng, adv=None):
        obs = rng.standard_normal((n, head.obs_scale.shape[0]))
        actions, logps = sample_actions(head, obs, rng)
        return {
            "obs": obs, "actions": actions, "log_probs": logps,
            "advantages": rng.standard_normal(n) if adv is None else adv,
            "returns": rng.standard_normal(n),
            "values": rng.standard_normal(n),
        }

    def test_identity_policy_ratio_one(self, rng):
        head = tiny_head()
        value = netcore.orthogonal_init((4, 8, 1), ("tanh", "identity"), rng)
        opt = PolicyOptimizer.for_nets(head, value)
        batch = self._batch_from_head(head, 64, rng)
        cfg = PpoConfig(epochs=1, minibatch_size=64, policy_lr=0.0,
                        value_lr=0.0, entropy_coef=0.0)
        report = ppo_update(head, value, opt, batch, cfg, rng)
        # unchanged parameters: every ratio is exactly 1
        assert report.clip_fraction == 0.0
        assert abs(report.approx_kl) < 1e-9
        # surrogate equals the mean normalized advantage (~0 by construction)
        assert abs(report.policy_loss) < 1e-9

    def test_zero_advantages_zero_policy_gradient(self, rng):
        head = tiny_head()
        value = netcore.orthogonal_init((4, 8, 1), ("tanh", "identity"), rng)
        opt = PolicyOptimizer.for_nets(head, value)
        batch = self._batch_from_head(head, 32, rng, adv=np.zeros(32))
        before = [w.copy() for w in head.mean_net.weights]
        log_std_before = head.log_std.copy()
        cfg = PpoConfig(epochs=2, minibatch_size=16, policy_lr=1e-3,
                        entropy_coef=0.0)
        ppo_update(head, value, opt, batch, cfg, rng)
        for w0, w1 in zip(before, head.mean_net.weights):
            np.testing.assert_array_equal(w0, w1)
        np.testing.assert_array_equal(log_std_before, head.log_std)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_loss_aborts(self, rng):
        head = tiny_head()
        value = netcore.orthogonal_init((4, 8, 1), ("tanh", "identity"), rng)
        opt = PolicyOptimizer.for_nets(head, value)
        batch = self._batch_from_head(head, 16, rng)
        batch["advantages"] = np.full(16, np.inf)
        with pytest.raises(NumericalError):
            ppo_update(head, value, opt, batch, PpoConfig(), rng)

    def test_point_mass_velocity_tracking(self):
        # run-and-check harness: 1-D point mass, command reward with weight 1
        # and sharpness 4; the analytic maximum per step is 1.0
        rng = np.random.default_rng(0)
        obs_dim, act_dim = 2, 1
        net = netcore.orthogonal_init((obs_dim, 32, 32, act_dim),
                                      ("tanh", "tanh", "identity"), rng,
                                      output_gain=0.01)
        head = PolicyHead(mean_net=net, log_std=np.full(1, -1.0),
                          obs_scale=np.ones(obs_dim))
        value = netcore.orthogonal_init((obs_dim, 32, 32, 1),
                                        ("tanh", "tanh", "identity"), rng)
        opt = PolicyOptimizer.for_nets(head, value)
        cfg = PpoConfig(epochs=4, minibatch_size=256, policy_lr=1e-3,
                        value_lr=1e-3, entropy_coef=0.0)
        n_envs, horizon = 16, 40
        vel = np.zeros(n_envs)
        target = rng.uniform(0.0, 1.0, n_envs)
        last_mean = 0.0
        for it in range(300):
            obs_buf = np.zeros((horizon, n_envs, 2))
            act_buf = np.zeros((horizon, n_envs, 1))
            logp_buf = np.zeros((horizon, n_envs))
            rew_buf = np.zeros((horizon, n_envs))
            next_obs = np.zeros((horizon, n_envs, 2))
            for t in range(horizon):
                obs = np.stack([vel, target], axis=1)
                actions, logps = sample_actions(head, obs, rng)
                vel = vel + 0.1 * np.clip(actions[:, 0], -1.0, 1.0)
                rew = np.exp(-4.0 * np.abs(target - vel))
                obs_buf[t] = obs
                act_buf[t] = actions
                logp_buf[t] = logps
                rew_buf[t] = rew
                next_obs[t] = np.stack([vel, target], axis=1)
            values = netcore.forward(value, obs_buf.reshape(-1, 2))[:, 0]
            nvalues = netcore.forward(value, next_obs.reshape(-1, 2))[:, 0]
            dones = np.zeros((horizon, n_envs))
            dones[-1] = 1.0  # horizon cut with bootstrap
            adv, ret = compute_gae(rew_buf, values.reshape(horizon, n_envs),
                                   nvalues.reshape(horizon, n_envs),
                                   np.zeros((horizon, n_envs)), dones,
                                   0.99, 0.95)
            ppo_update(head, value, opt, {
                "obs": obs_buf.reshape(-1, 2),
                "actions": act_buf.reshape(-1, 1),
                "log_probs": logp_buf.reshape(-1),
                "advantages": adv.reshape(-1),
                "returns": ret.reshape(-1),
                "values": values,
            }, cfg, rng)
            # steady-state tracking quality: the first half of each episode is
            # the ramp from rest, which no policy can avoid at 0.1 / step
            last_mean = float(rew_buf[horizon // 2:].mean())
            # fresh episodes
            vel = np.zeros(n_envs)
            target = rng.uniform(0.0, 1.0, n_envs)
        assert last_mean >= 0.9  # analytic per-step maximum is 1.0


class TestRelabelPlumbing:
    def test_totals_equal_reward_reports(self, rng):
        T, N = 7, 3
        terms = {name: rng.uniform(-1, 1, (T, N)) for name in TERM_NAMES
                 if name != "imitation"}
        imit = rng.uniform(0, 1, (T, N))
        w = RewardWeights()
        totals, full = relabel_rewards(terms, imit, w)
        for t in range(T):
            for n in range(N):
                report = total_reward({k: float(v[t, n])
                                       for k, v in full.items()}, w)
                assert totals[t, n] == pytest.approx(report.total, abs=1e-12)


class TestTrainerOutputs:
    @pytest.fixture()
    def tiny_cfg(self):
        cfg = default_config()
        return replace(cfg, iterations=2, n_envs=3, horizon=8,
                       checkpoint_every=0, seed=11)

    def test_zero_iterations_initial_checkpoint_only(self, tiny_cfg, tmp_path):
        cfg = replace(tiny_cfg, iterations=0)
        trainer = Trainer(cfg, str(tmp_path / "run0"))
        metrics = trainer.train()
        assert (tmp_path / "run0" / "checkpoint_000000.zip").exists()
        with open(metrics) as fh:
            rows = list(csv.DictReader(fh))
        assert rows == []
        assert len(list((tmp_path / "run0").glob("checkpoint_*.zip"))) == 1

    def test_metrics_rows_and_columns(self, tiny_cfg, tmp_path):
        trainer = Trainer(tiny_cfg, str(tmp_path / "run"))
        metrics = trainer.train()
        with open(metrics) as fh:
            reader = csv.DictReader(fh)
            assert tuple(reader.fieldnames) == METRIC_COLUMNS
            rows = list(reader)
        assert len(rows) == tiny_cfg.iterations
        assert [int(r["iteration"]) for r in rows] == [1, 2]

    def test_ratio_identity_after_rollout(self, tiny_cfg, tmp_path, rng):
        # importance ratios are exactly 1 before any parameter update
        from amble.sim.env import run_parallel
        trainer = Trainer(tiny_cfg, str(tmp_path / "ratio"))
        batch = run_parallel(trainer.runner, trainer._act_fn, 8)
        obs = batch["obs"].reshape(-1, 30)
        actions = batch["actions"].reshape(-1, 6)
        logps = batch["log_probs"].reshape(-1)
        mean = trainer.head.mean(obs)
        std = trainer.head.std()
        z = (actions - mean) / std
        recomputed = (-0.5 * np.sum(z * z, axis=1)
                      - np.sum(trainer.head.log_std)
                      - 0.5 * 6 * math.log(2 * math.pi))
        ratios = np.exp(recomputed - logps)
        np.testing.assert_allclose(ratios, 1.0, atol=1e-9)

    def test_reward_log_streams_rows(self, tiny_cfg, tmp_path):
        cfg = replace(tiny_cfg, log_rewards_env=0)
        trainer = Trainer(cfg, str(tmp_path / "rl"))
        trainer.train()
        with open(tmp_path / "rl" / "rewards.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "step", "env", *TERM_NAMES, "total"]
        assert len(rows) - 1 == cfg.iterations * cfg.horizon
        # total column equals the weighted sum of the term columns
        w = cfg.rewards
        for row in rows[1:3]:
            terms = {name: float(v) for name, v in zip(TERM_NAMES, row[3:-1])}
            assert float(row[-1]) == pytest.approx(
                total_reward(terms, w).total, abs=1e-9)


class TestCheckpoints:
    def test_round_trip(self, tmp_path, rng):
        cfg = default_config()
        model = build_default_model()
        head = build_policy(model, cfg.ppo, rng)
        value = build_value(model, cfg.ppo, rng)
        from amble.amp import build_discriminator
        disc = build_discriminator(32, cfg.amp, rng)
        disc.normalizer.update(rng.standard_normal((64, 32)))
        path = tmp_path / "ckpt.zip"
        save_checkpoint(path, 7, head, value, disc, cfg)
        head2, value2, disc2, meta = load_checkpoint(path)
        assert meta["iteration"] == 7
        x = rng.standard_normal((5, 30))
        np.testing.assert_array_equal(head.mean(x), head2.mean(x))
        np.testing.assert_array_equal(head.log_std, head2.log_std)
        pair = rng.standard_normal((3, 32))
        np.testing.assert_array_equal(disc.scores(pair), disc2.scores(pair))
