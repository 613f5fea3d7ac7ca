"""Policy optimization: Gaussian policy head, GAE, clipped surrogate, trainer.

The training loop alternates, per iteration:

  (a) parallel rollouts under a frozen policy snapshot,
  (b) discriminator updates on fresh policy transitions vs. demonstrations,
  (c) imitation-reward relabeling of the rollout with the updated
      discriminator,
  (d) the PPO update on the relabeled batch.

All randomness flows from one seed through named SeedSequence spawns, so two
runs with identical config and seed produce byte-identical metrics logs.
"""

from __future__ import annotations

import csv
import json
import math
import os
import zipfile
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import amp, mocap, netcore
from . import model as mdl
from . import rewards as rwd
from .config import PpoConfig, TrainConfig, config_to_dict
from .errors import AmbleError, NumericalError
from .sim.env import Episode, VecRunner, run_parallel

CHECKPOINT_VERSION = 1

METRIC_COLUMNS = (
    "iteration", "total_steps", "episodes_completed",
    "mean_episode_return", "mean_episode_length", "mean_step_reward",
    *(f"r_{name}" for name in rwd.TERM_NAMES),
    "amp_expert_loss", "amp_policy_loss", "amp_grad_penalty",
    "amp_demo_score", "amp_policy_score",
    "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction",
)


# ---------------------------------------------------------------------------
# policy head
# ---------------------------------------------------------------------------

def observation_scale(model: mdl.RobotModel) -> np.ndarray:
    """Fixed per-channel input scaling applied before the networks."""
    scale = np.ones(mdl.observation_dim(model))
    slices = mdl.observation_slices(model)
    scale[slices["root_ang_vel"]] = 0.5
    scale[slices["joint_vel"]] = 0.1
    return scale


@dataclass
class PolicyHead:
    """State-independent-std Gaussian policy over joint-target offsets."""

    mean_net: netcore.DenseNet
    log_std: np.ndarray
    obs_scale: np.ndarray
    log_std_bounds: tuple[float, float] = (-4.0, 1.0)

    def __post_init__(self):
        self.clamp_log_std()

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, *self.log_std_bounds, out=self.log_std)

    @property
    def action_dim(self) -> int:
        return self.mean_net.out_dim

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return netcore.forward(self.mean_net, np.asarray(obs) * self.obs_scale)

    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def build_policy(model: mdl.RobotModel, cfg: PpoConfig,
                 rng: np.random.Generator) -> PolicyHead:
    dims = (mdl.observation_dim(model), *cfg.hidden, model.joint_count)
    acts = ("tanh",) * len(cfg.hidden) + ("identity",)
    net = netcore.orthogonal_init(dims, acts, rng, output_gain=0.01)
    log_std = np.full(model.joint_count, cfg.init_log_std)
    return PolicyHead(mean_net=net, log_std=log_std,
                      obs_scale=observation_scale(model),
                      log_std_bounds=cfg.log_std_bounds)


def build_value(model: mdl.RobotModel, cfg: PpoConfig,
                rng: np.random.Generator) -> netcore.DenseNet:
    dims = (mdl.observation_dim(model), *cfg.hidden, 1)
    acts = ("tanh",) * len(cfg.hidden) + ("identity",)
    return netcore.orthogonal_init(dims, acts, rng, output_gain=1.0)


def _log_prob_of(mean: np.ndarray, log_std: np.ndarray,
                 action: np.ndarray) -> np.ndarray:
    std = np.exp(log_std)
    z = (action - mean) / std
    return (-0.5 * np.sum(z * z, axis=-1) - np.sum(log_std)
            - 0.5 * mean.shape[-1] * math.log(2.0 * math.pi))


def sample_action(head: PolicyHead, obs, rng: np.random.Generator,
                  deterministic: bool = False):
    """Diagonal-Gaussian action and its exact log-density.  Pass an
    observation vector or a PolicyObservation."""
    vec = obs.vec if isinstance(obs, mdl.PolicyObservation) else np.asarray(obs)
    mean = head.mean(vec)
    if deterministic:
        return mean, float(_log_prob_of(mean, head.log_std, mean))
    action = mean + head.std() * rng.standard_normal(head.action_dim)
    return action, float(_log_prob_of(mean, head.log_std, action))


def sample_actions(head: PolicyHead, obs_mat: np.ndarray,
                   rng: np.random.Generator):
    mean = head.mean(obs_mat)
    noise = rng.standard_normal(mean.shape)
    actions = mean + head.std() * noise
    return actions, _log_prob_of(mean, head.log_std, actions)


def log_prob(head: PolicyHead, obs, action: np.ndarray) -> float:
    vec = obs.vec if isinstance(obs, mdl.PolicyObservation) else np.asarray(obs)
    return float(_log_prob_of(head.mean(vec), head.log_std, np.asarray(action)))


def entropy(head: PolicyHead) -> float:
    n = head.action_dim
    return float(np.sum(head.log_std) + 0.5 * n * (1.0 + math.log(2.0 * math.pi)))


# ---------------------------------------------------------------------------
# generalized advantage estimation
# ---------------------------------------------------------------------------

def relabel_rewards(terms: dict, imitation: np.ndarray,
                    weights: rwd.RewardWeights):
    """Combine task terms with the imitation reward into per-step totals.

    Returns (totals, full_terms) where totals[t, n] equals the weighted
    RewardReport total that rewards.total_reward would produce for the same
    per-step terms -- the quantity fed to GAE is exactly the report total.
    """
    full = dict(terms)
    full["imitation"] = np.asarray(imitation, dtype=np.float64)
    w = {name: weights.term_weight(name) for name in rwd.TERM_NAMES}
    totals = sum(w[name] * full[name] for name in rwd.TERM_NAMES)
    return totals, full


def compute_gae(rewards: np.ndarray, values: np.ndarray,
                next_values: np.ndarray, falls: np.ndarray,
                dones: np.ndarray, gamma: float, lam: float):
    """Reverse-scan GAE over (T, N) arrays.

    ``next_values`` holds V of the state each step produced (the terminal
    state's value on episode end); it is zeroed on falls, kept on timeouts
    (time-limit bootstrapping).  ``dones`` cuts the recursion at every episode
    boundary.  Returns raw (unnormalized) advantages and the return targets
    ``advantages + values``; the PPO update normalizes per batch.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    T = rewards.shape[0]
    not_fall = 1.0 - np.asarray(falls, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    deltas = rewards + gamma * next_values * not_fall - values
    advantages = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0])
    for t in range(T - 1, -1, -1):
        running = deltas[t] + gamma * lam * not_done[t] * running
        advantages[t] = running
    return advantages, advantages + values


# ---------------------------------------------------------------------------
# the clipped-surrogate update
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PpoLossReport:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


@dataclass
class PolicyOptimizer:
    mean_adam: netcore.AdamState
    log_std_adam: netcore.VectorAdam
    value_adam: netcore.AdamState

    @classmethod
    def for_nets(cls, head: PolicyHead, value_net: netcore.DenseNet):
        return cls(netcore.adam_init(head.mean_net),
                   netcore.VectorAdam.like(head.log_std),
                   netcore.adam_init(value_net))


def ppo_update(head: PolicyHead, value_net: netcore.DenseNet,
               opt: PolicyOptimizer, batch: dict, cfg: PpoConfig,
               rng: np.random.Generator) -> PpoLossReport:
    """Epochs x minibatches of the clipped surrogate with a clipped value
    loss and an entropy bonus.  ``batch`` holds flat arrays: obs, actions,
    log_probs, advantages (raw), returns, values.
    """
    obs = np.asarray(batch["obs"], dtype=np.float64)
    actions = np.asarray(batch["actions"], dtype=np.float64)
    logp_old = np.asarray(batch["log_probs"], dtype=np.float64)
    adv_raw = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    values_old = np.asarray(batch["values"], dtype=np.float64)
    n = obs.shape[0]
    if n == 0:
        raise AmbleError("empty PPO batch")
    adv = (adv_raw - adv_raw.mean()) / (adv_raw.std() + 1e-8)
    eps = cfg.clip_ratio

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "kl": 0.0, "clip": 0.0}
    passes = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            B = idx.shape[0]
            o = obs[idx] * head.obs_scale
            a = actions[idx]
            mean, cache = netcore.forward_cached(head.mean_net, o)
            std = head.std()
            z = (a - mean) / std
            logp = (-0.5 * np.sum(z * z, axis=1) - np.sum(head.log_std)
                    - 0.5 * head.action_dim * math.log(2.0 * math.pi))
            ratio = np.exp(logp - logp_old[idx])
            adv_b = adv[idx]
            unclipped = ratio * adv_b
            clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv_b
            surrogate = np.minimum(unclipped, clipped)
            policy_loss = -float(surrogate.mean())
            if not math.isfinite(policy_loss):
                raise NumericalError("non-finite PPO policy loss")
            in_window = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)
            flows = (unclipped <= clipped) | in_window
            g_logp = -(flows * ratio * adv_b) / B
            g_mean = (g_logp[:, None] * z / std)
            tape = netcore.backward(head.mean_net, cache, g_mean)
            g_log_std = (g_logp[:, None] * (z * z - 1.0)).sum(axis=0)
            g_log_std -= cfg.entropy_coef  # entropy bonus, dH/dlog_std = 1
            netcore.adam_update(head.mean_net, tape, opt.mean_adam, cfg.policy_lr)
            opt.log_std_adam.update(head.log_std, g_log_std, cfg.policy_lr)
            head.clamp_log_std()

            v, vcache = netcore.forward_cached(value_net, o)
            v = v[:, 0]
            v_old = values_old[idx]
            v_clip = v_old + np.clip(v - v_old, -eps, eps)
            err = v - returns[idx]
            err_clip = v_clip - returns[idx]
            use_plain = err * err >= err_clip * err_clip
            value_loss = float(np.mean(np.maximum(err * err, err_clip * err_clip)))
            g_v = np.where(use_plain, 2.0 * err,
                           2.0 * err_clip * (np.abs(v - v_old) < eps))
            g_v = cfg.value_loss_coef * g_v / B
            vtape = netcore.backward(value_net, vcache, g_v[:, None])
            netcore.adam_update(value_net, vtape, opt.value_adam, cfg.value_lr)

            stats["policy_loss"] += policy_loss
            stats["value_loss"] += value_loss
            stats["kl"] += float(np.mean(logp_old[idx] - logp))
            stats["clip"] += float(np.mean(np.abs(ratio - 1.0) > eps))
            passes += 1
    return PpoLossReport(
        policy_loss=stats["policy_loss"] / passes,
        value_loss=stats["value_loss"] / passes,
        entropy=entropy(head),
        approx_kl=stats["kl"] / passes,
        clip_fraction=stats["clip"] / passes,
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, iteration: int, head: PolicyHead,
                    value_net: netcore.DenseNet, disc: amp.Discriminator,
                    config: TrainConfig) -> None:
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "iteration": iteration,
        "log_std": head.log_std.tolist(),
        "log_std_bounds": list(head.log_std_bounds),
        "obs_scale": head.obs_scale.tolist(),
        "normalizer": disc.normalizer.state_dict() if disc.normalizer else None,
        "config": config_to_dict(config),
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=2))
        zf.writestr("policy_mean.net", netcore.net_to_bytes(head.mean_net))
        zf.writestr("value.net", netcore.net_to_bytes(value_net))
        zf.writestr("discriminator.net", netcore.net_to_bytes(disc.net))


def load_checkpoint(path):
    """Returns (head, value_net, discriminator, meta) from a checkpoint file."""
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise AmbleError(f"unsupported checkpoint version in {path}")
        mean_net = netcore.net_from_bytes(zf.read("policy_mean.net"))
        value_net = netcore.net_from_bytes(zf.read("value.net"))
        disc_net = netcore.net_from_bytes(zf.read("discriminator.net"))
    head = PolicyHead(mean_net=mean_net,
                      log_std=np.asarray(meta["log_std"], dtype=np.float64),
                      obs_scale=np.asarray(meta["obs_scale"], dtype=np.float64),
                      log_std_bounds=tuple(meta["log_std_bounds"]))
    norm = (amp.RunningNormalizer.from_state(meta["normalizer"])
            if meta.get("normalizer") else None)
    disc = amp.Discriminator(net=disc_net, normalizer=norm)
    return head, value_net, disc, meta


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

def build_robot_model(cfg: TrainConfig) -> mdl.RobotModel:
    if cfg.model_file:
        return mdl.load_model(cfg.model_file)
    return mdl.build_default_model()


def build_clip_library(cfg: TrainConfig, model: mdl.RobotModel) -> mocap.ClipLibrary:
    rate = 1.0 / cfg.sim.control_dt
    if cfg.clips.source == "synthetic":
        return mocap.default_library(model, rate=rate,
                                     swing_ratio=cfg.clock.swing_ratio)
    clips = [mocap.load_clip(p) for p in cfg.clips.files]
    weights = cfg.clips.weights or None
    return mocap.library_from_clips(clips, weights).resampled(rate)


class Trainer:
    """Owns the whole training state and the metrics/checkpoint outputs."""

    def __init__(self, cfg: TrainConfig, out_dir: str,
                 force_python_backend: bool = False):
        self.cfg = cfg
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.model = build_robot_model(cfg)
        self.library = build_clip_library(cfg, self.model)
        root = np.random.SeedSequence(cfg.seed)
        nets_ss, self._sample_ss, amp_ss = root.spawn(3)
        nets_rng = np.random.default_rng(nets_ss)
        self.rng = np.random.default_rng(self._sample_ss)
        self.amp_rng = np.random.default_rng(amp_ss)

        self.head = build_policy(self.model, cfg.ppo, nets_rng)
        self.value_net = build_value(self.model, cfg.ppo, nets_rng)
        self.opt = PolicyOptimizer.for_nets(self.head, self.value_net)
        pair_dim = 2 * mdl.disc_observation_dim(self.model)
        self.disc = amp.build_discriminator(pair_dim, cfg.amp, nets_rng)
        self.disc_adam = netcore.adam_init(self.disc.net)

        demo = mocap.all_transitions(self.library, self.model)
        self.demo_buffer = amp.TransitionBuffer(pair_dim, cfg.amp.demo_buffer_capacity)
        self.demo_buffer.append(demo)
        self.policy_buffer = amp.TransitionBuffer(pair_dim, cfg.amp.policy_buffer_capacity)
        if self.disc.normalizer is not None:
            self.disc.normalizer.update(demo)

        noise = mdl.default_noise_scale(self.model, cfg.obs_lin_vel_noise)
        clock = cfg.clock.template()

        def make_env(i: int) -> Episode:
            return Episode(self.model, cfg.sim, clock, cfg.rewards,
                           cfg.randomization, cfg.commands, seed=cfg.seed,
                           env_id=i, noise_scale=noise,
                           force_python_backend=force_python_backend)

        self.runner = VecRunner(cfg.n_envs, make_env)
        self.total_steps = 0
        self.episodes_completed = 0
        self._ep_return = np.zeros(cfg.n_envs)
        self._ep_length = np.zeros(cfg.n_envs, dtype=np.int64)
        self._recent_returns: deque = deque(maxlen=100)
        self._recent_lengths: deque = deque(maxlen=100)
        self._reward_log = None

    # -- policy callback ------------------------------------------------------

    def _act_fn(self, obs_mat: np.ndarray):
        return sample_actions(self.head, obs_mat, self.rng)

    # -- one iteration ---------------------------------------------------------

    def run_iteration(self, iteration: int) -> dict:
        cfg = self.cfg
        batch = run_parallel(self.runner, self._act_fn, cfg.horizon)
        T, N = batch["dones"].shape
        self.total_steps += T * N

        # (b) discriminator updates on fresh policy transitions
        pairs_flat = batch["pairs"].reshape(T * N, -1)
        self.policy_buffer.replace(pairs_flat)
        if self.disc.normalizer is not None:
            self.disc.normalizer.update(pairs_flat)
        amp_report = amp.AmpLossReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        for _ in range(cfg.amp.updates_per_iteration):
            demo_b = self.demo_buffer.sample(cfg.amp.batch_size, self.amp_rng)
            pol_b = self.policy_buffer.sample(cfg.amp.batch_size, self.amp_rng)
            amp_report = amp.amp_update(self.disc, demo_b, pol_b, cfg.amp,
                                        self.disc_adam)

        # (c) relabel the rollout with the imitation reward
        r_imit = amp.imitation_rewards(self.disc, pairs_flat).reshape(T, N)
        rewards_total, terms = relabel_rewards(batch["terms"], r_imit,
                                               cfg.rewards)

        # (d) PPO on the relabeled batch
        obs_flat = batch["obs"].reshape(T * N, -1)
        next_obs_flat = batch["next_obs"].reshape(T * N, -1)
        values = netcore.forward(self.value_net,
                                 obs_flat * self.head.obs_scale)[:, 0].reshape(T, N)
        next_values = netcore.forward(self.value_net,
                                      next_obs_flat * self.head.obs_scale)[:, 0].reshape(T, N)
        advantages, returns = compute_gae(rewards_total, values, next_values,
                                          batch["falls"], batch["dones"],
                                          cfg.ppo.gamma, cfg.ppo.gae_lambda)
        ppo_report = ppo_update(self.head, self.value_net, self.opt, {
            "obs": obs_flat,
            "actions": batch["actions"].reshape(T * N, -1),
            "log_probs": batch["log_probs"].reshape(T * N),
            "advantages": advantages.reshape(T * N),
            "returns": returns.reshape(T * N),
            "values": values.reshape(T * N),
        }, cfg.ppo, self.rng)

        self._track_episodes(rewards_total, batch["dones"])
        self._log_reward_rows(iteration, terms, rewards_total)
        row = self._metrics_row(iteration, terms, rewards_total, amp_report,
                                ppo_report)
        return row

    def _track_episodes(self, rewards_total: np.ndarray, dones: np.ndarray) -> None:
        T, N = dones.shape
        for t in range(T):
            self._ep_return += rewards_total[t]
            self._ep_length += 1
            for i in np.nonzero(dones[t])[0]:
                self._recent_returns.append(float(self._ep_return[i]))
                self._recent_lengths.append(int(self._ep_length[i]))
                self._ep_return[i] = 0.0
                self._ep_length[i] = 0
                self.episodes_completed += 1

    def _metrics_row(self, iteration, terms, rewards_total, amp_report,
                     ppo_report) -> dict:
        if self._recent_returns:
            mean_ret = float(np.mean(self._recent_returns))
            mean_len = float(np.mean(self._recent_lengths))
        else:  # no completed episode yet: report the running partial episodes
            mean_ret = float(self._ep_return.mean())
            mean_len = float(self._ep_length.mean())
        row = {
            "iteration": iteration,
            "total_steps": self.total_steps,
            "episodes_completed": self.episodes_completed,
            "mean_episode_return": mean_ret,
            "mean_episode_length": mean_len,
            "mean_step_reward": float(np.mean(rewards_total)),
        }
        for name in rwd.TERM_NAMES:
            row[f"r_{name}"] = float(np.mean(terms[name]))
        row.update({
            "amp_expert_loss": amp_report.expert,
            "amp_policy_loss": amp_report.policy,
            "amp_grad_penalty": amp_report.grad_penalty,
            "amp_demo_score": amp_report.demo_score_mean,
            "amp_policy_score": amp_report.policy_score_mean,
            "policy_loss": ppo_report.policy_loss,
            "value_loss": ppo_report.value_loss,
            "entropy": ppo_report.entropy,
            "approx_kl": ppo_report.approx_kl,
            "clip_fraction": ppo_report.clip_fraction,
        })
        return row

    def _log_reward_rows(self, iteration, terms, rewards_total) -> None:
        env = self.cfg.log_rewards_env
        if env < 0:
            return
        if self._reward_log is None:
            path = os.path.join(self.out_dir, "rewards.csv")
            self._reward_log = open(path, "w", newline="")
            writer = csv.writer(self._reward_log)
            writer.writerow(["iteration", "step", "env", *rwd.TERM_NAMES, "total"])
        writer = csv.writer(self._reward_log)
        T = rewards_total.shape[0]
        for t in range(T):
            writer.writerow([iteration, t, env,
                             *(repr(float(terms[name][t, env]))
                               for name in rwd.TERM_NAMES),
                             repr(float(rewards_total[t, env]))])

    # -- the outer loop --------------------------------------------------------

    def checkpoint_path(self, iteration: int) -> str:
        return os.path.join(self.out_dir, f"checkpoint_{iteration:06d}.zip")

    def save(self, iteration: int) -> str:
        path = self.checkpoint_path(iteration)
        save_checkpoint(path, iteration, self.head, self.value_net, self.disc,
                        self.cfg)
        return path

    def train(self, progress=None) -> str:
        """Full run: initial checkpoint, iterations, metrics, final checkpoint.
        Returns the metrics file path."""
        cfg = self.cfg
        metrics_path = os.path.join(self.out_dir, "metrics.csv")
        self.save(0)
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
            writer.writeheader()
            for it in range(1, cfg.iterations + 1):
                row = self.run_iteration(it)
                writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                                 for k, v in row.items()})
                fh.flush()
                if progress is not None:
                    progress(row)
                if cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
                    self.save(it)
        if cfg.iterations > 0:
            self.save(cfg.iterations)
        if self._reward_log is not None:
            self._reward_log.close()
            self._reward_log = None
        return metrics_path


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(head: PolicyHead, disc: amp.Discriminator, cfg: TrainConfig,
             steps: int, n_envs: int = 8, seed: int | None = None,
             integrator: str | None = None, trajectory_path: str | None = None,
             randomize_plant: bool = False,
             force_python_backend: bool = False) -> dict:
    """Deterministic policy rollout; reports per-step reward-term means.

    Observation noise and scheduled pushes are disabled, and by default the
    nominal (un-randomized) plant is used, so the numbers measure tracking
    rather than disturbance luck and two evaluations of the same checkpoint
    produce identical trajectories.
    """
    from .sim.randomize import degenerate_ranges

    model = build_robot_model(cfg)
    sim_cfg = cfg.sim if integrator is None else replace(cfg.sim,
                                                         integrator=integrator)
    sim_cfg = replace(sim_cfg, push_enabled=False)
    ranges = cfg.randomization if randomize_plant else degenerate_ranges()
    clock = cfg.clock.template()
    seed = cfg.seed if seed is None else seed

    def make_env(i: int) -> Episode:
        return Episode(model, sim_cfg, clock, cfg.rewards, ranges,
                       cfg.commands, seed=seed + 1_000_003, env_id=i,
                       noise_scale=None,
                       force_python_backend=force_python_backend)

    runner = VecRunner(n_envs, make_env)
    term_sums = {name: 0.0 for name in rwd.TERM_NAMES}
    total_sum = 0.0
    lengths = []
    traj_rows = []
    prev_disc = list(runner.disc_obs)
    for t in range(steps):
        obs_mat = runner.obs_matrix()
        actions = head.mean(obs_mat)
        for i, env in enumerate(runner.envs):
            state, obs, report, done, info = env.step(actions[i])
            pair = np.concatenate([prev_disc[i], info["disc_obs"]])
            r_imit = amp.imitation_reward(disc, pair)
            for name in rwd.TERM_NAMES:
                term_sums[name] += report.terms[name]
            term_sums["imitation"] += r_imit
            total_sum += report.total + cfg.rewards.w_imitation * r_imit
            if trajectory_path is not None:
                traj_rows.append([t, i, *state.root_pos, state.root_pitch,
                                  *state.joint_pos])
            if done:
                lengths.append(env.step_count)
                runner.obs[i] = env.reset()
                prev_disc[i] = env.disc_observation()
            else:
                runner.obs[i] = obs
                prev_disc[i] = info["disc_obs"]
    n = steps * n_envs
    result = {
        "steps": steps, "n_envs": n_envs,
        "mean_total_reward": total_sum / n,
        "mean_episode_length": (float(np.mean(lengths)) if lengths
                                else float(steps)),
        "episodes_completed": len(lengths),
    }
    for name in rwd.TERM_NAMES:
        result[f"r_{name}"] = term_sums[name] / n
    if trajectory_path is not None:
        with open(trajectory_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "env", "root_x", "root_z", "pitch",
                             *(j.name for j in model.joints)])
            for row in traj_rows:
                writer.writerow([row[0], row[1],
                                 *(repr(float(v)) for v in row[2:])])
    return result
