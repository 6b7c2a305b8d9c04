"""Semi-decentralized MADDPG.

Robots hold an actor, a target actor and a local replay buffer; the base
station (BS) holds the critic, the target critic and the joint replay buffer.
Per training round:

1. the BS draws ``K`` transition ids from its joint buffer and broadcasts them;
2. each robot looks the ids up in its own buffer and uploads its target-actor
   actions on ``o'`` and its current actor actions on ``o``;
3. the BS takes one critic step and sends every robot dQ/da_m;
4. robots update their actors along that gradient and soft-update targets.

Robot <-> BS traffic goes through explicit FIFO queues of message objects so
the roles could be moved to separate processes without changing semantics.
"""

from __future__ import annotations

import csv
import logging
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import neural as nn
from .env import EnvConfig, RobotAction, RobotTeamEnv
from .replay import ReplayBuffer
from .seeding import derive_rng, derive_seed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    gamma: float = 0.97
    soft_update: float = 0.001
    batch_size: int = 64
    buffer_capacity: int = 100_000
    episodes: int = 150
    slots_per_episode: int = 100
    actor_lr: float = 0.01
    critic_lr: float = 0.01
    optimizer: str = "adam"
    eps_start: float = 0.1
    eps_end: float = 0.01
    eps_decay_frac: float = 0.8
    temperature: float = 1.0
    temperature_decay: float = 1.0          # per-episode multiplicative annealing
    temperature_min: float = 0.1
    upload_every: int = 1
    train_every: int = 1
    reward_scale: float = 1.0
    reward_transform: str = "symlog"        # applied to stored rewards only; "none" keeps them raw
    logit_reg: float = 1e-3
    critic_grad_clip: Optional[float] = 10.0
    actor_hidden: tuple = (128, 256)
    critic_hidden: tuple = (256, 128, 64)

    def validate(self) -> None:
        errors = []
        if not 0 <= self.gamma < 1:
            errors.append("gamma: must be in [0, 1)")
        if not 0 < self.soft_update <= 1:
            errors.append("soft_update: must be in (0, 1]")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            errors.append("batch_size: must be in [1, buffer_capacity]")
        if self.episodes < 1 or self.slots_per_episode < 1:
            errors.append("episodes/slots_per_episode: must be >= 1")
        if self.upload_every < 1 or self.train_every < 1:
            errors.append("upload_every/train_every: must be >= 1")
        if not self.temperature > 0:
            errors.append("temperature: must be > 0")
        if self.reward_transform not in ("none", "symlog"):
            errors.append("reward_transform: must be 'none' or 'symlog'")
        if self.optimizer not in ("adam", "sgd"):
            errors.append("optimizer: must be 'adam' or 'sgd'")
        if errors:
            raise ValueError("invalid TrainConfig: " + "; ".join(errors))

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        return cls(**{**dict(batch_size=1000, buffer_capacity=1_000_000), **overrides})

    def epsilon(self, episode: int) -> float:
        """Linear decay from ``eps_start`` to ``eps_end`` over the first ``eps_decay_frac`` of episodes."""
        horizon = max(1, int(self.eps_decay_frac * self.episodes))
        frac = min(1.0, episode / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def transform_reward(self, r):
        r = np.asarray(r, dtype=float) * self.reward_scale
        if self.reward_transform == "symlog":
            return np.sign(r) * np.log1p(np.abs(r))
        return r

    def temperature_at(self, episode: int) -> float:
        return max(self.temperature_min, self.temperature * self.temperature_decay**episode)


def action_heads(n_collab: int, n_rbs: int) -> tuple:
    return (n_collab + 1, n_rbs)


def encode_action(action: RobotAction, n_collab: int, n_rbs: int) -> np.ndarray:
    vec = np.zeros(n_collab + 1 + n_rbs)
    vec[n_collab if action.collab is None else action.collab] = 1.0
    vec[n_collab + 1 + action.rb] = 1.0
    return vec


def decode_action(vec: np.ndarray, n_collab: int, n_rbs: int) -> RobotAction:
    c = int(np.argmax(vec[:n_collab + 1]))
    rb = int(np.argmax(vec[n_collab + 1:n_collab + 1 + n_rbs]))
    return RobotAction(None if c == n_collab else c, rb)


def scenario_seed(seed: int) -> int:
    """The deployment a run trains and is evaluated on."""
    return derive_seed(seed, "scenario")


class TrainingDiverged(FloatingPointError):
    pass


# --------------------------------------------------------------------------
# messages


@dataclass
class UploadExperience:
    robot: int
    transitions: list             # [(id, obs, act, reward, next_obs)]


@dataclass
class SampleRequest:
    ids: np.ndarray


@dataclass
class ActionSets:
    robot: int
    ids: np.ndarray
    target_actions: np.ndarray    # A'_m, target actor on o'
    policy_actions: np.ndarray    # a^mu_m, actor on o


@dataclass
class ActionGradients:
    robot: int
    ids: np.ndarray
    grads: np.ndarray             # G_m, dQ/da_m per sample


# --------------------------------------------------------------------------
# robots


class ActorAgent:
    def __init__(self, robot: int, obs_dim: int, n_collab: int, n_rbs: int, cfg: TrainConfig,
                 rng: np.random.Generator):
        self.robot = robot
        self.n_collab, self.n_rbs = n_collab, n_rbs
        self.heads = action_heads(n_collab, n_rbs)
        self.act_dim = sum(self.heads)
        self.spec = nn.DenseNetSpec((obs_dim, *cfg.actor_hidden, self.act_dim), "simplex", self.heads)
        self.params = nn.init_params(self.spec, rng)
        self.target = self.params.copy()
        self.opt = nn.OptimizerState.for_params(self.params, learning_rate=cfg.actor_lr, method=cfg.optimizer)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, dict(
            obs=(obs_dim,), act=(self.act_dim,), reward=(), next_obs=(obs_dim,)))
        self.not_uploaded: list = []
        self.cfg = cfg
        self.rng = rng
        self._pending = None

    def act(self, obs_features: np.ndarray, explore: bool, epsilon: float = 0.0,
            temperature: float = 1.0):
        return select_action(self, obs_features, explore, self.rng, epsilon, temperature)

    def store(self, tid: int, obs, act, reward, next_obs) -> None:
        self.buffer.add(tid, obs=obs, act=act, reward=reward, next_obs=next_obs)
        self.not_uploaded.append(tid)

    def upload(self) -> UploadExperience:
        ids = [i for i in self.not_uploaded if self.buffer.contains([i])[0]]
        batch = self.buffer.get(ids) if ids else None
        items = [] if batch is None else [
            (tid, batch["obs"][k], batch["act"][k], batch["reward"][k], batch["next_obs"][k])
            for k, tid in enumerate(ids)]
        self.not_uploaded = []
        return UploadExperience(self.robot, items)

    def respond(self, request: SampleRequest, temperature: float) -> ActionSets:
        batch = self.buffer.get(request.ids)
        target_probs, _ = nn.forward(self.spec, self.target, batch["next_obs"])
        target_actions = nn.one_hot_heads(target_probs, self.heads)
        _, cache = nn.forward(self.spec, self.params, batch["obs"])
        hard, soft = nn.gumbel_softmax_sample(cache.logits, temperature, self.rng, self.heads, hard=True)
        self._pending = (request.ids, cache, soft, temperature)
        return ActionSets(self.robot, request.ids, target_actions, hard)

    def apply_gradients(self, msg: ActionGradients) -> None:
        actor_update(self, msg)


def select_action(agent: ActorAgent, obs_features: np.ndarray, explore: bool, rng: np.random.Generator,
                  epsilon: float = 0.0, temperature: float = 1.0):
    """Returns ``(RobotAction, one-hot action vector)``.

    Training: epsilon-uniform mixing over a straight-through Gumbel-Softmax
    sample.  Evaluation: argmax of each actor head.
    """
    obs_features = np.asarray(obs_features, dtype=float)
    if obs_features.shape != (agent.spec.layer_widths[0],):
        raise ValueError("observation does not match the actor input")
    if explore and epsilon > 0 and rng.random() < epsilon:
        c = int(rng.integers(0, agent.n_collab + 1))
        rb = int(rng.integers(0, agent.n_rbs))
        action = RobotAction(None if c == agent.n_collab else c, rb)
        return action, encode_action(action, agent.n_collab, agent.n_rbs)
    probs, cache = nn.forward(agent.spec, agent.params, obs_features)
    if explore:
        vec, _ = nn.gumbel_softmax_sample(cache.logits[0], temperature, rng, agent.heads, hard=True)
    else:
        vec = nn.one_hot_heads(probs, agent.heads)
    return decode_action(vec, agent.n_collab, agent.n_rbs), vec


def actor_update(agent: ActorAgent, msg: ActionGradients) -> None:
    """One ascent step along dQ/da_m chained through the Gumbel-Softmax sample, then the target update."""
    ids, cache, soft, temperature = agent._pending
    if not np.array_equal(ids, msg.ids):
        raise ValueError("gradient batch does not match the uploaded action batch")
    k = len(ids)
    grad_sample = -msg.grads / k
    grad_logits = nn.gumbel_softmax_backward(soft, grad_sample, temperature, agent.heads)
    grad_logits += agent.cfg.logit_reg * 2.0 * cache.logits / k
    grads = nn.backward(agent.spec, agent.params, cache, grad_logits, wrt_logits=True)
    nn.optimizer_step(agent.params, grads.params, agent.opt)
    nn.soft_update(agent.target, agent.params, agent.cfg.soft_update)
    agent._pending = None


# --------------------------------------------------------------------------
# base station


class CentralCritic:
    def __init__(self, n_robots: int, obs_dim: int, act_dim: int, cfg: TrainConfig, rng: np.random.Generator):
        self.n_robots, self.obs_dim, self.act_dim = n_robots, obs_dim, act_dim
        joint_obs, joint_act = n_robots * obs_dim, n_robots * act_dim
        self.spec = nn.DenseNetSpec((joint_obs + joint_act, *cfg.critic_hidden, 1), "linear")
        self.params = nn.init_params(self.spec, rng)
        self.target = self.params.copy()
        self.opt = nn.OptimizerState.for_params(self.params, learning_rate=cfg.critic_lr, method=cfg.optimizer,
                                                max_grad_norm=cfg.critic_grad_clip)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, dict(
            obs=(joint_obs,), act=(joint_act,), reward=(), next_obs=(joint_obs,)))
        self.staging: dict = {}
        self.cfg = cfg
        self.rng = rng

    def act_slice(self, m: int) -> slice:
        base = self.n_robots * self.obs_dim
        return slice(base + m * self.act_dim, base + (m + 1) * self.act_dim)

    def receive_upload(self, msg: UploadExperience) -> None:
        for tid, obs, act, reward, next_obs in msg.transitions:
            self.staging.setdefault(tid, {})[msg.robot] = (obs, act, reward, next_obs)
        while self.staging:
            tid = min(self.staging)
            parts = self.staging[tid]
            if len(parts) < self.n_robots:
                break
            ordered = [parts[m] for m in range(self.n_robots)]
            rewards = {p[2] for p in ordered}
            if len(rewards) != 1:
                raise ValueError("robots reported different rewards for one transition")
            if len(self.buffer) and tid != self.buffer.next_id:
                # a gap means earlier ids were evicted locally before upload; restart the joint stream
                self.buffer = ReplayBuffer(self.buffer.capacity, {k: v.shape[1:] for k, v in self.buffer.data.items()})
            self.buffer.add(tid,
                            obs=np.concatenate([p[0] for p in ordered]),
                            act=np.concatenate([p[1] for p in ordered]),
                            reward=ordered[0][2],
                            next_obs=np.concatenate([p[3] for p in ordered]))
            del self.staging[tid]

    def sample_ids(self, k: int, oldest_local: int) -> SampleRequest:
        """Draw up to ``k`` ids present both in B and in every robot's local buffer."""
        ids = self.buffer.retained_ids()
        ids = ids[ids >= oldest_local]
        if len(ids) == 0:
            raise ValueError("no transitions available for training")
        if len(ids) < k:
            log.warning("batch of %d requested but only %d transitions available", k, len(ids))
        chosen = self.rng.choice(ids, size=min(k, len(ids)), replace=False)
        return SampleRequest(np.sort(chosen))

    def joint_input(self, obs: np.ndarray, acts: np.ndarray) -> np.ndarray:
        return np.concatenate([obs, acts], axis=1)


def critic_update(critic: CentralCritic, batch: dict, target_actions: np.ndarray) -> float:
    """One step on the mean squared TD error; returns the loss before the step."""
    cfg = critic.cfg
    q_next, _ = nn.forward(critic.spec, critic.target, critic.joint_input(batch["next_obs"], target_actions))
    y = batch["reward"] + cfg.gamma * q_next[:, 0]
    q, cache = nn.forward(critic.spec, critic.params, critic.joint_input(batch["obs"], batch["act"]))
    diff = q[:, 0] - y
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise TrainingDiverged("critic loss is not finite")
    grad = (2.0 / len(diff)) * diff[:, None]
    grads = nn.backward(critic.spec, critic.params, cache, grad)
    nn.optimizer_step(critic.params, grads.params, critic.opt)
    return loss


def actor_gradients(critic: CentralCritic, batch: dict, policy_actions: list) -> list:
    """dQ/da_m at (o, a_-m from the batch, a_m = a^mu_m) for every robot m."""
    x = critic.joint_input(batch["obs"], batch["act"])
    k = x.shape[0]
    stacked = np.repeat(x[None], critic.n_robots, axis=0)
    for m, a_mu in enumerate(policy_actions):
        stacked[m, :, critic.act_slice(m)] = a_mu
    stacked = stacked.reshape(critic.n_robots * k, -1)
    _, cache = nn.forward(critic.spec, critic.params, stacked)
    g = nn.backward(critic.spec, critic.params, cache, np.ones((stacked.shape[0], 1))).input
    g = g.reshape(critic.n_robots, k, -1)
    return [g[m][:, critic.act_slice(m)] for m in range(critic.n_robots)]


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    agents: list
    critic: Optional[CentralCritic]
    log: list
    env_config: EnvConfig
    train_config: TrainConfig
    seed: int

    def policy(self):
        return LearnedPolicy(self.agents)


class LearnedPolicy:
    """Greedy (argmax) execution of trained actors."""

    name = "proposed"

    def __init__(self, agents):
        self.agents = agents

    def actions(self, env: RobotTeamEnv, observations, rng=None):
        return [select_action(a, obs.features(), False, a.rng)[0] for a, obs in zip(self.agents, observations)]


LOG_FIELDS = ("episode", "episode_reward", "mean_reward", "mean_loiu", "critic_loss", "epsilon", "temperature")


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


class SemiDecentralizedMADDPG:
    def __init__(self, env_config: EnvConfig, cfg: TrainConfig, seed: int):
        env_config.validate()
        cfg.validate()
        self.env_config, self.cfg, self.seed = env_config, cfg, seed
        self.env = RobotTeamEnv(env_config)
        m, c, j = env_config.n_robots, env_config.n_collab, env_config.n_rbs
        obs_dim = 4 * c
        self.agents = [ActorAgent(i, obs_dim, c, j, cfg, derive_rng(seed, "actor", i)) for i in range(m)]
        self.critic = CentralCritic(m, obs_dim, self.agents[0].act_dim, cfg, derive_rng(seed, "critic"))
        self.uplink: deque = deque()
        self.downlink: deque = deque()
        self.next_id = 0
        self.rounds = 0

    # -- per slot --------------------------------------------------------

    def store_and_upload(self, obs, acts, reward, next_obs, upload_due: bool) -> None:
        tid = self.next_id
        self.next_id += 1
        for m, agent in enumerate(self.agents):
            agent.store(tid, obs[m], acts[m], reward[m], next_obs[m])
            if upload_due:
                self.uplink.append(agent.upload())
        while self.uplink:
            self.critic.receive_upload(self.uplink.popleft())

    def training_round(self, temperature: float) -> float:
        oldest_local = max(a.buffer.oldest_id for a in self.agents)
        request = self.critic.sample_ids(self.cfg.batch_size, oldest_local)
        for _ in self.agents:
            self.downlink.append(request)
        for agent in self.agents:
            self.uplink.append(agent.respond(self.downlink.popleft(), temperature))
        sets = [self.uplink.popleft() for _ in self.agents]
        for s in sets:
            if not np.array_equal(s.ids, request.ids):
                raise AssertionError("robot and BS batches refer to different transitions")
        batch = self.critic.buffer.get(request.ids)
        target_actions = np.concatenate([s.target_actions for s in sets], axis=1)
        loss = critic_update(self.critic, batch, target_actions)
        grads = actor_gradients(self.critic, batch, [s.policy_actions for s in sets])
        nn.soft_update(self.critic.target, self.critic.params, self.cfg.soft_update)
        for m, agent in enumerate(self.agents):
            self.downlink.append(ActionGradients(m, request.ids, grads[m]))
        for agent in self.agents:
            agent.apply_gradients(self.downlink.popleft())
        self.rounds += 1
        return loss

    # -- full loop -------------------------------------------------------

    def train(self, log_path=None, checkpoint_dir=None, progress=None) -> TrainResult:
        cfg, env = self.cfg, self.env
        rows = []
        slot_counter = 0
        for ep in range(cfg.episodes):
            eps, temp = cfg.epsilon(ep), cfg.temperature_at(ep)
            _, observations = env.reset(derive_seed(self.seed, "train-episode", ep), scenario_seed(self.seed))
            obs = [o.features() for o in observations]
            ep_rewards, ep_loiu, losses = [], [], []
            for _ in range(cfg.slots_per_episode):
                chosen = [a.act(o, True, eps, temp) for a, o in zip(self.agents, obs)]
                outcome = env.step([c[0] for c in chosen])
                next_obs = [o.features() for o in outcome.observations]
                slot_counter += 1
                self.store_and_upload(obs, [c[1] for c in chosen], cfg.transform_reward(outcome.rewards), next_obs,
                                      slot_counter % cfg.upload_every == 0)
                obs = next_obs
                ep_rewards.append(outcome.global_reward)
                ep_loiu.append(float(np.mean(outcome.info["loiu"])))
                if len(self.critic.buffer) >= cfg.batch_size and slot_counter % cfg.train_every == 0:
                    try:
                        losses.append(self.training_round(temp))
                    except (TrainingDiverged, nn.NonFiniteGradient) as exc:
                        self._dump(checkpoint_dir)
                        raise TrainingDiverged(f"episode {ep}: {exc}") from exc
            row = dict(episode=ep, episode_reward=float(np.sum(ep_rewards)), mean_reward=float(np.mean(ep_rewards)),
                       mean_loiu=float(np.mean(ep_loiu)), critic_loss=float(np.mean(losses)) if losses else float("nan"),
                       epsilon=float(eps), temperature=float(temp))
            rows.append(row)
            if progress:
                progress(row)
        if log_path:
            write_log(log_path, rows)
        if checkpoint_dir:
            self._dump(checkpoint_dir)
        return TrainResult(self.agents, self.critic, rows, self.env_config, cfg, self.seed)

    def _dump(self, directory) -> None:
        if not directory:
            return
        os.makedirs(directory, exist_ok=True)
        for a in self.agents:
            nn.save_params(os.path.join(directory, f"actor_{a.robot}.npz"), a.spec, a.params, robot=a.robot)
        nn.save_params(os.path.join(directory, "critic.npz"), self.critic.spec, self.critic.params)


def train(env_config: EnvConfig, cfg: TrainConfig, seed: int = 0, **kwargs) -> TrainResult:
    return SemiDecentralizedMADDPG(env_config, cfg, seed).train(**kwargs)


# --------------------------------------------------------------------------
# communication overhead


@dataclass(frozen=True)
class OverheadReport:
    n_robots: int
    batch_size: int
    beta_o: float
    beta_a: float
    beta_r: float
    beta_p: float
    semi_upload: float
    semi_download: float
    traditional_upload: float
    traditional_download: float

    def to_dict(self) -> dict:
        return asdict(self)


def overhead_report(M: int, K: int, beta_o: float, beta_a: float, beta_r: float, beta_p: float) -> OverheadReport:
    """Per-slot training traffic of the semi-decentralized vs the traditional MADDPG layout."""
    if min(M, K) < 1 or min(beta_o, beta_a, beta_r, beta_p) < 0:
        raise ValueError("sizes must be positive")
    return OverheadReport(
        M, K, beta_o, beta_a, beta_r, beta_p,
        semi_upload=2 * K * M * beta_a,
        semi_download=K * M * beta_p,
        traditional_upload=K * M * beta_a + M * (2 * beta_o + beta_a + beta_r),
        traditional_download=K * M**2 * (2 * beta_o + 2 * beta_a + beta_r),
    )


def load_actors(env_config: EnvConfig, cfg: TrainConfig, directory, seed: int = 0) -> LearnedPolicy:
    """Rebuild greedy actors from ``actor_<m>.npz`` checkpoints."""
    c, j = env_config.n_collab, env_config.n_rbs
    agents = []
    for m in range(env_config.n_robots):
        a = ActorAgent(m, 4 * c, c, j, cfg, derive_rng(seed, "actor", m))
        a.params = nn.load_params(os.path.join(directory, f"actor_{m}.npz"), a.spec)
        agents.append(a)
    return LearnedPolicy(agents)
