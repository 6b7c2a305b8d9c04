"""Independent per-robot learners used as baselines.

Each robot trains on its own observation, action and local reward; nothing is
shared.  DDPG reuses the actor and the critic update of the MADDPG module
with a one-robot critic; DQN enumerates (collaborator or none) x RB.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neural as nn
from .env import EnvConfig, RobotAction, RobotTeamEnv
from .maddpg import (ActionGradients, ActorAgent, CentralCritic, TrainConfig, TrainingDiverged, TrainResult,
                     actor_gradients, critic_update, scenario_seed, select_action)
from .replay import ReplayBuffer
from .seeding import derive_rng, derive_seed


class DDPGLearner:
    """Actor plus a critic that only ever sees this robot's (o_m, a_m)."""

    def __init__(self, robot, obs_dim, n_collab, n_rbs, cfg: TrainConfig, seed: int):
        self.agent = ActorAgent(robot, obs_dim, n_collab, n_rbs, cfg, derive_rng(seed, "ddpg-actor", robot))
        self.critic = CentralCritic(1, obs_dim, self.agent.act_dim, cfg, derive_rng(seed, "ddpg-critic", robot))
        self.cfg = cfg

    def act(self, obs, explore, eps, temp):
        return self.agent.act(obs, explore, eps, temp)

    def store(self, tid, obs, act, reward, next_obs):
        self.agent.store(tid, obs, act, reward, next_obs)
        self.agent.not_uploaded = []
        self.critic.buffer.add(tid, obs=obs, act=act, reward=reward, next_obs=next_obs)

    def ready(self) -> bool:
        return len(self.critic.buffer) >= self.cfg.batch_size

    def train_step(self, temp) -> float:
        request = self.critic.sample_ids(self.cfg.batch_size, self.agent.buffer.oldest_id)
        sets = self.agent.respond(request, temp)
        batch = self.critic.buffer.get(request.ids)
        loss = critic_update(self.critic, batch, sets.target_actions)
        grads = actor_gradients(self.critic, batch, [sets.policy_actions])
        nn.soft_update(self.critic.target, self.critic.params, self.cfg.soft_update)
        self.agent.apply_gradients(ActionGradients(self.agent.robot, request.ids, grads[0]))
        return loss

    def greedy(self, obs) -> RobotAction:
        return select_action(self.agent, obs, False, self.agent.rng)[0]


class DQNLearner:
    def __init__(self, robot, obs_dim, n_collab, n_rbs, cfg: TrainConfig, seed: int):
        self.robot, self.n_collab, self.n_rbs = robot, n_collab, n_rbs
        self.n_actions = (n_collab + 1) * n_rbs
        self.spec = nn.DenseNetSpec((obs_dim, *cfg.actor_hidden, self.n_actions), "linear")
        self.rng = derive_rng(seed, "dqn", robot)
        self.params = nn.init_params(self.spec, self.rng)
        self.target = self.params.copy()
        self.opt = nn.OptimizerState.for_params(self.params, learning_rate=cfg.critic_lr, method=cfg.optimizer,
                                                max_grad_norm=cfg.critic_grad_clip)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, dict(obs=(obs_dim,), act=(), reward=(), next_obs=(obs_dim,)))
        self.cfg = cfg

    def index_to_action(self, a: int) -> RobotAction:
        c, rb = divmod(int(a), self.n_rbs)
        return RobotAction(None if c == self.n_collab else c, rb)

    def q_values(self, obs) -> np.ndarray:
        return nn.forward(self.spec, self.params, obs)[0]

    def act(self, obs, explore, eps, temp):
        if explore and self.rng.random() < eps:
            a = int(self.rng.integers(0, self.n_actions))
        else:
            a = int(np.argmax(self.q_values(obs)))
        return self.index_to_action(a), a

    def greedy(self, obs) -> RobotAction:
        return self.act(obs, False, 0.0, 1.0)[0]

    def store(self, tid, obs, act, reward, next_obs):
        self.buffer.add(tid, obs=obs, act=act, reward=reward, next_obs=next_obs)

    def ready(self) -> bool:
        return len(self.buffer) >= self.cfg.batch_size

    def train_step(self, temp) -> float:
        ids = self.rng.choice(self.buffer.retained_ids(), size=self.cfg.batch_size, replace=False)
        b = self.buffer.get(np.sort(ids))
        q_next, _ = nn.forward(self.spec, self.target, b["next_obs"])
        y = b["reward"] + self.cfg.gamma * q_next.max(axis=1)
        q, cache = nn.forward(self.spec, self.params, b["obs"])
        rows = np.arange(len(y))
        acts = b["act"].astype(np.int64)
        diff = q[rows, acts] - y
        loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise TrainingDiverged("DQN loss is not finite")
        grad = np.zeros_like(q)
        grad[rows, acts] = 2.0 * diff / len(y)
        nn.optimizer_step(self.params, nn.backward(self.spec, self.params, cache, grad).params, self.opt)
        nn.soft_update(self.target, self.params, self.cfg.soft_update)
        return loss


class IndependentPolicy:
    def __init__(self, learners, name):
        self.learners, self.name = learners, name

    def actions(self, env, observations, rng=None):
        return [l.greedy(o.features()) for l, o in zip(self.learners, observations)]


@dataclass
class BaselineResult(TrainResult):
    kind: str = ""

    def policy(self):
        return IndependentPolicy(self.agents, self.kind)


def _train_independent(kind, learner_cls, env_config: EnvConfig, cfg: TrainConfig, seed: int, progress=None):
    env_config.validate()
    cfg.validate()
    env = RobotTeamEnv(env_config)
    m, c, j = env_config.n_robots, env_config.n_collab, env_config.n_rbs
    learners = [learner_cls(i, 4 * c, c, j, cfg, seed) for i in range(m)]
    rows, tid = [], 0
    for ep in range(cfg.episodes):
        eps, temp = cfg.epsilon(ep), cfg.temperature_at(ep)
        _, observations = env.reset(derive_seed(seed, "train-episode", ep), scenario_seed(seed))
        obs = [o.features() for o in observations]
        rewards, loiu, losses = [], [], []
        for _ in range(cfg.slots_per_episode):
            chosen = [l.act(o, True, eps, temp) for l, o in zip(learners, obs)]
            out = env.step([ch[0] for ch in chosen])
            nxt = [o.features() for o in out.observations]
            local = cfg.transform_reward(out.local_rewards)
            for i, l in enumerate(learners):
                l.store(tid, obs[i], chosen[i][1], local[i], nxt[i])
            tid += 1
            obs = nxt
            rewards.append(out.global_reward)
            loiu.append(float(np.mean(out.info["loiu"])))
            if tid % cfg.train_every == 0:
                for l in learners:
                    if l.ready():
                        try:
                            losses.append(l.train_step(temp))
                        except nn.NonFiniteGradient as exc:
                            raise TrainingDiverged(f"{kind} episode {ep}: {exc}") from exc
        row = dict(episode=ep, episode_reward=float(np.sum(rewards)), mean_reward=float(np.mean(rewards)),
                   mean_loiu=float(np.mean(loiu)), critic_loss=float(np.mean(losses)) if losses else float("nan"),
                   epsilon=float(eps), temperature=float(temp))
        rows.append(row)
        if progress:
            progress(row)
    return BaselineResult(learners, None, rows, env_config, cfg, seed, kind=kind)


def train_ddpg_baseline(env_config: EnvConfig, cfg: TrainConfig, seed: int = 0, progress=None) -> BaselineResult:
    return _train_independent("ddpg", DDPGLearner, env_config, cfg, seed, progress)


def train_dqn_baseline(env_config: EnvConfig, cfg: TrainConfig, seed: int = 0, progress=None) -> BaselineResult:
    return _train_independent("dqn", DQNLearner, env_config, cfg, seed, progress)
