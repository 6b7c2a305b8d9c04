"""Dec-POMDP environment for D2D status sharing in a robot team.

One :class:`RobotTeamEnv` owns the topology, the Wiener statuses, every
receiver's estimators and the per-link metric state.  Robots act with a
(collaborator, RB) pair each; the environment turns those into an RB
allocation, runs the radio model, updates the estimators and scores the slot.

Training rewards use the belief (expected) LoIU; the exact LoIU computed from
true errors is reported alongside for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import radio
from .metrics import LinkMetricBank, MetricKind, ReliabilityCounter
from .radio import Allocation, ChannelGains, RadioParams, Topology
from .status_process import advance_statuses, update_estimates


@dataclass(frozen=True)
class EnvConfig:
    n_robots: int = 5
    n_rbs: int = 4
    n_collab: int = 4
    sigma_range: tuple = (0.001, 10.0)       # per-slot std of the status increments
    z_range: tuple = (0.2, 15.0)             # E = z * sigma^2
    deadline_range: tuple = (0.002, 0.100)   # seconds
    alpha_bytes: tuple = (40.0, 120.0)
    cell_radius: float = 150.0
    comm_range: float = 40.0
    max_step: float = 0.2
    slots_per_episode: int = 100
    penalty: float = 1.0
    reward_metric: str = "LoIU"
    reward_form: str = "expected"            # "expected" (belief) or "exact"
    placement: str = "cluster"
    bandwidth: float = 180e3
    bs_dbm: float = 46.0
    robot_dbm: float = 13.0
    noise_dbm_per_hz: float = -114.0
    sinr_threshold_db: float = 0.0
    slot_duration: float = 10e-3

    def validate(self) -> None:
        errors = []
        if self.n_robots < 2:
            errors.append("n_robots: must be >= 2")
        if self.n_rbs < 1:
            errors.append("n_rbs: must be >= 1")
        if self.n_collab < 1:
            errors.append("n_collab: must be >= 1")
        if self.n_collab >= self.n_robots:
            errors.append("n_collab: must be < n_robots")
        for name in ("sigma_range", "z_range", "deadline_range", "alpha_bytes"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                errors.append(f"{name}: need 0 < low <= high, got {(lo, hi)}")
        if self.max_step < 0:
            errors.append("max_step: must be >= 0")
        if self.slots_per_episode < 1:
            errors.append("slots_per_episode: must be >= 1")
        if self.reward_form not in ("expected", "exact"):
            errors.append("reward_form: must be 'expected' or 'exact'")
        try:
            MetricKind.parse(self.reward_metric)
        except ValueError as exc:
            errors.append(f"reward_metric: {exc}")
        if errors:
            raise ValueError("invalid EnvConfig: " + "; ".join(errors))

    def radio_params(self) -> RadioParams:
        return RadioParams.from_table(num_rbs=self.n_rbs, bandwidth=self.bandwidth, bs_dbm=self.bs_dbm,
                                      robot_dbm=self.robot_dbm, noise_dbm_per_hz=self.noise_dbm_per_hz,
                                      sinr_threshold_db=self.sinr_threshold_db,
                                      slot_duration=self.slot_duration)


@dataclass(frozen=True)
class RobotAction:
    """``collab`` indexes the receiver's collaborator list (None = no transmission)."""

    collab: Optional[int]
    rb: int = 0


@dataclass
class GlobalState:
    errors: np.ndarray        # e[n, m]
    data_sizes: np.ndarray    # alpha[n, m] bits
    gains: ChannelGains


@dataclass
class Observation:
    """What robot m sees about each of its collaborators (in collaborator-list order)."""

    xi_prev: np.ndarray
    alpha: np.ndarray
    d2d_gain: np.ndarray
    bs_gain: np.ndarray

    def vector(self) -> np.ndarray:
        return np.stack([self.xi_prev, self.alpha, self.d2d_gain, self.bs_gain], axis=1).ravel()

    def features(self) -> np.ndarray:
        """Fixed standardisation for network inputs: log gains, alpha in units of 640 bits."""
        feats = np.stack([
            self.xi_prev.astype(float),
            (self.alpha - 640.0) / 320.0,
            (np.log10(self.d2d_gain) + 3.5) / 1.5,
            (np.log10(self.bs_gain) + 7.5) / 1.5,
        ], axis=1)
        return feats.ravel()


@dataclass
class StepOutcome:
    next_state: GlobalState
    observations: list
    local_rewards: np.ndarray
    global_reward: float
    rewards: np.ndarray       # what each robot trains on: the shared global reward
    info: dict = field(default_factory=dict)


def decode_actions(actions: Sequence[RobotAction], collaborators: np.ndarray, n_rbs: int) -> Allocation:
    m_robots, n_collab = collaborators.shape
    if len(actions) != m_robots:
        raise ValueError("need one action per robot")
    l = np.zeros((m_robots, m_robots, n_rbs), dtype=np.int8)
    for m, act in enumerate(actions):
        if act.collab is None:
            continue
        if not 0 <= act.collab < n_collab:
            raise ValueError(f"robot {m}: collaborator index {act.collab} out of range")
        if not 0 <= act.rb < n_rbs:
            raise ValueError(f"robot {m}: RB index {act.rb} out of range")
        l[collaborators[m, act.collab], m, act.rb] = 1
    return Allocation(l)


def exact_loiu(errors: np.ndarray, update_delay: np.ndarray, deadline: np.ndarray,
               err_max: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Per-receiver LoIU from the true errors."""
    content = np.where(nu, (errors / err_max) ** 2, 0.0).sum(axis=0) / nu.sum(axis=0)
    return update_delay / deadline * content


def expected_loiu_matrix(xi: np.ndarray, tau: np.ndarray, sigma_sq: np.ndarray, update_delay: np.ndarray,
                         deadline: np.ndarray, err_max: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Per-receiver belief LoIU, sum over collaborators of (1-xi) tau sigma^2 / E^2, averaged."""
    second = (1 - xi) * tau * sigma_sq[:, None]
    content = np.where(nu, second / err_max**2, 0.0).sum(axis=0) / nu.sum(axis=0)
    return update_delay / deadline * content


def expected_local_reward(d, deadline, xi, tau, sigma_sq, err_maxes) -> float:
    from .metrics import expected_loiu

    return -expected_loiu(d, deadline, xi, tau, sigma_sq, err_maxes)


def verify_potential_property(outcome: StepOutcome) -> bool:
    """True iff every robot's training reward equals the global reward bit-for-bit."""
    rewards = np.asarray(outcome.rewards)
    g = np.float64(outcome.global_reward)
    return bool(np.all(rewards.view(np.uint64) == np.full(rewards.shape, g).view(np.uint64)))


class RobotTeamEnv:
    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.params = config.radio_params()
        self.metric = MetricKind.parse(config.reward_metric)
        self.rng: Optional[np.random.Generator] = None

    # ---- episode setup -------------------------------------------------

    def reset(self, seed=None, scenario_seed=None):
        """Start an episode.

        With ``scenario_seed`` the deployment (topology, sigma, E, D, alpha) comes
        from that seed and ``seed`` only drives the dynamics, so one deployment
        can be replayed under many noise realisations.
        """
        cfg = self.config
        self.rng = np.random.default_rng(seed)
        rng = self.rng if scenario_seed is None else np.random.default_rng(scenario_seed)
        self.topology = radio.sample_topology(
            cfg.n_robots, cfg.n_collab, rng, cell_radius=cfg.cell_radius, comm_range=cfg.comm_range,
            alpha_bits=(8 * cfg.alpha_bytes[0], 8 * cfg.alpha_bytes[1]), placement=cfg.placement)
        m = cfg.n_robots
        self.nu = self.topology.nu
        sigma = rng.uniform(*cfg.sigma_range, size=m)
        self.sigma_sq = sigma**2
        z = rng.uniform(*cfg.z_range, size=(m, m))
        self.err_max = z * self.sigma_sq[:, None]
        self.deadline = rng.uniform(*cfg.deadline_range, size=m)
        self.x = np.zeros(m)
        self.x_hat = np.zeros((m, m))
        self.tau = np.zeros((m, m), dtype=np.int64)
        self.xi = np.ones((m, m), dtype=np.int8)
        self.errors = np.zeros((m, m))
        self.t = 0
        self.gains = ChannelGains.from_topology(self.topology, self.params)
        self.bank = LinkMetricBank(self.x, np.where(self.nu, self.err_max, 1.0))
        return self.state(), self.observations()

    @property
    def n_robots(self) -> int:
        return self.config.n_robots

    @property
    def collaborators(self) -> np.ndarray:
        return self.topology.collaborators

    def state(self) -> GlobalState:
        return GlobalState(self.errors.copy(), self.topology.data_sizes.copy(),
                           ChannelGains(self.gains.d2d.copy(), self.gains.bs_to_robot.copy()))

    def observation(self, m: int) -> Observation:
        c = self.collaborators[m]
        return Observation(
            xi_prev=self.xi[c, m].astype(float),
            alpha=self.topology.data_sizes[c, m].copy(),
            d2d_gain=self.gains.d2d[c, m].copy(),
            bs_gain=np.full(c.shape, self.gains.bs_to_robot[m]),
        )

    def observations(self) -> list:
        return [self.observation(m) for m in range(self.n_robots)]

    # ---- dynamics ------------------------------------------------------

    def step(self, actions: Union[Sequence[RobotAction], Allocation], minislot: Optional[np.ndarray] = None,
             n_minislots: int = 1) -> StepOutcome:
        cfg, p = self.config, self.params
        alloc = actions if isinstance(actions, Allocation) else decode_actions(actions, self.collaborators, cfg.n_rbs)
        if np.any(alloc.scheduled & ~self.nu):
            raise ValueError("allocation schedules a non-collaborating pair")
        self.t += 1

        # statuses advance at the start of the slot
        self.x = advance_statuses(self.x, self.sigma_sq, self.rng)

        q = alloc.scheduled
        sinr = radio.sinr_matrix(alloc, self.gains, p, minislot=minislot)
        rho = np.zeros_like(q)
        rho[q] = radio.success(sinr[q], p).astype(bool)
        pair_delay = np.full(q.shape, np.inf)
        airtime = radio.tx_delay(self.topology.data_sizes[q], radio.rate(sinr[q], p))
        if minislot is None:
            pair_delay[q] = airtime
            xi = q & rho
        else:
            mini = p.slot_duration / n_minislots
            pair_delay[q] = minislot[q] * mini + airtime
            fits = np.zeros_like(q)
            fits[q] = airtime <= mini
            xi = q & rho & fits

        self.x_hat, self.tau, self.errors = update_estimates(xi, self.x, self.x_hat, self.tau)
        self.xi = xi.astype(np.int8)
        self.bank.update(self.t, xi, self.x, self.errors)

        update_delay = np.where(q.any(axis=0), np.where(q, pair_delay, -np.inf).max(axis=0), self.deadline)
        f_s = update_delay / self.deadline
        loiu_exact = exact_loiu(self.errors, update_delay, self.deadline, self.err_max, self.nu)
        loiu_expected = expected_loiu_matrix(self.xi, self.tau, self.sigma_sq, update_delay,
                                             self.deadline, self.err_max, self.nu)
        penalty = -np.where(update_delay > self.deadline, f_s * cfg.penalty, 0.0)
        r_loss = -self._reward_loss(loiu_exact, loiu_expected)
        local = r_loss + penalty
        g = float(np.mean(local))
        rewards = np.full(self.n_robots, g)

        counter = ReliabilityCounter()
        counter.add_slot(nu=self.nu, received=xi, pair_delay=pair_delay, update_delay=update_delay,
                         errors=self.errors, err_max=self.err_max, deadline=self.deadline,
                         scheduled=q, sinr=sinr, sinr_threshold=p.sinr_threshold)

        # mobility and channel refresh for the next slot
        self.topology = radio.move_robots(self.topology, cfg.max_step, self.rng)
        self.gains = ChannelGains.from_topology(self.topology, p)

        info = dict(q=q, rho=rho, xi=xi, sinr=sinr, pair_delay=pair_delay, update_delay=update_delay,
                    loiu=loiu_exact, expected_loiu=loiu_expected, penalty=penalty,
                    errors=self.errors.copy(), reliability=counter, allocation=alloc)
        return StepOutcome(self.state(), self.observations(), local, g, rewards, info)

    def _reward_loss(self, loiu_exact: np.ndarray, loiu_expected: np.ndarray) -> np.ndarray:
        """Per-receiver loss the training reward penalises, for the configured metric."""
        if self.metric is MetricKind.LOIU:
            return loiu_expected if self.config.reward_form == "expected" else loiu_exact
        values = self.metric_values(self.metric, normalized=True)
        return np.where(self.nu, values, 0.0).sum(axis=0) / self.nu.sum(axis=0)

    def metric_values(self, kind, normalized: bool = False) -> np.ndarray:
        """Per-link metric values [n, m].

        Time-type metrics are returned in seconds; ``normalized=True`` divides
        them by the receiver deadline (and AoII's mismatch term by E).
        """
        kind = MetricKind.parse(kind)
        slot = self.params.slot_duration
        v = self.bank.values(kind)
        if kind in (MetricKind.AOI, MetricKind.AOS, MetricKind.AOCI):
            v = v * slot
            if normalized:
                v = v / self.deadline[None, :]
        elif kind is MetricKind.AOII:
            v = v * slot
            if normalized:
                v = v / self.deadline[None, :] / np.abs(np.where(self.nu, self.err_max, 1.0))
        return v

    def link_loiu(self) -> np.ndarray:
        """Per-link contribution (e/E)^2 to the content loss, zero off the collaborator graph."""
        return np.where(self.nu, (self.errors / self.err_max) ** 2, 0.0)
