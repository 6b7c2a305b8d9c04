"""Radio model: topology, mobility, pathloss, RB sharing, SINR, rate and delay.

Units: positions in meters.  The cellular pathloss formula takes the distance
in kilometers (3GPP form 128.1 + 37.6 log10 d_km); the D2D pathloss is
``1 * d^-4`` with ``d`` in meters.  Powers are in watts, bandwidth in Hz.
Gains are deterministic functions of positions (no fast fading by default).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RadioParams:
    bandwidth_per_rb: float = 180e3
    bs_power: float = dbm_to_watts(46.0)
    robot_power: float = dbm_to_watts(13.0)
    noise_power: float = dbm_to_watts(-114.0) * 180e3
    sinr_threshold: float = db_to_linear(0.0)
    slot_duration: float = 10e-3
    num_rbs: int = 4
    bs_interference: bool = True  # switch off only for hand-checked arithmetic
    min_distance: float = 1.0  # pathloss floor; the d^-4 law exceeds unit gain below 1 m

    def __post_init__(self):
        for name in ("bandwidth_per_rb", "bs_power", "robot_power", "noise_power", "slot_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.num_rbs < 1:
            raise ValueError("num_rbs must be >= 1")

    @classmethod
    def from_table(cls, num_rbs: int = 4, bandwidth: float = 180e3, bs_dbm: float = 46.0,
                   robot_dbm: float = 13.0, noise_dbm_per_hz: float = -114.0,
                   sinr_threshold_db: float = 0.0, slot_duration: float = 10e-3) -> "RadioParams":
        return cls(
            bandwidth_per_rb=bandwidth,
            bs_power=dbm_to_watts(bs_dbm),
            robot_power=dbm_to_watts(robot_dbm),
            noise_power=dbm_to_watts(noise_dbm_per_hz) * bandwidth,
            sinr_threshold=db_to_linear(sinr_threshold_db),
            slot_duration=slot_duration,
            num_rbs=num_rbs,
        )


@dataclass
class Topology:
    positions: np.ndarray          # (M, 2) meters, BS at the origin
    collaborators: np.ndarray      # (M, C) robot ids; row m lists C_m
    data_sizes: np.ndarray         # (M, M) bits, alpha[n, m] for pair n -> m
    cell_radius: float = 150.0
    comm_range: float = 40.0

    @property
    def n_robots(self) -> int:
        return self.positions.shape[0]

    @property
    def nu(self) -> np.ndarray:
        """Binary matrix nu[n, m] = 1 iff n is a collaborator of m."""
        m = self.n_robots
        nu = np.zeros((m, m), dtype=bool)
        rows = np.repeat(np.arange(m), self.collaborators.shape[1])
        nu[self.collaborators.ravel(), rows] = True
        return nu

    def validate(self) -> None:
        m = self.n_robots
        if np.any(self.collaborators == np.arange(m)[:, None]):
            raise ValueError("a robot cannot collaborate with itself")
        dist = pairwise_distances(self.positions)
        rows = np.arange(m)[:, None]
        if np.any(dist[self.collaborators, rows] > self.comm_range):
            raise ValueError("collaborator outside communication range")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("robot", "x", "y", "collaborators"))
            for i, (x, y) in enumerate(self.positions):
                w.writerow((i, repr(float(x)), repr(float(y)), " ".join(map(str, self.collaborators[i]))))


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _uniform_in_disc(rng: np.random.Generator, radius: float, size: int) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size))
    phi = rng.uniform(0.0, 2 * np.pi, size)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


class InfeasibleTopology(RuntimeError):
    pass


def sample_topology(n_robots: int, n_collab: int, rng: np.random.Generator, *,
                    cell_radius: float = 150.0, comm_range: float = 40.0,
                    alpha_bits: tuple[float, float] = (320.0, 960.0),
                    placement: str = "cluster", min_separation: float = 1.0,
                    max_retries: int = 200) -> Topology:
    """Place a robot team in the cell and pick each robot's nearest in-range collaborators.

    ``placement="uniform"`` spreads robots over the whole cell and retries
    until every robot has ``n_collab`` neighbours in range; at low densities
    this is rarely feasible.  ``"cluster"`` (default) draws a team centre
    uniformly in the cell and robots uniformly within ``comm_range / 2`` of
    it, so every pair is in range.
    """
    if n_collab >= n_robots:
        raise ValueError("need more robots than collaborators per robot")
    for _ in range(max_retries):
        if placement == "uniform":
            pos = _uniform_in_disc(rng, cell_radius, n_robots)
        elif placement == "cluster":
            team_radius = comm_range / 2
            centre = _uniform_in_disc(rng, cell_radius - team_radius, 1)[0]
            pos = centre + _uniform_in_disc(rng, team_radius, n_robots)
        else:
            raise ValueError(f"unknown placement {placement!r}")
        dist = pairwise_distances(pos)
        np.fill_diagonal(dist, np.inf)
        if dist.min() < min_separation:
            continue
        order = np.argsort(dist, axis=0, kind="stable")[:n_collab]   # (C, M): nearest transmitters per receiver
        if np.any(np.take_along_axis(dist, order, axis=0) > comm_range):
            continue
        collaborators = order.T.copy()
        lo, hi = alpha_bits
        alpha = rng.uniform(lo, hi, size=(n_robots, n_robots))
        np.fill_diagonal(alpha, 0.0)
        topo = Topology(pos, collaborators, alpha, cell_radius, comm_range)
        topo.validate()
        return topo
    raise InfeasibleTopology(
        f"no feasible topology for M={n_robots}, |C|={n_collab} after {max_retries} tries")


def move_robots(topology: Topology, max_step: float, rng: np.random.Generator) -> Topology:
    """Random displacement of up to ``max_step`` meters per robot, clamped to the cell disc."""
    if max_step < 0:
        raise ValueError("max_step must be >= 0")
    m = topology.n_robots
    step = rng.uniform(0.0, max_step, m)
    heading = rng.uniform(0.0, 2 * np.pi, m)
    pos = topology.positions + np.stack([step * np.cos(heading), step * np.sin(heading)], axis=1)
    norm = np.linalg.norm(pos, axis=1)
    outside = norm > topology.cell_radius
    if np.any(outside):
        pos[outside] *= (topology.cell_radius / norm[outside])[:, None]
    return replace(topology, positions=pos)


def d2d_gain(distance):
    """Pathloss constant 1, exponent 4, distance in meters."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be > 0")
    out = distance**-4.0
    return float(out) if out.ndim == 0 else out


def cellular_gain(distance):
    """BS-to-robot gain from 128.1 + 37.6 log10(d_km) dB; ``distance`` in meters."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be > 0")
    loss_db = 128.1 + 37.6 * np.log10(distance / 1000.0)
    out = 10.0 ** (-loss_db / 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class ChannelGains:
    d2d: np.ndarray           # (M, M), gain from transmitter n to receiver m
    bs_to_robot: np.ndarray   # (M,)

    @classmethod
    def from_topology(cls, topology: Topology, params: RadioParams = RadioParams(),
                      fading: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> "ChannelGains":
        dist = np.maximum(pairwise_distances(topology.positions), params.min_distance)
        d2d = d2d_gain(dist)
        np.fill_diagonal(d2d, 0.0)  # never used: no self links
        bs_dist = np.maximum(np.linalg.norm(topology.positions, axis=1), params.min_distance)
        bs = cellular_gain(bs_dist)
        if fading is not None:
            d2d = d2d * fading(d2d.shape)
            bs = bs * fading(bs.shape)
        return cls(np.asarray(d2d, float), np.atleast_1d(np.asarray(bs, float)))


class Allocation:
    """Binary RB assignment l[n, m, j] for transmitter n, receiver m, RB j."""

    def __init__(self, l: np.ndarray, nu: Optional[np.ndarray] = None):
        l = np.asarray(l)
        if l.ndim != 3 or l.shape[0] != l.shape[1]:
            raise ValueError("allocation must have shape (M, M, J)")
        if not np.all((l == 0) | (l == 1)):
            raise ValueError("allocation entries must be binary")
        if np.any(l.sum(axis=2) > 1):
            raise ValueError("at most one RB per D2D pair")
        if nu is not None and np.any(l.any(axis=2) & ~nu.astype(bool)):
            raise ValueError("RB allocated to a non-collaborating pair")
        self.l = l.astype(np.int8)

    @classmethod
    def empty(cls, n_robots: int, num_rbs: int) -> "Allocation":
        return cls(np.zeros((n_robots, n_robots, num_rbs), dtype=np.int8))

    @property
    def scheduled(self) -> np.ndarray:
        """q[n, m] = sum_j l[n, m, j]."""
        return self.l.sum(axis=2).astype(bool)

    @property
    def rb_of_pair(self) -> np.ndarray:
        """RB index per pair, -1 where unscheduled."""
        return np.where(self.scheduled, self.l.argmax(axis=2), -1)

    def pairs(self):
        n, m, j = np.nonzero(self.l)
        return list(zip(n.tolist(), m.tolist(), j.tolist()))


def sharing_set(alloc: Allocation, j: int) -> set:
    if not 0 <= j < alloc.l.shape[2]:
        raise ValueError("RB index out of range")
    return set(np.nonzero(alloc.l[:, :, j].any(axis=1))[0].tolist())


def sinr(n: int, m: int, j: int, alloc: Allocation, gains: ChannelGains, params: RadioParams) -> float:
    if alloc.l[n, m, j] != 1:
        raise ValueError(f"pair ({n}, {m}) is not allocated RB {j}")
    signal = params.robot_power * gains.d2d[n, m]
    bs = params.bs_power * gains.bs_to_robot[m] if params.bs_interference else 0.0
    interference = sum(params.robot_power * gains.d2d[k, m] for k in sorted(sharing_set(alloc, j)) if k != n)
    return signal / (bs + interference + params.noise_power)


def sinr_matrix(alloc: Allocation, gains: ChannelGains, params: RadioParams,
                minislot: Optional[np.ndarray] = None) -> np.ndarray:
    """SINR of every scheduled pair (NaN elsewhere).

    With ``minislot`` (per-pair mini-slot index) only transmitters in the same
    (RB, mini-slot) cell interfere.
    """
    l = alloc.l.astype(bool)
    m_robots, _, n_rb = l.shape
    out = np.full((m_robots, m_robots), np.nan)
    bs = params.bs_power * gains.bs_to_robot if params.bs_interference else np.zeros(m_robots)
    rb = alloc.rb_of_pair
    cells = [(j, None) for j in range(n_rb)] if minislot is None else sorted(
        {(int(rb[n, m]), int(minislot[n, m])) for n, m in zip(*np.nonzero(rb >= 0))})
    for j, k in cells:
        in_cell = l[:, :, j] if k is None else (l[:, :, j] & (minislot == k))
        tx = in_cell.any(axis=1)                       # transmitters using this cell
        rx_power = params.robot_power * gains.d2d      # [n, m]
        total = (rx_power * tx[:, None]).sum(axis=0)   # all cell transmitters at each receiver
        n_idx, m_idx = np.nonzero(in_cell)
        signal = rx_power[n_idx, m_idx]
        interference = total[m_idx] - signal
        out[n_idx, m_idx] = signal / (bs[m_idx] + np.maximum(interference, 0.0) + params.noise_power)
    return out


def rate(sinr_value, params: RadioParams):
    """Shannon rate W log2(1 + SINR) in bits/s."""
    if np.any(np.asarray(sinr_value) < 0):
        raise ValueError("sinr must be >= 0")
    return params.bandwidth_per_rb * np.log2(1.0 + sinr_value)


def tx_delay(alpha, rate_bps):
    """Seconds to push ``alpha`` bits at ``rate_bps``; ``inf`` when the rate is zero."""
    alpha = np.asarray(alpha, dtype=float)
    rate_bps = np.asarray(rate_bps, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(rate_bps > 0, alpha / np.where(rate_bps > 0, rate_bps, 1.0), np.inf)
    return float(out) if out.ndim == 0 else out


def success(sinr_value, params: RadioParams):
    """rho = 1 iff SINR >= threshold (inclusive)."""
    out = np.asarray(sinr_value) >= params.sinr_threshold
    return int(out) if out.ndim == 0 else out.astype(np.int8)


def update_delay(scheduled_delays, deadline: float) -> float:
    """Max delay over the receiver's scheduled pairs; the deadline itself when nothing is scheduled."""
    delays = list(scheduled_delays)
    if not delays:
        return float(deadline)
    return float(max(delays))
