"""Non-learning baseline schedulers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .env import RobotAction
from .metrics import MetricKind
from .radio import Allocation


def random_policy(n_collab: int, n_rbs: int, rng: np.random.Generator) -> RobotAction:
    """Collaborator uniform over C_m plus "none", RB uniform over all RBs."""
    c = int(rng.integers(0, n_collab + 1))
    rb = int(rng.integers(0, n_rbs))
    return RobotAction(None if c == n_collab else c, rb)


def all_allocated_policy(n_collab: int, n_rbs: int, rng: np.random.Generator) -> RobotAction:
    """Always transmit: random collaborator on a random RB."""
    return RobotAction(int(rng.integers(0, n_collab)), int(rng.integers(0, n_rbs)))


@dataclass(frozen=True)
class ThresholdConfig:
    zeta: float = 0.1
    metric: MetricKind = MetricKind.LOIU

    def __post_init__(self):
        if not 0 < self.zeta <= 1:
            raise ValueError("zeta must be in (0, 1]")
        object.__setattr__(self, "metric", MetricKind.parse(self.metric))


@dataclass
class MetricState:
    """The receiver-side metric readings the threshold rule looks at.

    ``link_values`` holds one value per collaborator (time metrics in seconds),
    ``loiu`` the receiver's own LoIU.
    """

    link_values: np.ndarray
    loiu: float
    deadline: float
    err_max: np.ndarray


def threshold_policy(state: MetricState, cfg: ThresholdConfig, n_rbs: int,
                     rng: np.random.Generator) -> RobotAction:
    n_collab = len(state.link_values)
    if cfg.metric is MetricKind.LOIU:
        if cfg.zeta < state.loiu <= 1.0:
            return all_allocated_policy(n_collab, n_rbs, rng)
        return RobotAction(None, 0)
    if cfg.metric is MetricKind.UOI:
        limit = cfg.zeta * np.abs(state.err_max)
    else:
        limit = np.full(n_collab, cfg.zeta * state.deadline)
    over = state.link_values > limit
    if not np.any(over):
        return RobotAction(None, 0)
    # single (collaborator, RB) per robot: serve the worst violator
    worst = int(np.argmax(np.where(over, state.link_values, -np.inf)))
    return RobotAction(worst, int(rng.integers(0, n_rbs)))


@dataclass
class TdmSchedule:
    allocation: Allocation
    minislot: np.ndarray      # [n, m] mini-slot index, -1 where unscheduled
    n_minislots: int
    period: int


def tdm_policy(slot_index: int, collaborators: np.ndarray, n_rbs: int,
               n_minislots: Optional[int] = None) -> TdmSchedule:
    """Round-robin every D2D pair over (mini-slot, RB) cells, one pair per cell.

    Pairs are ordered by (collaborator rank, receiver), so consecutive slots
    serve different collaborators of each receiver.  The mini-slot count
    defaults to |C_m|.
    """
    m_robots, n_collab = collaborators.shape
    k = n_collab if n_minislots is None else int(n_minislots)
    if k < 1:
        raise ValueError("need at least one mini-slot")
    pairs = [(int(collaborators[m, r]), m) for r in range(n_collab) for m in range(m_robots)]
    cells = k * n_rbs
    period = math.ceil(len(pairs) / cells)
    block = pairs[(slot_index % period) * cells:(slot_index % period + 1) * cells]
    l = np.zeros((m_robots, m_robots, n_rbs), dtype=np.int8)
    minislot = np.full((m_robots, m_robots), -1, dtype=np.int64)
    for i, (n, m) in enumerate(block):
        l[n, m, i % n_rbs] = 1
        minislot[n, m] = i // n_rbs
    return TdmSchedule(Allocation(l), minislot, k, period)
