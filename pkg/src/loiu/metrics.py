"""LoIU and the rival freshness metrics, plus reliability statistics.

Two implementations of the per-link metrics live here on purpose:

* ``*Accumulator`` classes process one link's event stream and accept
  arbitrary delivery records (stale packets, repeated values, ...).
* :class:`LinkMetricBank` is the vectorised form the environment uses for all
  (transmitter, receiver) links at once.  It assumes every delivery carries the
  status generated in the same slot, which is how the simulator works.

The tests cross-check the two.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class MetricKind(str, enum.Enum):
    LOIU = "LoIU"
    AOI = "AoI"
    AOS = "AoS"
    AOII = "AoII"
    UOI = "UoI"
    AOCI = "AoCI"

    @classmethod
    def parse(cls, value) -> "MetricKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise ValueError(f"unknown metric kind {value!r}; expected one of {[k.value for k in cls]}")


@dataclass(frozen=True)
class PairRequirement:
    err_max: float
    deadline: float

    def __post_init__(self):
        if self.err_max == 0:
            raise ValueError("err_max must be nonzero")
        if not self.deadline > 0:
            raise ValueError("deadline must be > 0")


# --------------------------------------------------------------------------
# LoIU


def time_utility_loss(d: float, deadline: float) -> float:
    """Delay over deadline.  Values above 1 mean the latency constraint is violated."""
    if not deadline > 0:
        raise ValueError("deadline must be > 0")
    if d < 0:
        raise ValueError("delay must be >= 0")
    return d / deadline


def _check_err_maxes(err_maxes) -> np.ndarray:
    err_maxes = np.asarray(err_maxes, dtype=float)
    if err_maxes.size == 0:
        raise ValueError("collaborator list must be non-empty")
    if np.any(err_maxes == 0):
        raise ValueError("err_max must be nonzero")
    return err_maxes


def content_utility_loss(errors: Sequence[float], err_maxes: Sequence[float]) -> float:
    """Mean over collaborators of |e / E|^2."""
    err_maxes = _check_err_maxes(err_maxes)
    errors = np.asarray(errors, dtype=float)
    if errors.shape != err_maxes.shape:
        raise ValueError("errors and err_maxes must align")
    return float(np.mean(np.abs(errors / err_maxes) ** 2))


def loiu(d: float, deadline: float, errors: Sequence[float], err_maxes: Sequence[float]) -> float:
    return time_utility_loss(d, deadline) * content_utility_loss(errors, err_maxes)


def expected_loiu(d, deadline, xi, tau, sigma_sq, err_maxes) -> float:
    """LoIU averaged over the Gaussian belief of the unreceived errors.

    Each unreceived collaborator contributes ``tau * sigma_sq / E^2``.
    """
    err_maxes = _check_err_maxes(err_maxes)
    xi = np.asarray(xi, dtype=float)
    tau = np.asarray(tau, dtype=float)
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    if not (xi.shape == tau.shape == sigma_sq.shape == err_maxes.shape):
        raise ValueError("per-collaborator lists must align")
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    second_moment = (1.0 - xi) * tau * sigma_sq
    return time_utility_loss(d, deadline) * float(np.mean(second_moment / err_maxes**2))


# --------------------------------------------------------------------------
# Per-link accumulators


@dataclass(frozen=True)
class LinkEvent:
    """What happened on one link during one slot.

    ``x`` and ``x_hat`` are the true status and the receiver's estimate at the
    end of the slot.  ``gen_slot`` and ``received_value`` describe the
    delivered update (defaulting to a fresh one carrying ``x``).
    ``source_changed`` says whether the source generated new content this slot.
    """

    slot: int
    delivered: bool = False
    x: float = 0.0
    x_hat: float = 0.0
    gen_slot: Optional[int] = None
    received_value: Optional[float] = None
    source_changed: bool = True
    delay: float = 0.0
    deadline: float = 1.0

    @property
    def generation(self) -> int:
        return self.slot if self.gen_slot is None else self.gen_slot

    @property
    def value_received(self) -> float:
        return self.x if self.received_value is None else self.received_value


@dataclass
class MetricAccumulator:
    """Single-link metric state machine.  Starts synchronized at ``start_slot``."""

    start_slot: int = 0
    x0: float = 0.0
    kind: MetricKind = field(init=False, default=MetricKind.AOI)
    last_slot: int = field(init=False)
    value: float = field(init=False, default=0.0)

    def __post_init__(self):
        self.last_slot = self.start_slot
        self.value = 0.0

    def update(self, event: LinkEvent) -> float:
        if event.slot < self.last_slot:
            raise ValueError(f"out-of-order event: slot {event.slot} after {self.last_slot}")
        if event.delivered and event.generation > event.slot:
            raise ValueError("an update cannot be delivered before it is generated")
        self.last_slot = event.slot
        self.value = float(self._step(event))
        return self.value

    def _step(self, event: LinkEvent) -> float:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass
class AoIAccumulator(MetricAccumulator):
    kind: MetricKind = field(init=False, default=MetricKind.AOI)

    def __post_init__(self):
        super().__post_init__()
        self.latest_generation = self.start_slot

    def _step(self, event):
        if event.delivered:
            self.latest_generation = max(self.latest_generation, event.generation)
        return event.slot - self.latest_generation

    def value_at(self, slot: int) -> int:
        return slot - self.latest_generation


@dataclass
class AoSAccumulator(MetricAccumulator):
    """Slots since the source first changed after the generation of the freshest delivered update.

    Needs one event per slot so the change history is complete.
    """

    kind: MetricKind = field(init=False, default=MetricKind.AOS)

    def __post_init__(self):
        super().__post_init__()
        self.latest_generation = self.start_slot
        self.changes: list = []

    def _step(self, event):
        if event.source_changed:
            self.changes.append(event.slot)
        if event.delivered:
            self.latest_generation = max(self.latest_generation, event.generation)
        self.changes = [c for c in self.changes if c > self.latest_generation]
        if not self.changes:
            return 0
        return event.slot - self.changes[0]


def _abs_diff(x: float, x_hat: float) -> float:
    return abs(x - x_hat)


@dataclass
class AoIIAccumulator(MetricAccumulator):
    """g_f(slots since last correct sync) * g_a(x, x_hat).  Both are pluggable."""

    tolerance: float = 0.0
    time_penalty: Callable[[int], float] = float
    info_penalty: Callable[[float, float], float] = _abs_diff
    kind: MetricKind = field(init=False, default=MetricKind.AOII)

    def __post_init__(self):
        super().__post_init__()
        self.last_sync = self.start_slot

    def _step(self, event):
        if abs(event.x - event.x_hat) <= self.tolerance:
            self.last_sync = event.slot
        return self.time_penalty(event.slot - self.last_sync) * self.info_penalty(event.x, event.x_hat)


@dataclass
class UoIAccumulator(MetricAccumulator):
    """Context weight times estimation inaccuracy; the weight defaults to 1/E^2."""

    err_max: float = 1.0
    weight: Optional[Callable[[int], float]] = None
    info_penalty: Callable[[float, float], float] = _abs_diff
    kind: MetricKind = field(init=False, default=MetricKind.UOI)

    def __post_init__(self):
        if self.err_max == 0:
            raise ValueError("err_max must be nonzero")
        super().__post_init__()

    def _step(self, event):
        w = self.weight(event.slot) if self.weight is not None else 1.0 / self.err_max**2
        return w * self.info_penalty(event.x, event.x_hat)


@dataclass
class AoCIAccumulator(MetricAccumulator):
    """Age of the latest received update whose content differed from the one before it."""

    tolerance: float = 0.0
    kind: MetricKind = field(init=False, default=MetricKind.AOCI)

    def __post_init__(self):
        super().__post_init__()
        self.last_received = self.x0
        self.reference_generation = self.start_slot

    def _step(self, event):
        if event.delivered:
            v = event.value_received
            if abs(v - self.last_received) > self.tolerance:
                self.reference_generation = event.generation
            self.last_received = v
        return event.slot - self.reference_generation


@dataclass
class LoIULinkAccumulator(MetricAccumulator):
    """One link's share of the receiver LoIU: (d/D) * |e/E|^2."""

    err_max: float = 1.0
    kind: MetricKind = field(init=False, default=MetricKind.LOIU)

    def _step(self, event):
        err = (event.x - event.x_hat) / self.err_max
        return time_utility_loss(event.delay, event.deadline) * err * err


_ACCUMULATORS = {
    MetricKind.AOI: AoIAccumulator,
    MetricKind.AOS: AoSAccumulator,
    MetricKind.AOII: AoIIAccumulator,
    MetricKind.UOI: UoIAccumulator,
    MetricKind.AOCI: AoCIAccumulator,
    MetricKind.LOIU: LoIULinkAccumulator,
}


def make_accumulator(kind, **kwargs) -> MetricAccumulator:
    return _ACCUMULATORS[MetricKind.parse(kind)](**kwargs)


def run_trace(acc: MetricAccumulator, events: Iterable[LinkEvent]) -> list[float]:
    return [acc.update(ev) for ev in events]


# --------------------------------------------------------------------------
# Vectorised per-link state used by the simulator


class LinkMetricBank:
    """All rival metrics for every [transmitter, receiver] link, in slots.

    Deliveries always carry the status generated in the delivery slot, and the
    source content changes every slot.
    """

    def __init__(self, x0: np.ndarray, err_max: np.ndarray, start_slot: int = 0,
                 aoci_tolerance: float = 0.0):
        m = err_max.shape[0]
        self.err_max = err_max
        self.aoci_tolerance = aoci_tolerance
        self.last_delivery = np.full((m, m), start_slot, dtype=np.int64)
        self.last_sync = np.full((m, m), start_slot, dtype=np.int64)
        self.aoci_ref = np.full((m, m), start_slot, dtype=np.int64)
        self.last_received = np.broadcast_to(np.asarray(x0, float)[:, None], (m, m)).copy()
        self.slot = start_slot
        self.abs_err = np.zeros((m, m))

    def update(self, slot: int, delivered: np.ndarray, x_true: np.ndarray, errors: np.ndarray):
        if slot < self.slot:
            raise ValueError("out-of-order slot")
        self.slot = slot
        delivered = delivered.astype(bool)
        self.last_delivery[delivered] = slot
        self.abs_err = np.abs(errors)
        self.last_sync[self.abs_err == 0] = slot
        fresh = np.broadcast_to(x_true[:, None], delivered.shape)
        changed = delivered & (np.abs(fresh - self.last_received) > self.aoci_tolerance)
        self.aoci_ref[changed] = slot
        self.last_received = np.where(delivered, fresh, self.last_received)

    def values(self, kind) -> np.ndarray:
        kind = MetricKind.parse(kind)
        t = self.slot
        if kind is MetricKind.AOI:
            return (t - self.last_delivery).astype(float)
        if kind is MetricKind.AOS:
            return np.maximum(t - (self.last_delivery + 1), 0).astype(float)
        if kind is MetricKind.AOII:
            return (t - self.last_sync) * self.abs_err
        if kind is MetricKind.UOI:
            return self.abs_err / self.err_max**2
        if kind is MetricKind.AOCI:
            return (t - self.aoci_ref).astype(float)
        raise ValueError("LoIU is a per-receiver quantity; use loiu()")


# --------------------------------------------------------------------------
# Reliability


@dataclass
class ReliabilityCounter:
    """Running counts for task and transmission reliability."""

    task_ok: int = 0
    task_total: int = 0
    tx_ok: int = 0
    tx_total: int = 0

    def add_slot(self, *, nu, received, pair_delay, update_delay, errors, err_max, deadline,
                 scheduled, sinr, sinr_threshold):
        nu = nu.astype(bool)
        deadline_rx = np.broadcast_to(deadline[None, :], nu.shape)
        on_time = received.astype(bool) & (pair_delay <= deadline_rx)
        accurate = np.abs(errors) <= np.abs(err_max)
        self.task_ok += int(np.count_nonzero((on_time | accurate) & nu))
        self.task_total += int(np.count_nonzero(nu))
        sched = scheduled.astype(bool)
        if sched.any():
            within = np.broadcast_to((update_delay <= deadline)[None, :], nu.shape)
            good = sched & (np.nan_to_num(sinr, nan=-np.inf) >= sinr_threshold) & within
            self.tx_ok += int(np.count_nonzero(good))
            self.tx_total += int(np.count_nonzero(sched))

    @property
    def task_reliability(self) -> float:
        if self.task_total == 0:
            raise ValueError("empty trace")
        return self.task_ok / self.task_total

    @property
    def transmission_reliability(self) -> Optional[float]:
        return None if self.tx_total == 0 else self.tx_ok / self.tx_total


@dataclass
class SlotRecord:
    """Per-slot arrays indexed [transmitter, receiver] (``update_delay`` by receiver)."""

    received: np.ndarray
    scheduled: np.ndarray
    pair_delay: np.ndarray
    update_delay: np.ndarray
    errors: np.ndarray
    sinr: np.ndarray


@dataclass
class EpisodeTrace:
    nu: np.ndarray
    err_max: np.ndarray
    deadline: np.ndarray
    sinr_threshold: float
    slots: list = field(default_factory=list)

    def counter(self) -> ReliabilityCounter:
        if not self.slots or not np.any(self.nu):
            raise ValueError("trace must cover at least one slot and one collaborator pair")
        c = ReliabilityCounter()
        for rec in self.slots:
            c.add_slot(nu=self.nu, received=rec.received, pair_delay=rec.pair_delay,
                       update_delay=rec.update_delay, errors=rec.errors, err_max=self.err_max,
                       deadline=self.deadline, scheduled=rec.scheduled, sinr=rec.sinr,
                       sinr_threshold=self.sinr_threshold)
        return c


def task_reliability(trace: EpisodeTrace) -> float:
    """Share of (slot, receiver, collaborator) instances delivered on time or estimated within E.

    A late delivery whose error happens to be within E still counts.
    """
    return trace.counter().task_reliability


def transmission_reliability(trace: EpisodeTrace) -> Optional[float]:
    """Share of scheduled transmissions meeting the SINR threshold and the receiver deadline.

    ``None`` when nothing was scheduled.
    """
    if not trace.slots:
        raise ValueError("empty trace")
    return trace.counter().transmission_reliability


METRIC_CSV_HEADER = ("slot", "receiver", "collaborator", "metric_kind", "value")


def write_metric_csv(path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_CSV_HEADER)
        for slot, receiver, collaborator, kind, value in rows:
            w.writerow((slot, receiver, collaborator, MetricKind.parse(kind).value, repr(float(value))))
