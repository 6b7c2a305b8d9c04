"""Discretized Wiener status processes and the receiver-side estimators.

Each robot's operational status is a scalar random walk with i.i.d.
N(0, sigma_sq) increments per slot.  A receiver holds the last value it got
(hold-last-value estimator) plus a staleness counter ``tau``.  Unobserved
estimation errors are modelled by a zero-mean Gaussian belief with variance
``tau * sigma_sq``.

Gaussian draws go through ``numpy.random.Generator.standard_normal``, which
uses the ziggurat method on top of the PCG64 bit generator.  Every seeded run
is therefore bit-reproducible for a given numpy build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WienerParams:
    """Per-robot increment variances (status-units^2 per slot)."""

    sigma_sq: np.ndarray

    def __post_init__(self):
        sigma_sq = np.asarray(self.sigma_sq, dtype=float)
        if sigma_sq.ndim != 1 or sigma_sq.size == 0:
            raise ValueError("sigma_sq must be a non-empty 1-D array")
        if not np.all(sigma_sq > 0):
            raise ValueError("every sigma_sq must be > 0")
        object.__setattr__(self, "sigma_sq", sigma_sq)

    @classmethod
    def sample(cls, n_robots: int, sigma_range: tuple[float, float], rng: np.random.Generator):
        """Draw sigma_n uniformly from ``sigma_range`` and square it."""
        lo, hi = sigma_range
        sigma = rng.uniform(lo, hi, size=n_robots)
        return cls(sigma**2)


@dataclass(frozen=True)
class StatusValue:
    x: float
    t: int = 0

    def __post_init__(self):
        if self.t < 0 or int(self.t) != self.t:
            raise ValueError("slot index must be a non-negative integer")


@dataclass(frozen=True)
class EstimatorState:
    """Receiver-side estimate of one collaborator's status."""

    x_hat: float
    tau: int = 0
    xi_last: int = 1

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if (self.tau == 0) != (self.xi_last == 1):
            raise ValueError("tau == 0 must coincide with xi_last == 1")


@dataclass(frozen=True)
class BeliefGaussian:
    """Belief over an estimation error: N(0, tau * sigma_sq), a point mass at 0 when received."""

    variance: float
    mean: float = 0.0

    @classmethod
    def from_estimator(cls, xi: int, tau: int, sigma_sq: float) -> "BeliefGaussian":
        return cls(variance=belief_second_moment(xi, tau, sigma_sq))

    def sample(self, rng: np.random.Generator, size=None):
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(size)


def advance_status(x: StatusValue, sigma_sq: float, rng: np.random.Generator) -> StatusValue:
    """One slot of the random walk.  ``sigma_sq == 0`` is accepted as a degenerate test case."""
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be >= 0")
    delta = np.sqrt(sigma_sq) * rng.standard_normal()
    return StatusValue(x.x + float(delta), x.t + 1)


def advance_statuses(x: np.ndarray, sigma_sq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`advance_status` over all robots (one draw per robot, in index order)."""
    return x + np.sqrt(sigma_sq) * rng.standard_normal(x.shape)


def update_estimate(xi: int, x_true: StatusValue, prev: EstimatorState) -> EstimatorState:
    if xi:
        return EstimatorState(x_hat=x_true.x, tau=0, xi_last=1)
    return EstimatorState(x_hat=prev.x_hat, tau=prev.tau + 1, xi_last=0)


def estimation_error(xi: int, x_true: StatusValue, prev: EstimatorState) -> float:
    """Error of the post-update estimate; exactly 0 when the status was received."""
    if xi:
        return 0.0
    return x_true.x - prev.x_hat


def update_estimates(xi: np.ndarray, x_true: np.ndarray, x_hat: np.ndarray, tau: np.ndarray):
    """Array form of :func:`update_estimate` for a [transmitter, receiver] grid.

    ``x_true`` is indexed by transmitter and broadcast over receivers.
    Returns ``(x_hat, tau, errors)``.
    """
    received = xi.astype(bool)
    truth = np.broadcast_to(x_true[:, None], x_hat.shape)
    new_hat = np.where(received, truth, x_hat)
    new_tau = np.where(received, 0, tau + 1)
    errors = np.where(received, 0.0, truth - x_hat)
    return new_hat, new_tau, errors


def belief_mean(xi: int, tau: int, sigma_sq: float) -> float:
    # Both belief cases are centred at zero; kept for completeness.
    return 0.0


def belief_second_moment(xi, tau, sigma_sq):
    """E[e^2] under the belief: 0 if received, else tau * sigma_sq.  Works on arrays."""
    tau = np.asarray(tau)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    out = (1 - np.asarray(xi)) * tau * np.asarray(sigma_sq, dtype=float)
    return float(out) if out.ndim == 0 else out
