"""Delay bookkeeping and trace statistics.

A run over T server iterations leaves behind a ``DelayLedger``: the applied
delays tau_t = t - (assignment iteration) for t = 0..T-1, the start
iterations of the jobs still in flight at T, and the concurrency log
|C_0|, ..., |C_T|.  All delay arithmetic here is exact integer/rational.

Two in-flight conventions coexist and both are supported:

* Reported statistics (``average_delay``, ``max_delay``) exclude the
  in-flight job that would have been applied next, matching the convention
  that the last step's job is not counted among the leftovers.  A ledger
  built with ``excluded_active_index=None`` counts every in-flight job
  instead; the ledger records which convention it uses.
* The conservation check counts every job from its assignment step
  inclusive, i.e. each applied delay enters as tau_t + 1 and each in-flight
  job as (T - start + 1).  Under that bookkeeping the total equals the
  summed concurrency log exactly:

      sum_t (tau_t + 1) + sum_inflight (T - s_i + 1) = sum_{t=0}^{T} |C_t|

  This is an exact integer identity for every schedule, which makes it a
  cheap and sharp simulator bug detector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

from .errors import IdentityViolationError, UndefinedStatisticError


@dataclass
class DelayLedger:
    total_iterations: int
    applied_delays: list[int]
    applied_clients: list[int]
    active_start_iterations: list[int]
    active_clients: list[int]
    concurrency_log: list[int]
    samples_per_client: dict[int, int]
    excluded_active_index: Optional[int] = None

    def __post_init__(self):
        t = self.total_iterations
        if len(self.applied_delays) != t:
            raise ValueError(f"expected {t} applied delays, got {len(self.applied_delays)}")
        if len(self.applied_clients) != t:
            raise ValueError("applied_clients length does not match applied_delays")
        if len(self.active_start_iterations) != len(self.active_clients):
            raise ValueError("active job lists disagree in length")
        if len(self.concurrency_log) != t + 1:
            raise ValueError(
                f"concurrency log must have {t + 1} entries, got {len(self.concurrency_log)}"
            )
        if self.excluded_active_index is not None and not (
            0 <= self.excluded_active_index < len(self.active_start_iterations)
        ):
            raise ValueError("excluded_active_index out of range")

    @property
    def in_flight_convention(self) -> str:
        return "all" if self.excluded_active_index is None else "exclude-next-applied"

    def in_flight_delays_all(self) -> list[int]:
        t = self.total_iterations
        return [t - s for s in self.active_start_iterations]

    def in_flight_delays_reported(self) -> list[int]:
        delays = self.in_flight_delays_all()
        if self.excluded_active_index is not None:
            delays = [d for i, d in enumerate(delays) if i != self.excluded_active_index]
        return delays


class ConservationCheck(NamedTuple):
    lhs: int
    rhs: int
    passed: bool


def average_delay_exact(ledger: DelayLedger) -> Fraction:
    """Mean delay over applied gradients and the reported in-flight set."""
    if ledger.total_iterations < 1:
        raise UndefinedStatisticError("average delay needs at least one iteration")
    in_flight = ledger.in_flight_delays_reported()
    total = sum(ledger.applied_delays) + sum(in_flight)
    return Fraction(total, ledger.total_iterations + len(in_flight))


def average_delay(ledger: DelayLedger) -> float:
    return float(average_delay_exact(ledger))


def max_delay(ledger: DelayLedger) -> int:
    """Largest delay among applied gradients and the reported in-flight set."""
    candidates = list(ledger.applied_delays) + ledger.in_flight_delays_reported()
    if not candidates:
        raise UndefinedStatisticError("max delay of an empty ledger")
    return max(candidates)


def average_concurrency_exact(ledger: DelayLedger) -> Fraction:
    return Fraction(sum(ledger.concurrency_log), len(ledger.concurrency_log))


def average_concurrency(ledger: DelayLedger) -> float:
    return float(average_concurrency_exact(ledger))


def max_concurrency(ledger: DelayLedger) -> int:
    return max(ledger.concurrency_log)


def delay_conservation(ledger: DelayLedger) -> ConservationCheck:
    """Exact conservation identity between delays and the concurrency log."""
    t = ledger.total_iterations
    lhs = (
        sum(ledger.applied_delays)
        + t
        + sum(ledger.in_flight_delays_all())
        + len(ledger.active_start_iterations)
    )
    rhs = sum(ledger.concurrency_log)
    return ConservationCheck(lhs, rhs, lhs == rhs)


def assert_delay_conservation(ledger: DelayLedger) -> None:
    check = delay_conservation(ledger)
    if not check.passed:
        raise IdentityViolationError(check.lhs, check.rhs)


def conservation_average_delay(ledger: DelayLedger) -> Fraction:
    """Average delay under the conservation bookkeeping (assignment step counted).

    When the conservation identity holds this equals
    (T + 1) / (T + |C_T| - 1) times the average concurrency, exactly.
    """
    t = ledger.total_iterations
    denom = t + len(ledger.active_start_iterations) - 1
    if denom < 1:
        raise UndefinedStatisticError("not enough jobs for the conservation average")
    check = delay_conservation(ledger)
    return Fraction(check.lhs, denom)


def average_delay_per_client_exact(ledger: DelayLedger, client: int) -> Fraction:
    """Per-client mean delay: applied plus every unapplied job of that client,
    divided by the number of times the client was handed work."""
    count = ledger.samples_per_client.get(client, 0)
    if count == 0:
        raise UndefinedStatisticError(f"client {client} was never sampled")
    t = ledger.total_iterations
    total = sum(d for d, c in zip(ledger.applied_delays, ledger.applied_clients) if c == client)
    total += sum(
        t - s for s, c in zip(ledger.active_start_iterations, ledger.active_clients) if c == client
    )
    return Fraction(total, count)


def average_delay_per_client(ledger: DelayLedger) -> dict[int, float]:
    out = {}
    for client in sorted(ledger.samples_per_client):
        try:
            out[client] = float(average_delay_per_client_exact(ledger, client))
        except UndefinedStatisticError:
            continue
    return out


def grad_norm_sequence(trace) -> np.ndarray:
    """Gradient norms at every iterate x^0 .. x^T (trace rows plus the final point)."""
    return np.append(np.asarray(trace.grad_norms, dtype=float), trace.final_grad_norm)


def last_k_error(trace, k: int = 30, warn_short: bool = True) -> float:
    """Mean of the last ``k`` gradient norms along the iterate sequence.

    Falls back to the whole sequence when fewer than ``k`` iterates exist,
    warning unless ``warn_short`` is switched off (tuning sweeps cut runs
    short on purpose).
    """
    norms = grad_norm_sequence(trace)
    if k < 1:
        raise UndefinedStatisticError("k must be at least 1")
    if norms.shape[0] < k:
        if warn_short:
            warnings.warn(
                f"trace has only {norms.shape[0]} iterates, averaging all of them instead of {k}",
                stacklevel=2,
            )
        return float(norms.mean())
    return float(norms[-k:].mean())


def weighted_grad_norm_average(trace, weights: str = "uniform") -> float:
    """Weighted average of squared gradient norms over the recorded iterations.

    ``weights`` is one of "uniform", "assigned_count" (number of jobs handed
    out at each step) or "stepsize" (eta_t, which skips dropped gradients).
    """
    squared = np.asarray(trace.grad_norms, dtype=float) ** 2
    if weights == "uniform":
        w = np.ones_like(squared)
    elif weights == "assigned_count":
        w = np.asarray(trace.n_assigned, dtype=float)
    elif weights == "stepsize":
        w = np.asarray(trace.stepsizes, dtype=float)
    else:
        raise UndefinedStatisticError(f"unknown weighting {weights!r}")
    total = w.sum()
    if total <= 0:
        raise UndefinedStatisticError("weights sum to zero; the average is undefined")
    return float((w * squared).sum() / total)


def summary(trace, last_k: int = 30) -> dict:
    """JSON-ready summary of a run: delay statistics, conservation check, errors."""
    ledger = trace.ledger
    check = delay_conservation(ledger)
    avg = average_delay_exact(ledger)
    return {
        "iterations": ledger.total_iterations,
        "converged": bool(trace.converged),
        "diverged": bool(trace.diverged),
        "stop_reason": trace.stop_reason,
        "final_grad_norm": float(trace.final_grad_norm),
        "final_objective_value": float(trace.final_value),
        "error_last30": last_k_error(trace, last_k),
        "tau_avg": float(avg),
        "tau_avg_exact": f"{avg.numerator}/{avg.denominator}",
        "tau_max": max_delay(ledger),
        "avg_concurrency": average_concurrency(ledger),
        "max_concurrency": max_concurrency(ledger),
        "tau_avg_per_client": {
            str(c): v for c, v in average_delay_per_client(ledger).items()
        },
        "delay_conservation": {"lhs": check.lhs, "rhs": check.rhs, "pass": check.passed},
        "in_flight_convention": ledger.in_flight_convention,
        "total_sim_time": float(trace.total_sim_time),
        "gradients_started": int(ledger.concurrency_log[0]) + int(np.sum(trace.n_assigned)),
    }
