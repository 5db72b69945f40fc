"""Deterministic discrete-event simulator for asynchronous SGD with delays.

One server iteration applies exactly one finished gradient: the in-flight
job with the earliest simulated finish time (ties broken by lowest worker
id, then assignment order) is popped, the iterate moves by
``x <- x - eta_t * g`` where ``g`` was evaluated at the job's assignment
point, and the scheduling policy hands out new jobs evaluated at the fresh
iterate.  Server-side work takes zero simulated time; only worker compute
times advance the clock.

Delays are exact integers: a job assigned at iteration s and applied at
iteration t has delay t - s.  Jobs queued on a busy worker (sampled
policies allow that) wait FIFO behind it, and their delay keeps growing
while they wait, so the active set is a true multiset.

Policies:

* ``MaxConcurrency``         reassign the finishing worker immediately.
* ``MiniBatch``              all workers compute at the same point; the
                             batch is refilled only once every gradient of
                             the previous batch has been applied.
* ``SampledMiniBatch``       like ``MiniBatch`` but each batch draws its
                             clients uniformly with replacement.
* ``UniformClientSampling``  constant concurrency; each applied gradient
                             triggers one uniform client draw, busy clients
                             simply accumulate queued jobs.
* ``CustomSelection``        caller-provided assignment table or callback.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from heapq import heappop, heappush
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InvalidConfigError,
    InvalidSelectionError,
    SimulationDeadlockError,
)
from .metrics import DelayLedger
from .objectives import HeterogeneousFamily, NoiseModel
from .rng import named_stream

Array = np.ndarray


# ---------------------------------------------------------------------------
# worker models


@dataclass(frozen=True)
class ConstantTime:
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidConfigError(f"compute time must be positive, got {self.delta}")

    def sample(self, rng: np.random.Generator) -> float:
        return self.delta


@dataclass(frozen=True)
class LogNormalTime:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidConfigError(f"lognormal sigma must be non-negative, got {self.sigma}")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.lognormal(self.mu, self.sigma))


@dataclass(frozen=True)
class StragglerTime:
    """Constant time ``delta`` that stretches by ``slow_factor`` with some probability."""

    delta: float
    slow_factor: float
    straggle_prob: float

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidConfigError(f"compute time must be positive, got {self.delta}")
        if self.slow_factor < 1:
            raise InvalidConfigError(f"slow_factor must be at least 1, got {self.slow_factor}")
        if not 0 <= self.straggle_prob <= 1:
            raise InvalidConfigError(f"straggle_prob must lie in [0, 1], got {self.straggle_prob}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.straggle_prob > 0 and rng.random() < self.straggle_prob:
            return self.delta * self.slow_factor
        return self.delta


@dataclass(frozen=True)
class WorkerModel:
    worker_id: int
    compute_time: ConstantTime | LogNormalTime | StragglerTime


def constant_fleet(deltas: Sequence[float]) -> list[WorkerModel]:
    """Workers 0..n-1 with the given constant compute times."""
    return [WorkerModel(i, ConstantTime(float(d))) for i, d in enumerate(deltas)]


# ---------------------------------------------------------------------------
# scheduling policies


@dataclass(frozen=True)
class MaxConcurrency:
    """Keep every worker busy: the finishing worker is reassigned at once."""

    worker_ids: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class MiniBatch:
    """Synchronous minibatch: refill all workers after a full batch is applied."""

    batch_size: int


@dataclass(frozen=True)
class SampledMiniBatch:
    """Minibatch whose members are drawn uniformly with replacement per batch."""

    batch_size: int


@dataclass(frozen=True)
class UniformClientSampling:
    """Constant-concurrency sampling: one uniform client draw per applied gradient."""

    concurrency: int


@dataclass(frozen=True)
class CustomSelection:
    """Assignments supplied by the caller.

    Exactly one of ``table`` (list indexed by applied-step, exhausted steps
    assign nothing) or ``select`` (callback ``(step, state) -> worker ids``)
    must be given.  ``initial`` lists the workers seeded before iteration 0
    and defaults to all of them.
    """

    table: Optional[Sequence[Sequence[int]]] = None
    select: Optional[Callable[[int, "SimState"], Sequence[int]]] = None
    initial: Optional[tuple[int, ...]] = None


MULTISET_POLICIES = (SampledMiniBatch, UniformClientSampling)


# ---------------------------------------------------------------------------
# stop rules and fault hooks


@dataclass(frozen=True)
class StopRule:
    """When to stop a run.

    ``max_iterations`` always applies.  ``grad_tol`` stops on the
    instantaneous gradient norm; ``last_k_tol`` stops once the trailing mean
    of the last ``last_k`` gradient norms drops below it.  A run whose
    objective value or gradient norm exceeds ``diverge_above`` (or turns
    non-finite) stops immediately and is flagged diverged.

    ``require_quiescent`` withholds the target verdict while any in-flight
    job still carries a gradient whose norm exceeds the triggered tolerance.
    Without it, a run with a slow straggler can report convergence while a
    large stale gradient is still on its way, about to undo the accuracy the
    stop rule just certified.  Meant for noiseless runs; with stochastic
    noise the in-flight norms never fall below a tight tolerance.

    ``stall_window`` stops runs that are going nowhere: every that many
    iterations, the trailing-``last_k`` mean must have dropped by a relative
    ``stall_improvement`` since the previous checkpoint, or the run ends
    with reason "stalled".  Objectives with bounded values (logistic) never
    trip a divergence threshold, so an unstable stepsize would otherwise
    oscillate until the iteration cap.
    """

    max_iterations: int
    grad_tol: Optional[float] = None
    last_k_tol: Optional[float] = None
    last_k: int = 30
    diverge_above: float = 1e100
    require_quiescent: bool = False
    stall_window: Optional[int] = None
    stall_improvement: float = 1e-3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidConfigError(
                f"max_iterations must be at least 1, got {self.max_iterations}"
            )
        if self.last_k < 1:
            raise InvalidConfigError(f"last_k must be at least 1, got {self.last_k}")
        if self.stall_window is not None:
            if self.last_k_tol is None:
                raise InvalidConfigError(
                    "stall_window needs last_k_tol: the stall check compares "
                    "trailing window means"
                )
            if self.stall_window < 1:
                raise InvalidConfigError(
                    f"stall_window must be at least 1, got {self.stall_window}"
                )

    @property
    def has_target(self) -> bool:
        return self.grad_tol is not None or self.last_k_tol is not None


@dataclass(frozen=True)
class FaultInjection:
    """Deliberate corruption hooks used by the verification suite's mutation tests."""

    invert_ties: bool = False
    delay_off_by_one: bool = False


# ---------------------------------------------------------------------------
# trace


@dataclass
class RunTrace:
    """Per-iteration record of a run plus its delay ledger.

    Row t holds the state just before server update t: the gradient norm and
    objective value at x^t, the applied job's worker/client/delay/stepsize,
    the simulated clock at application, the number of jobs handed out at that
    step and |C_t|.
    """

    worker_ids: Array
    client_ids: Array
    delays: Array
    stepsizes: Array
    grad_norms: Array
    objective_values: Array
    sim_times: Array
    n_assigned: Array
    concurrency: Array
    final_x: Array
    final_value: float
    final_grad_norm: float
    total_sim_time: float
    stop_reason: str
    converged: bool
    diverged: bool
    ledger: DelayLedger
    iterates: Optional[list[Array]] = None

    def __len__(self) -> int:
        return self.worker_ids.shape[0]

    CSV_COLUMNS = (
        "t", "worker_id", "client_id", "delay", "stepsize", "grad_norm",
        "objective_value", "sim_time", "n_assigned", "concurrency",
    )

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(self.CSV_COLUMNS)
            for t in range(len(self)):
                writer.writerow(
                    (
                        t,
                        int(self.worker_ids[t]),
                        int(self.client_ids[t]),
                        int(self.delays[t]),
                        repr(float(self.stepsizes[t])),
                        repr(float(self.grad_norms[t])),
                        repr(float(self.objective_values[t])),
                        repr(float(self.sim_times[t])),
                        int(self.n_assigned[t]),
                        int(self.concurrency[t]),
                    )
                )


@dataclass(frozen=True)
class InFlightJob:
    """Read-only view of one assigned-but-unapplied job."""

    worker_id: int
    client_id: int
    start_iteration: int
    finish_time: float


# ---------------------------------------------------------------------------
# simulation state

# heap entries: (finish_time, tie_key, seq, worker_id, client_id, start_iteration, grad)


class SimState:
    """Mutable state of one simulation; advanced one server iteration at a time."""

    def __init__(
        self,
        objective,
        noise: NoiseModel,
        workers: Sequence[WorkerModel],
        policy,
        stepsize,
        x0: Array,
        master_seed: int = 0,
        record_iterates: bool = False,
        track_last_k: Optional[int] = None,
        faults: Optional[FaultInjection] = None,
    ):
        if not workers:
            raise InvalidConfigError("need at least one worker")
        ids = [w.worker_id for w in workers]
        if ids != list(range(len(workers))):
            raise InvalidConfigError("worker ids must be 0..n-1 in order")
        self.objective = objective
        self.noise = noise
        self.workers = list(workers)
        self.policy = policy
        self.stepsize = stepsize
        self.faults = faults or FaultInjection()

        self.x = np.array(x0, dtype=float)
        if self.x.ndim != 1:
            raise InvalidConfigError("x0 must be a 1-d vector")
        if not np.all(np.isfinite(self.x)):
            raise InvalidConfigError("x0 must be finite")
        if self.x.shape[0] != objective.dim:
            raise InvalidConfigError(
                f"x0 has dimension {self.x.shape[0]} but the objective expects {objective.dim}"
            )

        self._shifts = objective.shifts if isinstance(objective, HeterogeneousFamily) else None
        if self._shifts is not None and len(workers) != objective.n_clients:
            raise InvalidConfigError(
                f"{objective.n_clients} clients in the family but {len(workers)} workers"
            )

        self.t = 0
        self.sim_time = 0.0
        self.cur_value, self.cur_grad = objective.value_and_gradient(self.x)
        self.cur_grad_norm = math.sqrt(float(self.cur_grad @ self.cur_grad))

        self._heap: list = []
        self._seq = 0
        self._free_at = [0.0] * len(workers)
        self._busy = [0] * len(workers)
        self._delay_rng = named_stream(master_seed, "delay-model")
        self._client_rng = named_stream(master_seed, "client-sampling")
        self._noise_rngs = {
            w.worker_id: named_stream(master_seed, f"noise-worker-{w.worker_id}")
            for w in workers
        }
        self._noise_scale = (
            noise.sigma / math.sqrt(self.x.shape[0]) if noise.sigma > 0 else 0.0
        )

        # trace columns
        self._col_worker: list[int] = []
        self._col_client: list[int] = []
        self._col_delay: list[int] = []
        self._col_eta: list[float] = []
        self._col_grad_norm: list[float] = []
        self._col_value: list[float] = []
        self._col_sim_time: list[float] = []
        self._col_assigned: list[int] = []
        self._col_concurrency: list[int] = []

        # ledger pieces
        self._applied_delays: list[int] = []
        self._applied_clients: list[int] = []
        self._samples: dict[int, int] = {}
        self.concurrency_log: list[int] = []

        self.iterates: Optional[list[Array]] = [self.x] if record_iterates else None
        self._last_k = deque(maxlen=track_last_k) if track_last_k else None
        if self._last_k is not None:
            self._last_k.append(self.cur_grad_norm)
        self._stall_ref_mean: Optional[float] = None
        self._stall_next_t = 0

        self._seed_initial_jobs()
        self.concurrency_log.append(len(self._heap))

    # -- assignment ---------------------------------------------------------

    def _tie_key(self, worker_id: int) -> int:
        return -worker_id if self.faults.invert_ties else worker_id

    def _assign(self, worker_id: int, client_id: int) -> None:
        model = self.workers[worker_id]
        duration = model.compute_time.sample(self._delay_rng)
        begin = max(self.sim_time, self._free_at[worker_id])
        finish = begin + duration
        self._free_at[worker_id] = finish
        grad = self.cur_grad if self._shifts is None else self.cur_grad + self._shifts[client_id]
        if self._noise_scale > 0.0:
            grad = grad + self._noise_scale * self._noise_rngs[worker_id].standard_normal(
                self.x.shape[0]
            )
        heappush(
            self._heap,
            (finish, self._tie_key(worker_id), self._seq, worker_id, client_id, self.t, grad),
        )
        self._seq += 1
        self._busy[worker_id] += 1
        self._samples[client_id] = self._samples.get(client_id, 0) + 1

    def _seed_initial_jobs(self) -> None:
        policy = self.policy
        n = len(self.workers)
        if isinstance(policy, MaxConcurrency):
            ids = sorted(policy.worker_ids) if policy.worker_ids else range(n)
            for w in ids:
                self._check_known(w)
                self._assign(w, w)
        elif isinstance(policy, MiniBatch):
            if policy.batch_size != n:
                raise InvalidConfigError(
                    f"minibatch size {policy.batch_size} must equal the fleet size {n}"
                )
            for w in range(n):
                self._assign(w, w)
        elif isinstance(policy, SampledMiniBatch):
            if policy.batch_size < 1:
                raise InvalidConfigError("batch_size must be at least 1")
            for c in self._client_rng.integers(0, n, size=policy.batch_size):
                self._assign(int(c), int(c))
        elif isinstance(policy, UniformClientSampling):
            if policy.concurrency < 1:
                raise InvalidConfigError("concurrency must be at least 1")
            for c in self._client_rng.integers(0, n, size=policy.concurrency):
                self._assign(int(c), int(c))
        elif isinstance(policy, CustomSelection):
            if (policy.table is None) == (policy.select is None):
                raise InvalidConfigError("custom policy needs exactly one of table or select")
            ids = sorted(policy.initial) if policy.initial else range(n)
            for w in ids:
                self._check_known(w)
                self._assign(w, w)
        else:
            raise InvalidConfigError(f"unknown policy {policy!r}")

    def _check_known(self, worker_id: int) -> None:
        if not 0 <= worker_id < len(self.workers):
            raise InvalidSelectionError(f"worker {worker_id} does not exist")

    def _select_new_jobs(self, applied_step: int, applied_worker: int) -> list[tuple[int, int]]:
        policy = self.policy
        n = len(self.workers)
        if isinstance(policy, MaxConcurrency):
            return [(applied_worker, applied_worker)]
        if isinstance(policy, MiniBatch):
            if self.t % policy.batch_size == 0:
                return [(w, w) for w in range(n)]
            return []
        if isinstance(policy, SampledMiniBatch):
            if self.t % policy.batch_size == 0:
                draws = self._client_rng.integers(0, n, size=policy.batch_size)
                return [(int(c), int(c)) for c in draws]
            return []
        if isinstance(policy, UniformClientSampling):
            c = int(self._client_rng.integers(0, n))
            return [(c, c)]
        # custom
        if policy.table is not None:
            chosen = policy.table[applied_step] if applied_step < len(policy.table) else ()
        else:
            chosen = policy.select(applied_step, self)
        chosen = [int(w) for w in chosen]
        if len(set(chosen)) != len(chosen):
            raise InvalidSelectionError(f"duplicate workers selected at step {applied_step}")
        for w in sorted(chosen):
            self._check_known(w)
        return [(w, w) for w in sorted(chosen)]

    # -- views ----------------------------------------------------------------

    @property
    def in_flight_count(self) -> int:
        return len(self._heap)

    def in_flight_jobs(self) -> list[InFlightJob]:
        return [
            InFlightJob(entry[3], entry[4], entry[5], entry[0]) for entry in sorted(self._heap)
        ]

    # -- finalization -----------------------------------------------------------

    def finalize(self, stop_reason: str, converged: bool) -> RunTrace:
        remaining = sorted(self._heap)
        active_starts = [entry[5] for entry in remaining]
        active_clients = [entry[4] for entry in remaining]
        excluded = 0 if remaining else None
        ledger = DelayLedger(
            total_iterations=self.t,
            applied_delays=self._applied_delays,
            applied_clients=self._applied_clients,
            active_start_iterations=active_starts,
            active_clients=active_clients,
            concurrency_log=self.concurrency_log,
            samples_per_client=dict(sorted(self._samples.items())),
            excluded_active_index=excluded,
        )
        return RunTrace(
            worker_ids=np.array(self._col_worker, dtype=int),
            client_ids=np.array(self._col_client, dtype=int),
            delays=np.array(self._col_delay, dtype=int),
            stepsizes=np.array(self._col_eta, dtype=float),
            grad_norms=np.array(self._col_grad_norm, dtype=float),
            objective_values=np.array(self._col_value, dtype=float),
            sim_times=np.array(self._col_sim_time, dtype=float),
            n_assigned=np.array(self._col_assigned, dtype=int),
            concurrency=np.array(self._col_concurrency, dtype=int),
            final_x=self.x,
            final_value=self.cur_value,
            final_grad_norm=self.cur_grad_norm,
            total_sim_time=self.sim_time,
            stop_reason=stop_reason,
            converged=converged,
            diverged=stop_reason == "diverged",
            ledger=ledger,
            iterates=self.iterates,
        )


def advance_event(state: SimState) -> SimState:
    """Apply the next finished gradient and hand out new work (one iteration)."""
    if not state._heap:
        raise SimulationDeadlockError(
            f"no jobs in flight at iteration {state.t}; the policy starved the queue"
        )
    concurrency_before = len(state._heap)
    finish, _, _, worker_id, client_id, start_iteration, grad = heappop(state._heap)
    state._busy[worker_id] -= 1
    t = state.t
    delay = t - start_iteration
    recorded_delay = delay + 1 if state.faults.delay_off_by_one else delay
    eta = state.stepsize.at(t, delay)

    state._col_worker.append(worker_id)
    state._col_client.append(client_id)
    state._col_delay.append(recorded_delay)
    state._col_eta.append(eta)
    state._col_grad_norm.append(state.cur_grad_norm)
    state._col_value.append(state.cur_value)
    state._col_sim_time.append(finish)
    state._col_concurrency.append(concurrency_before)
    state._applied_delays.append(recorded_delay)
    state._applied_clients.append(client_id)

    state.sim_time = finish
    state.x = state.x - eta * grad
    state.t = t + 1
    state.cur_value, state.cur_grad = state.objective.value_and_gradient(state.x)
    state.cur_grad_norm = math.sqrt(float(state.cur_grad @ state.cur_grad))
    if state.iterates is not None:
        state.iterates.append(state.x)
    if state._last_k is not None:
        state._last_k.append(state.cur_grad_norm)

    selection = state._select_new_jobs(t, worker_id)
    if selection and not isinstance(state.policy, MULTISET_POLICIES):
        for w, _ in selection:
            if state._busy[w] > 0:
                raise InvalidSelectionError(
                    f"worker {w} selected at step {t} while still computing"
                )
    for w, c in selection:
        state._assign(w, c)
    state._col_assigned.append(len(selection))
    state.concurrency_log.append(len(state._heap))
    return state


def _stop_verdict(state: SimState, stop: StopRule) -> Optional[str]:
    if (
        not math.isfinite(state.cur_value)
        or state.cur_value > stop.diverge_above
        or state.cur_grad_norm > stop.diverge_above
    ):
        return "diverged"
    if stop.grad_tol is not None and state.cur_grad_norm <= stop.grad_tol:
        if _quiescent(state, stop, stop.grad_tol):
            return "target"
    if stop.last_k_tol is not None:
        window = state._last_k
        # a mean over the last k iterates needs a full window of k entries
        if window is not None and len(window) == window.maxlen and \
                sum(window) / len(window) <= stop.last_k_tol:
            if _quiescent(state, stop, stop.last_k_tol):
                return "target"
    if stop.stall_window is not None:
        window = state._last_k
        if window is not None and len(window) == window.maxlen \
                and state.t >= state._stall_next_t:
            current = sum(window) / len(window)
            reference = state._stall_ref_mean
            if reference is not None and math.isfinite(reference) \
                    and current > reference * (1.0 - stop.stall_improvement):
                return "stalled"
            state._stall_ref_mean = current
            state._stall_next_t = state.t + stop.stall_window
    if state.t >= stop.max_iterations:
        return "cap"
    return None


def _quiescent(state: SimState, stop: StopRule, tol: float) -> bool:
    if not stop.require_quiescent:
        return True
    return all(float(np.linalg.norm(entry[-1])) <= tol for entry in state._heap)


def _run(
    objective,
    noise: NoiseModel,
    workers: Sequence[WorkerModel],
    policy,
    stepsize,
    x0: Array,
    stop: StopRule,
    master_seed: int,
    record_iterates: bool,
    faults: Optional[FaultInjection],
) -> RunTrace:
    state = SimState(
        objective,
        noise,
        workers,
        policy,
        stepsize,
        x0,
        master_seed=master_seed,
        record_iterates=record_iterates,
        track_last_k=stop.last_k if stop.last_k_tol is not None else None,
        faults=faults,
    )
    while True:
        advance_event(state)
        verdict = _stop_verdict(state, stop)
        if verdict is not None:
            break
    converged = verdict == "target" or (verdict == "cap" and not stop.has_target)
    return state.finalize(verdict, converged)


def run_homogeneous(
    objective,
    noise: NoiseModel,
    workers: Sequence[WorkerModel],
    policy,
    stepsize,
    x0: Array,
    stop: StopRule,
    master_seed: int = 0,
    record_iterates: bool = False,
    faults: Optional[FaultInjection] = None,
) -> RunTrace:
    """Simulate a run where every worker shares one objective."""
    if isinstance(objective, HeterogeneousFamily):
        raise InvalidConfigError("use run_heterogeneous for client families")
    return _run(
        objective, noise, workers, policy, stepsize, x0, stop,
        master_seed, record_iterates, faults,
    )


def run_heterogeneous(
    family: HeterogeneousFamily,
    noise: NoiseModel,
    workers: Sequence[WorkerModel],
    concurrency: int,
    stepsize,
    x0: Array,
    stop: StopRule,
    master_seed: int = 0,
    record_iterates: bool = False,
    faults: Optional[FaultInjection] = None,
) -> RunTrace:
    """Simulate uniform client sampling over a family of client objectives."""
    if not isinstance(family, HeterogeneousFamily):
        raise InvalidConfigError("run_heterogeneous expects a HeterogeneousFamily")
    policy = UniformClientSampling(concurrency)
    return _run(
        family, noise, workers, policy, stepsize, x0, stop,
        master_seed, record_iterates, faults,
    )
