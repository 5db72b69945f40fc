import math
from fractions import Fraction

import numpy as np
import pytest

from asgdsim import (
    ConstantStepsize,
    ConstantTime,
    CustomSelection,
    FaultInjection,
    InvalidConfigError,
    InvalidSelectionError,
    InvalidSpecError,
    LogNormalTime,
    MaxConcurrency,
    MiniBatch,
    NoiseModel,
    SampledMiniBatch,
    SimState,
    SimulationDeadlockError,
    StopRule,
    StragglerTime,
    UniformClientSampling,
    WorkerModel,
    advance_event,
    constant_fleet,
    make_heterogeneous,
    make_quadratic,
    run_heterogeneous,
    run_homogeneous,
)
from asgdsim import metrics


QUAD = make_quadratic(4, 1.0, 2.0, seed=7)
NO_NOISE = NoiseModel(0.0)
X0 = np.zeros(4)


def simple_run(workers, policy, max_iterations, stepsize=None, seed=0, **kwargs):
    return run_homogeneous(
        QUAD, NO_NOISE, workers, policy, stepsize or ConstantStepsize(0.1),
        X0, StopRule(max_iterations=max_iterations), master_seed=seed, **kwargs)


class TestTimeModels:
    def test_constant_needs_positive_delta(self):
        with pytest.raises(InvalidConfigError):
            ConstantTime(0.0)

    def test_lognormal_samples_positive(self):
        model = LogNormalTime(mu=0.0, sigma=1.5)
        rng = np.random.default_rng(0)
        assert all(model.sample(rng) > 0 for _ in range(100))

    def test_straggler_hits_slow_branch_at_given_rate(self):
        model = StragglerTime(delta=1.0, slow_factor=50.0, straggle_prob=0.25)
        rng = np.random.default_rng(1)
        draws = [model.sample(rng) for _ in range(4000)]
        slow = sum(1 for d in draws if d == 50.0)
        assert set(draws) == {1.0, 50.0}
        assert slow / 4000 == pytest.approx(0.25, abs=0.03)

    def test_straggler_validation(self):
        with pytest.raises(InvalidConfigError):
            StragglerTime(1.0, 0.5, 0.1)  # slowdown below 1 is not a straggler
        with pytest.raises(InvalidConfigError):
            StragglerTime(1.0, 2.0, 1.5)

    def test_constant_fleet_assigns_sequential_ids(self):
        fleet = constant_fleet([1.0, 2.5, 4.0])
        assert [w.worker_id for w in fleet] == [0, 1, 2]
        assert [w.compute_time.delta for w in fleet] == [1.0, 2.5, 4.0]


class TestHandSchedules:
    def test_serial_worker_has_zero_delays(self):
        trace = simple_run(constant_fleet([1.0]), MaxConcurrency(), 5)
        assert list(trace.delays) == [0, 0, 0, 0, 0]
        assert list(trace.concurrency) == [1, 1, 1, 1, 1]
        assert trace.total_sim_time == 5.0
        assert metrics.average_delay_exact(trace.ledger) == 0

    def test_two_equal_workers_alternate(self):
        trace = simple_run(constant_fleet([1.0, 1.0]), MaxConcurrency(), 6)
        # ties at every integer time break toward the lower worker id
        assert list(trace.worker_ids) == [0, 1, 0, 1, 0, 1]
        assert list(trace.delays) == [0, 1, 1, 1, 1, 1]
        assert list(trace.sim_times) == [1.0, 1.0, 2.0, 2.0, 3.0, 3.0]

    def test_straggler_delay_equals_slowdown(self):
        trace = simple_run(constant_fleet([1.0, 4.0]), MaxConcurrency(), 12)
        assert metrics.max_delay(trace.ledger) == 4
        # the slow worker lands every 4 iterations with delay exactly 4
        slow_rows = [t for t in range(12) if trace.worker_ids[t] == 1]
        assert all(trace.delays[t] == 4 for t in slow_rows)

    def test_minibatch_of_two_delays_alternate_zero_one(self):
        trace = simple_run(constant_fleet([1.0, 1.0]), MiniBatch(batch_size=2), 4)
        assert list(trace.delays) == [0, 1, 0, 1]
        assert metrics.average_delay_exact(trace.ledger) == Fraction(2, 5)
        # both jobs of a batch are handed out together, after the batch is done
        assert list(trace.n_assigned) == [0, 2, 0, 2]

    def test_minibatch_average_delay_approaches_half_batch(self):
        n = 4
        trace = simple_run(constant_fleet([1.0] * n), MiniBatch(batch_size=n), 400)
        # per full batch the delays are 0, 1, ..., n-1
        assert float(np.mean(trace.delays)) == pytest.approx((n - 1) / 2, abs=1e-12)

    def test_minibatch_size_must_match_fleet(self):
        with pytest.raises(InvalidConfigError):
            simple_run(constant_fleet([1.0, 1.0]), MiniBatch(batch_size=3), 4)


class TestConservation:
    @pytest.mark.parametrize("workers,policy,T", [
        (constant_fleet([1.0]), MaxConcurrency(), 3),
        (constant_fleet([1.0, 1.0]), MaxConcurrency(), 7),
        (constant_fleet([1.0, 3.0, 5.5]), MaxConcurrency(), 23),
        (constant_fleet([1.0, 1.0]), MiniBatch(batch_size=2), 4),
        (constant_fleet([2.0, 1.0, 1.0, 1.0]), SampledMiniBatch(batch_size=3), 31),
        (constant_fleet([1.0, 2.0, 3.0]), UniformClientSampling(concurrency=5), 40),
    ])
    def test_ledger_identity_holds(self, workers, policy, T):
        trace = simple_run(workers, policy, T, seed=5)
        check = metrics.delay_conservation(trace.ledger)
        assert check.passed, f"lhs={check.lhs} rhs={check.rhs}"

    def test_serial_constants(self):
        trace = simple_run(constant_fleet([1.0]), MaxConcurrency(), 3)
        check = metrics.delay_conservation(trace.ledger)
        assert (check.lhs, check.rhs) == (4, 4)

    def test_off_by_one_fault_breaks_identity(self):
        trace = simple_run(constant_fleet([1.0, 1.0]), MaxConcurrency(), 6,
                           faults=FaultInjection(delay_off_by_one=True))
        assert not metrics.delay_conservation(trace.ledger).passed


class TestCustomSelection:
    def test_table_schedule_is_followed(self):
        # three workers seeded together; nobody reassigned at step 0, the two
        # now-idle workers handed fresh jobs at step 1, nobody at step 2
        policy = CustomSelection(table=((), (0, 1), ()))
        trace = simple_run(constant_fleet([1.0, 2.0, 3.0]), policy, 3)
        assert list(trace.n_assigned) == [0, 2, 0]

    def test_duplicate_selection_rejected(self):
        policy = CustomSelection(table=((0, 0),))
        with pytest.raises(InvalidSelectionError):
            simple_run(constant_fleet([1.0, 2.0]), policy, 2)

    def test_busy_worker_rejected(self):
        # worker 1 needs 5 time units; reassigning it at step 0 double-books it
        policy = CustomSelection(table=((1,),))
        with pytest.raises(InvalidSelectionError, match="still computing"):
            simple_run(constant_fleet([1.0, 5.0]), policy, 2)

    def test_unknown_worker_rejected(self):
        policy = CustomSelection(table=((9,),))
        with pytest.raises(InvalidSelectionError):
            simple_run(constant_fleet([1.0, 2.0]), policy, 2)

    def test_starved_queue_deadlocks(self):
        policy = CustomSelection(table=())  # never assign anything new
        with pytest.raises(SimulationDeadlockError):
            simple_run(constant_fleet([1.0, 1.0]), policy, 10)

    def test_callback_receives_state(self):
        seen = []

        def select(step, state):
            seen.append((step, state.in_flight_count))
            return [step % 2]

        trace = simple_run(constant_fleet([1.0, 1.0]), CustomSelection(select=select), 4)
        assert len(trace) == 4
        assert [s for s, _ in seen] == [0, 1, 2, 3]

    def test_needs_exactly_one_of_table_or_select(self):
        with pytest.raises(InvalidConfigError):
            simple_run(constant_fleet([1.0]), CustomSelection(), 1)
        with pytest.raises(InvalidConfigError):
            simple_run(constant_fleet([1.0]),
                       CustomSelection(table=((),), select=lambda s, st: []), 1)


class TestClientSampling:
    def test_pile_up_queues_jobs_fifo(self):
        # single very slow client sampled repeatedly: jobs must finish in
        # assignment order, spaced by the full compute time
        policy = UniformClientSampling(concurrency=3)
        trace = run_homogeneous(
            QUAD, NO_NOISE, constant_fleet([10.0]), policy, ConstantStepsize(0.01),
            X0, StopRule(max_iterations=5), master_seed=2)
        assert list(trace.sim_times) == [10.0, 20.0, 30.0, 40.0, 50.0]
        assert list(trace.client_ids) == [0, 0, 0, 0, 0]

    def test_concurrency_is_preserved(self):
        policy = UniformClientSampling(concurrency=4)
        trace = simple_run(constant_fleet([1.0, 2.0, 3.0]), policy, 30, seed=9)
        assert list(trace.concurrency) == [4] * 30
        assert trace.ledger.concurrency_log == [4] * 31

    def test_sampling_counts_every_assignment(self):
        policy = UniformClientSampling(concurrency=2)
        trace = simple_run(constant_fleet([1.0, 1.0, 1.0]), policy, 20, seed=3)
        # 2 seed jobs plus one per applied gradient
        assert sum(trace.ledger.samples_per_client.values()) == 22

    def test_sampled_minibatch_draws_with_replacement(self):
        # batch size above the fleet size is legal for the sampled variant
        policy = SampledMiniBatch(batch_size=5)
        trace = simple_run(constant_fleet([1.0, 2.0]), policy, 10, seed=4)
        assert metrics.delay_conservation(trace.ledger).passed
        assert trace.ledger.concurrency_log[0] == 5


class TestStopRules:
    def test_grad_tol_stops_early(self):
        trace = run_homogeneous(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                                ConstantStepsize(0.2), X0,
                                StopRule(max_iterations=10_000, grad_tol=1e-8))
        assert trace.stop_reason == "target"
        assert trace.converged
        assert trace.final_grad_norm <= 1e-8

    def test_last_k_needs_a_full_window(self):
        # the window mean can only fire once last_k iterates exist, so a run
        # that starts at the optimum still performs last_k iterations
        x_star = np.linalg.solve(QUAD.matrix_a, QUAD.vector_b)
        trace = run_homogeneous(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                                ConstantStepsize(0.1), x_star,
                                StopRule(max_iterations=100, last_k_tol=1e-10, last_k=30))
        assert trace.stop_reason == "target"
        # x_0 counts toward the window, so 29 updates complete it
        assert len(trace) == 29

    def test_divergence_detected(self):
        trace = run_homogeneous(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                                ConstantStepsize(10.0), X0,
                                StopRule(max_iterations=10_000, diverge_above=1e8))
        assert trace.diverged
        assert trace.stop_reason == "diverged"
        assert not trace.converged

    def test_cap_without_target_counts_as_complete(self):
        trace = simple_run(constant_fleet([1.0]), MaxConcurrency(), 7)
        assert trace.stop_reason == "cap"
        assert trace.converged

    def test_cap_with_target_is_not_converged(self):
        trace = run_homogeneous(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                                ConstantStepsize(1e-9), X0,
                                StopRule(max_iterations=50, grad_tol=1e-12))
        assert trace.stop_reason == "cap"
        assert not trace.converged

    def test_quiescent_stop_waits_for_inflight_straggler(self):
        # without the quiescence requirement the run stops before the slow
        # worker's first (still huge) gradient lands
        stop_plain = StopRule(max_iterations=5_000, last_k_tol=1e-3, last_k=30)
        stop_quiet = StopRule(max_iterations=5_000, last_k_tol=1e-3, last_k=30,
                              require_quiescent=True)
        fleet = constant_fleet([1.0, 200.0])
        plain = run_homogeneous(QUAD, NO_NOISE, fleet, MaxConcurrency(),
                                ConstantStepsize(0.1), X0, stop_plain)
        quiet = run_homogeneous(QUAD, NO_NOISE, fleet, MaxConcurrency(),
                                ConstantStepsize(0.1), X0, stop_quiet)
        assert plain.converged and metrics.max_delay(plain.ledger) < 200
        assert quiet.converged and metrics.max_delay(quiet.ledger) == 200
        assert len(quiet) > len(plain)

    def test_stall_detector_ends_oscillating_run(self):
        # stepsize far above the stability threshold but kept finite by the
        # divergence guard being loose: the stall check must end the run
        trace = run_homogeneous(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                                ConstantStepsize(0.5000001), X0,
                                StopRule(max_iterations=100_000, last_k_tol=1e-300,
                                         last_k=10, diverge_above=1e280,
                                         stall_window=200))
        assert trace.stop_reason in ("stalled", "diverged")
        assert len(trace) < 100_000

    def test_stall_requires_window_tolerance(self):
        with pytest.raises(InvalidConfigError):
            StopRule(max_iterations=10, stall_window=5)


class TestDeterminism:
    def test_same_seed_same_trace(self):
        fleet = [WorkerModel(0, LogNormalTime(0.0, 0.5)),
                 WorkerModel(1, StragglerTime(1.0, 30.0, 0.1))]
        runs = [
            run_homogeneous(QUAD, NoiseModel(0.3), fleet, MaxConcurrency(),
                            ConstantStepsize(0.05), X0,
                            StopRule(max_iterations=60), master_seed=17)
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0].grad_norms, runs[1].grad_norms)
        np.testing.assert_array_equal(runs[0].sim_times, runs[1].sim_times)
        np.testing.assert_array_equal(runs[0].final_x, runs[1].final_x)

    def test_different_seed_differs(self):
        fleet = [WorkerModel(0, LogNormalTime(0.0, 0.5))]
        a = run_homogeneous(QUAD, NoiseModel(0.3), fleet, MaxConcurrency(),
                            ConstantStepsize(0.05), X0,
                            StopRule(max_iterations=40), master_seed=1)
        b = run_homogeneous(QUAD, NoiseModel(0.3), fleet, MaxConcurrency(),
                            ConstantStepsize(0.05), X0,
                            StopRule(max_iterations=40), master_seed=2)
        assert not np.array_equal(a.grad_norms, b.grad_norms)

    def test_worker_noise_streams_are_independent_of_fleet_size(self):
        # adding a slow second worker must not change what the first one draws
        solo = run_homogeneous(QUAD, NoiseModel(0.2), constant_fleet([1.0]),
                               MaxConcurrency(), ConstantStepsize(0.05), X0,
                               StopRule(max_iterations=30), master_seed=11)
        pair = run_homogeneous(QUAD, NoiseModel(0.2), constant_fleet([1.0, 900.0]),
                               MaxConcurrency(), ConstantStepsize(0.05), X0,
                               StopRule(max_iterations=30), master_seed=11)
        np.testing.assert_array_equal(solo.grad_norms, pair.grad_norms)

    def test_inverted_ties_change_the_schedule(self):
        fleet = constant_fleet([1.0, 1.0])
        clean = simple_run(fleet, MaxConcurrency(), 6)
        flipped = simple_run(fleet, MaxConcurrency(), 6,
                             faults=FaultInjection(invert_ties=True))
        assert list(clean.worker_ids) == [0, 1, 0, 1, 0, 1]
        assert list(flipped.worker_ids) == [1, 0, 1, 0, 1, 0]


class TestTraceAndState:
    def test_csv_round_trip_preserves_floats(self, tmp_path):
        trace = simple_run(constant_fleet([1.0, 2.0]), MaxConcurrency(), 8, seed=3)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(trace.CSV_COLUMNS)
        assert len(lines) == 9
        row = lines[3].split(",")
        assert int(row[0]) == 2
        assert float(row[5]) == trace.grad_norms[2]

    def test_record_iterates_keeps_every_point(self):
        trace = simple_run(constant_fleet([1.0]), MaxConcurrency(), 5,
                           record_iterates=True)
        assert len(trace.iterates) == 6
        np.testing.assert_array_equal(trace.iterates[0], X0)
        np.testing.assert_array_equal(trace.iterates[-1], trace.final_x)

    def test_gradient_norm_column_is_pre_update(self):
        trace = simple_run(constant_fleet([1.0]), MaxConcurrency(), 3)
        assert trace.grad_norms[0] == pytest.approx(
            float(np.linalg.norm(QUAD.gradient(X0))), rel=1e-15)

    def test_manual_stepping_matches_run(self):
        state = SimState(QUAD, NO_NOISE, constant_fleet([1.0, 2.0]), MaxConcurrency(),
                         ConstantStepsize(0.1), X0, master_seed=3)
        for _ in range(8):
            advance_event(state)
        trace = state.finalize("cap", True)
        full = simple_run(constant_fleet([1.0, 2.0]), MaxConcurrency(), 8, seed=3)
        np.testing.assert_array_equal(trace.grad_norms, full.grad_norms)
        np.testing.assert_array_equal(trace.delays, full.delays)

    def test_in_flight_view_is_sorted_and_consistent(self):
        state = SimState(QUAD, NO_NOISE, constant_fleet([1.0, 5.0]), MaxConcurrency(),
                         ConstantStepsize(0.1), X0)
        advance_event(state)
        jobs = state.in_flight_jobs()
        assert len(jobs) == state.in_flight_count == 2
        assert jobs[0].finish_time <= jobs[1].finish_time
        assert {j.worker_id for j in jobs} == {0, 1}

    def test_bad_x0_rejected(self):
        with pytest.raises(InvalidConfigError):
            SimState(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                     ConstantStepsize(0.1), np.zeros(3))
        with pytest.raises(InvalidConfigError):
            SimState(QUAD, NO_NOISE, constant_fleet([1.0]), MaxConcurrency(),
                     ConstantStepsize(0.1), np.array([1.0, np.inf, 0.0, 0.0]))

    def test_worker_ids_must_be_dense(self):
        bad = [WorkerModel(0, ConstantTime(1.0)), WorkerModel(2, ConstantTime(1.0))]
        with pytest.raises(InvalidConfigError):
            SimState(QUAD, NO_NOISE, bad, MaxConcurrency(), ConstantStepsize(0.1), X0)


class TestHeterogeneousRuns:
    def test_family_requires_one_worker_per_client(self):
        fam = make_heterogeneous(QUAD, 3, 0.5, seed=1)
        with pytest.raises(InvalidConfigError):
            run_heterogeneous(fam, NO_NOISE, constant_fleet([1.0, 1.0]), 2,
                              ConstantStepsize(0.05), X0, StopRule(max_iterations=5))

    def test_family_rejected_by_homogeneous_entry(self):
        fam = make_heterogeneous(QUAD, 2, 0.5, seed=1)
        with pytest.raises(InvalidConfigError):
            run_homogeneous(fam, NO_NOISE, constant_fleet([1.0, 1.0]), MaxConcurrency(),
                            ConstantStepsize(0.05), X0, StopRule(max_iterations=5))

    def test_plain_objective_rejected_by_heterogeneous_entry(self):
        with pytest.raises(InvalidConfigError):
            run_heterogeneous(QUAD, NO_NOISE, constant_fleet([1.0]), 1,
                              ConstantStepsize(0.05), X0, StopRule(max_iterations=5))

    def test_zero_heterogeneity_matches_base_objective(self):
        fam = make_heterogeneous(QUAD, 3, 0.0, seed=1)
        fleet = constant_fleet([1.0, 1.0, 1.0])
        het = run_heterogeneous(fam, NO_NOISE, fleet, 3, ConstantStepsize(0.05), X0,
                                StopRule(max_iterations=25), master_seed=6)
        hom = run_homogeneous(QUAD, NO_NOISE, fleet, UniformClientSampling(3),
                              ConstantStepsize(0.05), X0,
                              StopRule(max_iterations=25), master_seed=6)
        np.testing.assert_array_equal(het.grad_norms, hom.grad_norms)

    def test_per_client_delay_statistics_recorded(self):
        fam = make_heterogeneous(QUAD, 3, 1.0, seed=2)
        trace = run_heterogeneous(fam, NO_NOISE, constant_fleet([1.0, 2.0, 5.0]), 4,
                                  ConstantStepsize(0.02), X0,
                                  StopRule(max_iterations=60), master_seed=8)
        per_client = metrics.average_delay_per_client(trace.ledger)
        assert set(per_client) <= {0, 1, 2}
        assert metrics.delay_conservation(trace.ledger).passed
