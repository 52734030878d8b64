"""Profiling harness: medians via a scripted clock, table completeness."""

import warnings

import numpy as np
import pytest

from bnntuner import (
    Activation,
    ExecutionEngine,
    IntTensor,
    ParallelConfig,
    UnstableMeasurement,
    profile_layer,
    profile_model,
)
from conftest import random_step_layer


class ScriptedClock:
    """Feeds precooked compute intervals to CPU-path executions.

    A CPU execution reads the clock twice (start/end), so each scripted
    value is returned as the gap of one call pair and the gap between
    executions is zero.
    """

    def __init__(self, compute_intervals):
        self.times = [0]
        for d in compute_intervals:
            self.times.append(self.times[-1] + d)  # interval inside one exec
            self.times.append(self.times[-1])  # no time passes between execs
        self.i = -1

    def __call__(self) -> int:
        self.i += 1
        return self.times[self.i]


@pytest.fixture
def step_case():
    rng = np.random.default_rng(0)
    layer = random_step_layer(rng, (4, 4, 4))
    act = Activation.of_integer(IntTensor((2, 4, 4, 4), rng.integers(-9, 9, (2, 4, 4, 4))))
    return layer, act


class TestProfileLayer:
    def test_median_with_scripted_clock(self, step_case):
        layer, act = step_case
        clock = ScriptedClock([10, 11, 9, 50, 10])
        with ExecutionEngine(workers=1, clock=clock) as engine:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # the 50-spike trips the spread warning
                entry = profile_layer(engine, layer, act, ParallelConfig.CPU, 2, warmups=0, reps=5)
        assert entry.compute_ns == 10
        assert entry.overhead_ns == 0
        assert entry.reps == 5

    def test_warmups_plus_reps_invocations(self, step_case):
        layer, act = step_case
        calls = []
        with ExecutionEngine(workers=1) as engine:
            real_execute = engine.execute_layer

            def counting(*a, **kw):
                calls.append(1)
                return real_execute(*a, **kw)

            engine.execute_layer = counting
            profile_layer(engine, layer, act, ParallelConfig.CPU, 2, warmups=2, reps=3)
        assert len(calls) == 5

    def test_cpu_step_overhead_tiny_vs_compute(self, step_case):
        layer, act = step_case
        with ExecutionEngine(workers=1) as engine:
            entry = profile_layer(engine, layer, act, ParallelConfig.CPU, 2, warmups=1, reps=3)
        assert entry.compute_ns > 0
        assert entry.overhead_ns < 0.05 * entry.compute_ns

    def test_unstable_measurement_warns(self, step_case):
        layer, act = step_case
        clock = ScriptedClock([10, 10, 100, 10, 10])
        with ExecutionEngine(workers=1, clock=clock) as engine:
            with pytest.warns(UnstableMeasurement):
                profile_layer(engine, layer, act, ParallelConfig.CPU, 2, warmups=0, reps=5)

    def test_spread_recorded(self, step_case):
        layer, act = step_case
        clock = ScriptedClock([10, 20, 10])
        with ExecutionEngine(workers=1, clock=clock) as engine:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                entry = profile_layer(engine, layer, act, ParallelConfig.CPU, 2, warmups=0, reps=3)
        assert entry.spread == 1.0  # (20-10)/10

    def test_total_within_wall_time(self, step_case):
        import time

        layer, act = step_case
        with ExecutionEngine(workers=2) as engine:
            t0 = time.perf_counter_ns()
            timed = engine.execute_layer(layer, act, ParallelConfig.XZ)
            wall = time.perf_counter_ns() - t0
        assert timed.overhead_ns + timed.compute_ns <= wall


class TestProfileModel:
    def test_cell_count_fashion(self, fashion_model):
        rng = np.random.default_rng(1)
        images = IntTensor((2, 1, 28, 28), rng.integers(0, 256, (2, 1, 28, 28)))
        with ExecutionEngine(workers=1) as engine:
            table = profile_model(engine, fashion_model, images, [1, 2], warmups=0, reps=1)
        # 10 layers x 8 configs minus 7 inapplicable flatten configs = 73 per batch
        assert len(table.entries) == 73 * 2
        assert table.missing_cells(fashion_model, [1, 2]) == []
        full_sweep = [1, 2, 4, 8, 16, 32, 64, 128]
        expected_missing = 73 * 6
        assert len(table.missing_cells(fashion_model, full_sweep)) == expected_missing

    def test_single_batch_column(self, fashion_model):
        rng = np.random.default_rng(2)
        images = IntTensor((1, 1, 28, 28), rng.integers(0, 256, (1, 1, 28, 28)))
        with ExecutionEngine(workers=1) as engine:
            table = profile_model(engine, fashion_model, images, [1], warmups=0, reps=1)
        assert {key[2] for key in table.entries} == {1}
        assert table.meta.batch_sizes == (1,)
        assert table.meta.workers == 1
        assert table.meta.reps == 1

    def test_small_dataset_tiled_to_batch(self, fashion_model):
        rng = np.random.default_rng(3)
        images = IntTensor((1, 1, 28, 28), rng.integers(0, 256, (1, 1, 28, 28)))
        with ExecutionEngine(workers=1) as engine:
            table = profile_model(engine, fashion_model, images, [2], warmups=0, reps=1)
        assert {key[2] for key in table.entries} == {2}

    def test_empty_dataset_rejected(self, fashion_model):
        images = IntTensor((0, 1, 28, 28), np.zeros((0, 1, 28, 28)))
        with ExecutionEngine(workers=1) as engine:
            with pytest.raises(ValueError):
                profile_model(engine, fashion_model, images, [1])
