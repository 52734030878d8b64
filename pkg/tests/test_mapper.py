"""Greedy plan selection against brute-force enumeration."""

import itertools

import numpy as np
import pytest

from bnntuner import (
    BadRange,
    IncompleteTable,
    LayerKind,
    ParallelConfig,
    ProfileEntry,
    ProfileMeta,
    ProfileTable,
    applicable_configs,
    baseline_assignments,
    baseline_plans,
    batch_sweep,
    per_batch_assignments,
    select_plan,
)
from conftest import random_conv_layer, random_fc_layer, random_step_layer
from bnntuner.model import InputSpec, LayerSpec, ModelSpec


def _tiny_model(nlayers, rng):
    """Structurally simple model whose layers all admit every config."""
    layers = [random_conv_layer(rng, LayerKind.CONV_INT, c=1, k=2, h=4, w=4)]
    shape = (2, 4, 4)
    while len(layers) < nlayers:
        layers.append(random_step_layer(rng, shape))
    return ModelSpec("tiny", InputSpec(1, 4, 4), layers, 10)


def _table(model, times, batch_sizes, workers=2):
    """times[(layer, config, batch)] -> total ns (overhead folded into compute)."""
    entries = {
        key: ProfileEntry(0.0, float(t), 1, 0.0) for key, t in times.items()
    }
    meta = ProfileMeta("f" * 64, workers, "host", "t", 0, 1, tuple(batch_sizes))
    return ProfileTable(entries=entries, meta=meta)


class TestBatchSweep:
    def test_paper_range(self):
        assert batch_sweep(0, 7) == [1, 2, 4, 8, 16, 32, 64, 128]

    def test_single(self):
        assert batch_sweep(0, 0) == [1]

    def test_bad_range(self):
        with pytest.raises(BadRange):
            batch_sweep(3, 1)
        with pytest.raises(BadRange):
            batch_sweep(-1, 2)
        with pytest.raises(BadRange):
            batch_sweep(0, 17)


class TestSelectPlan:
    def test_hand_built_two_layer_example(self):
        rng = np.random.default_rng(0)
        model = _tiny_model(2, rng)
        configs = applicable_configs(LayerKind.STEP)
        times = {}
        base = {ParallelConfig.CPU: (5.0, 2.0), ParallelConfig.X: (3.0, 4.0)}
        for b, scale in ((1, 1.0), (2, 2.0)):
            for config in configs:
                t0, t1 = base.get(config, (100.0, 100.0))
                times[(0, config, b)] = t0 * scale
                times[(1, config, b)] = t1 * scale
        plan = select_plan(_table(model, times, [1, 2]), model)
        assert plan.batch_size == 1
        assert plan.assignments == [ParallelConfig.X, ParallelConfig.CPU]
        assert plan.predicted_total_ns == 5.0

    def test_all_cpu_when_cpu_fastest(self):
        rng = np.random.default_rng(1)
        model = _tiny_model(3, rng)
        times = {}
        for i in range(3):
            for b in (1, 2):
                for config in applicable_configs(model.layers[i].kind):
                    times[(i, config, b)] = 10.0 * b if config is ParallelConfig.CPU else 99.0 * b
        plan = select_plan(_table(model, times, [1, 2]), model)
        assert all(c is ParallelConfig.CPU for c in plan.assignments)

    def test_matches_brute_force_on_random_tables(self):
        rng = np.random.default_rng(2)
        config_subset = [ParallelConfig.CPU, ParallelConfig.X, ParallelConfig.YZ]
        for trial in range(100):
            nlayers = int(rng.integers(1, 5))
            model = _tiny_model(nlayers, rng)
            batch_sizes = [1, 2, 4][: int(rng.integers(1, 4))]
            times = {}
            for i in range(nlayers):
                for config in applicable_configs(model.layers[i].kind):
                    for b in batch_sizes:
                        times[(i, config, b)] = (
                            float(rng.integers(1, 1000))
                            if config in config_subset
                            else 1e12  # park the unprofiled configs out of the running
                        )
            table = _table(model, times, batch_sizes)
            plan = select_plan(table, model)
            best = min(
                (
                    sum(times[(i, cfg, b)] for i, cfg in enumerate(combo)) / b
                    for b in batch_sizes
                    for combo in itertools.product(config_subset, repeat=nlayers)
                )
            )
            assert plan.predicted_total_ns / plan.batch_size == pytest.approx(best)

    def test_tie_breaks_prefer_cpu_then_axis_order(self):
        rng = np.random.default_rng(3)
        model = _tiny_model(1, rng)
        times = {(0, c, 1): 7.0 for c in applicable_configs(LayerKind.CONV_INT)}
        plan = select_plan(_table(model, times, [1]), model)
        assert plan.assignments == [ParallelConfig.CPU]
        # make CPU lose, everything else tied: X wins by axis order
        times[(0, ParallelConfig.CPU, 1)] = 9.0
        plan = select_plan(_table(model, times, [1]), model)
        assert plan.assignments == [ParallelConfig.X]

    def test_batch_tie_prefers_smaller(self):
        rng = np.random.default_rng(4)
        model = _tiny_model(1, rng)
        times = {}
        for b in (1, 2):
            for c in applicable_configs(LayerKind.CONV_INT):
                times[(0, c, b)] = 5.0 * b  # identical per-image cost
        plan = select_plan(_table(model, times, [1, 2]), model)
        assert plan.batch_size == 1

    def test_insertion_order_irrelevant(self):
        rng = np.random.default_rng(5)
        model = _tiny_model(2, rng)
        times = {}
        for i in range(2):
            for b in (1, 2):
                for c in applicable_configs(model.layers[i].kind):
                    times[(i, c, b)] = float(rng.integers(1, 100))
        table_fwd = _table(model, times, [1, 2])
        shuffled = dict(reversed(list(times.items())))
        table_rev = _table(model, shuffled, [1, 2])
        assert select_plan(table_fwd, model).assignments == select_plan(table_rev, model).assignments

    def test_scaling_invariance(self):
        rng = np.random.default_rng(6)
        model = _tiny_model(3, rng)
        times = {}
        for i in range(3):
            for b in (1, 2, 4):
                for c in applicable_configs(model.layers[i].kind):
                    times[(i, c, b)] = float(rng.integers(1, 500))
        plan1 = select_plan(_table(model, times, [1, 2, 4]), model)
        scaled = {k: v * 37.5 for k, v in times.items()}
        plan2 = select_plan(_table(model, scaled, [1, 2, 4]), model)
        assert plan1.assignments == plan2.assignments
        assert plan1.batch_size == plan2.batch_size

    def test_incomplete_table_lists_missing(self):
        rng = np.random.default_rng(7)
        model = _tiny_model(2, rng)
        times = {
            (i, c, 1): 1.0
            for i in range(2)
            for c in applicable_configs(model.layers[i].kind)
        }
        del times[(1, ParallelConfig.XZ, 1)]
        with pytest.raises(IncompleteTable) as exc:
            select_plan(_table(model, times, [1]), model)
        assert (1, "XZ", 1) in exc.value.missing


class TestBaselines:
    def test_full_xyz_pins_flatten_to_cpu(self, fashion_model):
        assignments = baseline_assignments(fashion_model, "full_xyz")
        kinds = [layer.kind for layer in fashion_model.layers]
        flat_at = kinds.index(LayerKind.FLATTEN)
        assert assignments[flat_at] is ParallelConfig.CPU
        assert all(
            c is ParallelConfig.XYZ for i, c in enumerate(assignments) if i != flat_at
        )

    def test_cpu_only_all_cpu(self, fashion_model):
        assert all(
            c is ParallelConfig.CPU for c in baseline_assignments(fashion_model, "cpu_only")
        )

    def test_naive_x_only_x_and_flatten_cpu(self, fashion_model):
        assignments = baseline_assignments(fashion_model, "naive_x")
        for layer, c in zip(fashion_model.layers, assignments):
            if layer.kind is LayerKind.FLATTEN:
                assert c is ParallelConfig.CPU
            else:
                assert c is ParallelConfig.X

    def test_plan_dominates_baselines_on_predictions(self):
        rng = np.random.default_rng(8)
        model = _tiny_model(3, rng)
        times = {}
        for i in range(3):
            for b in (1, 2):
                for c in applicable_configs(model.layers[i].kind):
                    times[(i, c, b)] = float(rng.integers(1, 1000))
        table = _table(model, times, [1, 2])
        plan = select_plan(table, model)
        per_image = plan.predicted_total_ns / plan.batch_size
        plans = baseline_plans(model, [1, 2], workers=2, table=table)
        for strategy in plans:
            for b, baseline in plans[strategy].items():
                assert per_image <= baseline.predicted_total_ns / b + 1e-9
