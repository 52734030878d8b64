"""End-to-end autotuning: profile every cell, pick a plan, execute it.

The tuner measures (overhead, compute) for every applicable
(layer, backend, batch-size) cell, then greedily assigns each layer its
fastest backend and picks the batch size with the lowest per-image sum.
Because per-layer choices are independent given the table, the greedy
plan is exactly optimal over all assignment/batch combinations.
"""

import tempfile
from pathlib import Path

import numpy as np

from bnntuner import (
    ExecutionEngine,
    IntTensor,
    batch_sweep,
    export_synthetic_model,
    layer_display_name,
    profile_model,
    reference_infer,
    select_plan,
    save_dataset,
    save_model,
    save_plan,
)

workdir = Path(tempfile.mkdtemp(prefix="bnntuner-demo-"))
model = export_synthetic_model("fashion", seed=7)

rng = np.random.default_rng(3)
n = 64
images = IntTensor((n, 1, 28, 28), rng.integers(0, 256, (n, 1, 28, 28)))
labels = [int(x) for x in rng.integers(0, 10, n)]
save_model(model, workdir / "fashion.model.json")
save_dataset(workdir / "testing.csv", images, labels)

sweep = batch_sweep(0, 3)  # batch sizes 1, 2, 4, 8
print(f"profiling {len(model.layers)} layers x 8 configs x {sweep} ...")
with ExecutionEngine(workers=2) as engine:
    table = profile_model(engine, model, images, sweep, warmups=1, reps=3)
    plan = select_plan(table, model)

    print(f"\nchosen batch size: {plan.batch_size}")
    print(f"predicted per-image latency: {plan.predicted_per_image_ns() / 1e6:.3f} ms")
    print("\nper-layer winning configs:")
    for layer, config in zip(model.layers, plan.assignments):
        print(f"  {layer_display_name(layer):<8} -> {config.value}")

    save_plan(plan, workdir / "plan.json")
    print(f"\nplan written to {workdir / 'plan.json'}")

    report = engine.run_model(model, images, plan.assignments, plan.batch_size)

_, expected = reference_infer(model, images)
assert report.predictions == expected, "plan execution must match the reference bit-for-bit"
print(f"executed {n} images in {report.wall_ns / 1e9:.3f} s; "
      f"accuracy vs random labels: {report.accuracy(labels):.3f}")
print("predictions identical to the sequential reference")
