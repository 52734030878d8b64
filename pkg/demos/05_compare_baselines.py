"""The tuned plan against three fixed strategies, measured end to end.

CPU-only runs every layer sequentially; naive-X parallelizes every layer
along the batch axis only; full-XYZ partitions every layer as finely as
possible. The tuned plan picks per layer, which is why it tracks the best
of all three. On small models the fully-parallel strategy usually loses
to plain CPU: its staging overhead and tiny work items dominate, which is
the whole motivation for per-layer mapping.
"""

import numpy as np

from bnntuner import (
    BASELINE_STRATEGIES,
    ExecutionEngine,
    IntTensor,
    baseline_assignments,
    batch_sweep,
    export_synthetic_model,
    per_batch_assignments,
    profile_model,
    select_plan,
)

model = export_synthetic_model("fashion", seed=7)
rng = np.random.default_rng(8)
n = 48
images = IntTensor((n, 1, 28, 28), rng.integers(0, 256, (n, 1, 28, 28)))

sweep = batch_sweep(0, 2)
with ExecutionEngine(workers=2) as engine:
    table = profile_model(engine, model, images, sweep, warmups=1, reps=3)
    argmin = per_batch_assignments(table, model)
    plan = select_plan(table, model)

    print(f"{n} images, batch sizes {sweep}; efficient plan chose batch {plan.batch_size}\n")
    header = f"{'batch':>5} " + "".join(f"{s:>12}" for s in BASELINE_STRATEGIES) + f"{'efficient':>12}"
    print(header)
    for b in sweep:
        row = []
        for strategy in BASELINE_STRATEGIES:
            assignments = baseline_assignments(model, strategy)
            row.append(engine.run_model(model, images, assignments, b).wall_ns / 1e9)
        row.append(engine.run_model(model, images, argmin[b], b).wall_ns / 1e9)
        cells = "".join(f"{v:>11.3f}s" for v in row)
        winner = min(range(len(row)), key=row.__getitem__)
        name = (list(BASELINE_STRATEGIES) + ["efficient"])[winner]
        print(f"{b:>5} {cells}   <- {name}")
