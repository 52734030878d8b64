"""Greedy selection of per-layer implementations and the global batch size.

Per-layer choices are independent given a profile table, so picking the
fastest config per layer and then the best batch size is exactly optimal
over all assignment-vector x batch-size combinations.  Batch sizes are
compared on per-image cost (total(b)/b): profiled cells time one batch, but
the quantity being minimized is the cost of pushing a fixed dataset
through, which scales with dataset_size/b batches.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backends import applicable_configs
from .errors import BadRange, IncompleteTable
from .model import LayerKind, ModelSpec, ParallelConfig, model_digest
from .profiler import ProfileTable

MAX_BATCH_EXP = 16

BASELINE_STRATEGIES = ("cpu_only", "naive_x", "full_xyz")


@dataclass(eq=False)
class ExecPlan:
    """Per-layer config assignment plus the chosen batch size.

    predicted_total_ns is the raw per-batch sum of the winning cells at
    batch_size; reports scale it by dataset_size/batch_size.  Plans bind to
    the model content hash and to the worker count they were tuned at.
    """

    model_name: str
    model_hash: str
    batch_size: int
    assignments: list[ParallelConfig]
    predicted_total_ns: float | None
    workers: int

    def predicted_per_image_ns(self) -> float | None:
        if self.predicted_total_ns is None:
            return None
        return self.predicted_total_ns / self.batch_size

    def same_mapping(self, other: "ExecPlan") -> bool:
        """Equality of everything except the measured-time annotation."""
        return (
            self.model_name == other.model_name
            and self.model_hash == other.model_hash
            and self.batch_size == other.batch_size
            and self.assignments == other.assignments
            and self.workers == other.workers
        )


def batch_sweep(lower_exp: int, upper_exp: int) -> list[int]:
    """Powers of two from 2**lower_exp to 2**upper_exp inclusive."""
    if not 0 <= lower_exp <= upper_exp <= MAX_BATCH_EXP:
        raise BadRange(f"need 0 <= lower <= upper <= {MAX_BATCH_EXP}, got ({lower_exp}, {upper_exp})")
    return [2 ** e for e in range(lower_exp, upper_exp + 1)]


def per_batch_assignments(table: ProfileTable, model: ModelSpec) -> dict[int, list[ParallelConfig]]:
    """Winning config per layer at every batch size in the table's sweep.

    Ties prefer CPU, then the fixed axis order X, Y, Z, XY, XZ, YZ, XYZ, so
    the result never depends on table insertion order.
    """
    batch_sizes = table.meta.batch_sizes
    missing = table.missing_cells(model, batch_sizes)
    if missing:
        raise IncompleteTable(missing)
    result: dict[int, list[ParallelConfig]] = {}
    for b in batch_sizes:
        winners = []
        for i, layer in enumerate(model.layers):
            best = min(
                applicable_configs(layer.kind),
                key=lambda c: (table.get(i, c, b).total_ns, c.tie_rank),
            )
            winners.append(best)
        result[b] = winners
    return result


def select_plan(table: ProfileTable, model: ModelSpec) -> ExecPlan:
    """Greedy mapping: per-layer argmin configs at the per-image-optimal batch.

    For each batch size, each layer takes the config with the least
    overhead+compute; the batch size minimizing the per-image sum wins
    (smaller batch on ties).  Raises IncompleteTable when cells are missing.
    """
    argmin = per_batch_assignments(table, model)
    totals = {
        b: sum(table.get(i, cfg, b).total_ns for i, cfg in enumerate(winners))
        for b, winners in argmin.items()
    }
    chosen = min(totals, key=lambda b: (totals[b] / b, b))
    return ExecPlan(
        model_name=model.name,
        model_hash=table.meta.model_hash,
        batch_size=chosen,
        assignments=argmin[chosen],
        predicted_total_ns=totals[chosen],
        workers=table.meta.workers,
    )


def baseline_assignments(model: ModelSpec, strategy: str) -> list[ParallelConfig]:
    """Uniform assignment vectors; Flatten is pinned to CPU in all of them."""
    uniform = {
        "cpu_only": ParallelConfig.CPU,
        "naive_x": ParallelConfig.X,
        "full_xyz": ParallelConfig.XYZ,
    }[strategy]
    return [
        ParallelConfig.CPU if layer.kind is LayerKind.FLATTEN else uniform
        for layer in model.layers
    ]


def predicted_total(table: ProfileTable, assignments: list[ParallelConfig], batch: int) -> float:
    """Per-batch predicted cost of an assignment vector from the table."""
    return sum(table.get(i, cfg, batch).total_ns for i, cfg in enumerate(assignments))


def baseline_plans(model: ModelSpec, batch_sizes, workers: int,
                   table: ProfileTable | None = None) -> dict[str, dict[int, ExecPlan]]:
    """CPU-only, naive-X, and full-XYZ comparison plans at every batch size.

    When a profile table is supplied, each plan carries its predicted
    per-batch total so plan-dominance checks can compare predictions.
    """
    digest = model_digest(model)
    plans: dict[str, dict[int, ExecPlan]] = {}
    for strategy in BASELINE_STRATEGIES:
        assignments = baseline_assignments(model, strategy)
        plans[strategy] = {}
        for b in batch_sizes:
            predicted = predicted_total(table, assignments, b) if table is not None else None
            plans[strategy][b] = ExecPlan(
                model_name=model.name,
                model_hash=digest,
                batch_size=b,
                assignments=list(assignments),
                predicted_total_ns=predicted,
                workers=workers,
            )
    return plans
