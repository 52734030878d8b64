"""Measure per-layer (overhead, compute) times across configs and batch sizes.

Profiling is orchestrated single-threaded; the only parallelism is inside
execute_layer.  Each (layer, config, batch) cell runs W discarded warmups
followed by R timed repetitions and keeps the medians, which resist
scheduler spikes.  Timing comes from the engine's injectable clock, so the
whole harness is unit-testable with a scripted clock.
"""

from __future__ import annotations

import platform
import time
import warnings
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .backends import ExecutionEngine, applicable_configs
from .layers import Activation, layer_forward
from .model import ModelSpec, ParallelConfig, model_digest
from .tensors import IntTensor

DEFAULT_WARMUPS = 2
DEFAULT_REPS = 5

# Relative spread (max-min)/median of per-rep totals above which a cell is
# flagged as noisy.
SPREAD_WARN = 0.5


class UnstableMeasurement(UserWarning):
    """A profiled cell showed more run-to-run spread than SPREAD_WARN."""


@dataclass(frozen=True)
class ProfileEntry:
    overhead_ns: float
    compute_ns: float
    reps: int
    spread: float

    @property
    def total_ns(self) -> float:
        return self.overhead_ns + self.compute_ns


@dataclass(frozen=True)
class ProfileMeta:
    model_hash: str
    workers: int
    host: str
    timestamp: str
    warmups: int
    reps: int
    batch_sizes: tuple[int, ...]


@dataclass(eq=False)
class ProfileTable:
    """Measured times keyed by (layer_index, config, batch_size).

    `per_batch_argmin` is an optional audit record of the winning config per
    layer at every batch size, filled in by the tuner after selection.
    """

    entries: dict[tuple[int, ParallelConfig, int], ProfileEntry] = field(default_factory=dict)
    meta: ProfileMeta | None = None
    per_batch_argmin: dict[int, list[ParallelConfig]] | None = None

    def get(self, layer: int, config: ParallelConfig, batch: int) -> ProfileEntry:
        return self.entries[(layer, config, batch)]

    def missing_cells(self, model: ModelSpec, batch_sizes) -> list[tuple[int, str, int]]:
        """Cells required for the model/sweep that the table does not hold."""
        missing = []
        for i, layer in enumerate(model.layers):
            for config in applicable_configs(layer.kind):
                for b in batch_sizes:
                    if (i, config, b) not in self.entries:
                        missing.append((i, config.value, b))
        return missing

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ProfileTable)
            and self.entries == other.entries
            and self.meta == other.meta
            and self.per_batch_argmin == other.per_batch_argmin
        )


def host_description() -> str:
    return f"{platform.platform()} / {platform.processor() or 'unknown cpu'}"


def profile_layer(engine: ExecutionEngine, layer, rep_input: Activation,
                  config: ParallelConfig, batch_size: int,
                  warmups: int = DEFAULT_WARMUPS, reps: int = DEFAULT_REPS) -> ProfileEntry:
    """Median (overhead, compute) over `reps` timed runs after `warmups` discards."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for _ in range(warmups):
        engine.execute_layer(layer, rep_input, config, batch_size)
    overheads, computes, totals = [], [], []
    for _ in range(reps):
        timed = engine.execute_layer(layer, rep_input, config, batch_size)
        overheads.append(timed.overhead_ns)
        computes.append(timed.compute_ns)
        totals.append(timed.overhead_ns + timed.compute_ns)
    med_total = median(totals)
    spread = (max(totals) - min(totals)) / med_total if med_total > 0 else 0.0
    if spread > SPREAD_WARN:
        warnings.warn(
            f"unstable cell (config={config.value}, batch={batch_size}): spread {spread:.2f}",
            UnstableMeasurement,
            stacklevel=2,
        )
    return ProfileEntry(float(median(overheads)), float(median(computes)), reps, float(spread))


def profile_model(engine: ExecutionEngine, model: ModelSpec, images: IntTensor,
                  batch_sizes, warmups: int = DEFAULT_WARMUPS,
                  reps: int = DEFAULT_REPS) -> ProfileTable:
    """Profile every applicable (layer, config) cell at every batch size.

    The input for layer i is the first `batch` dataset images propagated
    through layers 1..i-1 with the reference engine, materialized once per
    (layer, batch) and reused across configs so every config times identical
    data.  Datasets smaller than a batch are tiled to fill it.
    """
    if images.dims[0] < 1:
        raise ValueError("profiling needs a nonempty dataset sample")
    batch_sizes = sorted(set(int(b) for b in batch_sizes))
    table = ProfileTable()
    for batch in batch_sizes:
        act = Activation.of_integer(_take_batch(images, batch))
        for i, layer in enumerate(model.layers):
            for config in applicable_configs(layer.kind):
                table.entries[(i, config, batch)] = profile_layer(
                    engine, layer, act, config, batch, warmups, reps
                )
            act = layer_forward(layer, act)
    table.meta = ProfileMeta(
        model_hash=model_digest(model),
        workers=engine.workers,
        host=host_description(),
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        warmups=warmups,
        reps=reps,
        batch_sizes=tuple(batch_sizes),
    )
    return table


def _take_batch(images: IntTensor, batch: int) -> IntTensor:
    n = images.dims[0]
    if batch <= n:
        vals = images.values[:batch]
    else:
        reps = -(-batch // n)
        vals = np.concatenate([images.values] * reps)[:batch]
    return IntTensor((batch,) + images.dims[1:], vals)
