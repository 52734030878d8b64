"""Eight interchangeable per-layer executors over a shared worker pool.

The sequential CPU executor runs the reference implementation one image at
a time.  The seven parallel executors stand in for GPU kernels: work is
partitioned along the Data (X: batch), Window (Y: output row bands), and
Neuron (Z: output channels) axes, items are assigned round-robin to a
persistent pool of P worker threads, and each call pays explicit staging
costs (copy-in, bit re-layout, dispatch, copy-back) that are timed
separately from kernel compute, mirroring the host<->device transfers that
happen before and after every layer.

Parallel kernels work on bit-packed words with xnor + popcount, a
deliberately different computation route from the reference's unpacked
matmuls, so backend-vs-reference equivalence compares two independent
implementations.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigNotApplicable, ShapeMismatch
from .layers import Activation, layer_forward
from .model import KERNEL, LayerKind, LayerSpec, ModelSpec, ParallelConfig
from .tensors import BinaryTensor, IntTensor, full_mask, pack_words, popcount

# Y-axis granularity: one output row per window for spatial layers; for fc
# outputs and flat step layers a band of 64 consecutive neurons stands in
# for a row.
FC_BAND = 64

_ALL_CONFIGS = tuple(ParallelConfig)
_CPU_ONLY = (ParallelConfig.CPU,)


def applicable_configs(kind: LayerKind) -> tuple[ParallelConfig, ...]:
    """Flatten is a one-line host operation; everything else takes all eight."""
    return _CPU_ONLY if kind is LayerKind.FLATTEN else _ALL_CONFIGS


class WorkItem(NamedTuple):
    """Half-open ranges over the (batch, channel, row) output index space.

    Columns are never partitioned: a Y window spans whole rows.
    """

    b0: int
    b1: int
    c0: int
    c1: int
    r0: int
    r1: int


@dataclass(frozen=True)
class CoverageViolation:
    kind: str  # "overlap" | "gap"
    index: tuple[int, int, int]


def output_space(layer: LayerSpec, batch_size: int) -> tuple[int, int, int]:
    """(batch, channels, rows) extents of the layer's output index space."""
    out = layer.out_shape
    if len(out) == 1:
        return (batch_size, out[0], 1)
    return (batch_size, out[0], out[1])


def partition_work(layer: LayerSpec, config: ParallelConfig, batch_size: int,
                   workers: int, window_rows: int = 1) -> list[WorkItem]:
    """Disjoint cover of the output index space along the config's axes.

    X groups by batch element, Y by output row band (neuron bands of
    FC_BAND on 1-D layers), Z by output channel/neuron; composites take the
    product of their axes' groupings.  When Y and Z both land on the neuron
    axis of a 1-D layer the finer per-neuron partition wins.
    """
    if config is ParallelConfig.CPU:
        raise ConfigNotApplicable("the CPU path is not partitioned")
    if config not in applicable_configs(layer.kind):
        raise ConfigNotApplicable(f"{layer.kind.value} admits only the CPU path")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    axes = config.axes
    nb, nc, nr = output_space(layer, batch_size)

    b_groups = [(b, b + 1) for b in range(nb)] if "X" in axes else [(0, nb)]
    if len(layer.out_shape) == 1:
        if "Z" in axes:
            c_groups = [(c, c + 1) for c in range(nc)]
        elif "Y" in axes:
            c_groups = [(c, min(c + FC_BAND, nc)) for c in range(0, nc, FC_BAND)]
        else:
            c_groups = [(0, nc)]
        r_groups = [(0, 1)]
    else:
        c_groups = [(c, c + 1) for c in range(nc)] if "Z" in axes else [(0, nc)]
        if "Y" in axes:
            r_groups = [(r, min(r + window_rows, nr)) for r in range(0, nr, window_rows)]
        else:
            r_groups = [(0, nr)]

    return [
        WorkItem(b0, b1, c0, c1, r0, r1)
        for b0, b1 in b_groups
        for c0, c1 in c_groups
        for r0, r1 in r_groups
    ]


def coverage_check(items: list[WorkItem], space: tuple[int, int, int]) -> CoverageViolation | None:
    """None iff the items cover every output index exactly once."""
    counts = np.zeros(space, dtype=np.int32)
    for it in items:
        counts[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1] += 1
    over = np.argwhere(counts > 1)
    if over.size:
        return CoverageViolation("overlap", tuple(int(x) for x in over[0]))
    gap = np.argwhere(counts == 0)
    if gap.size:
        return CoverageViolation("gap", tuple(int(x) for x in gap[0]))
    return None


@dataclass(frozen=True, eq=False)
class TimedResult:
    """Output plus the two disjoint measured intervals of one layer call."""

    output: Activation
    overhead_ns: int  # staging + packing + dispatch + copy-back
    compute_ns: int  # dispatch-to-join worker execution


@dataclass(eq=False)
class _DeviceActivation:
    """Raw arrays left backend-resident between fused parallel layers.

    Binary data is a bool array and fully valid (step/pool outputs always
    are); integer data is int32.
    """

    array: np.ndarray

    @property
    def is_binary(self) -> bool:
        return self.array.dtype == bool

    @property
    def dims(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def batch(self) -> int:
        return self.array.shape[0]

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.array.shape[1:]


# -- staging + kernels --------------------------------------------------------
#
# A staged bundle holds the backend-private arrays for one call: inputs
# copied/re-laid-out during staging, the preallocated output buffer the
# workers fill, and finish()/finish_device() converting the private output
# back to a host Activation (with bit re-packing) or handing it to the next
# fused layer.  Workers only write disjoint slices of `out`.


def _binary_source(src) -> tuple[np.ndarray, np.ndarray | None]:
    """(value_bits, mask_bits-or-None) for a binary input; None means fully valid."""
    if isinstance(src, _DeviceActivation):
        return src.array, None
    t = src.binary
    return t.value_bits(), (None if t.fully_valid() else t.mask_bits())


def _integer_source(src) -> np.ndarray:
    return src.array if isinstance(src, _DeviceActivation) else src.integer.values


def _gather_tap_words(bits_cl: np.ndarray) -> np.ndarray:
    """Channel-last bits (B,H,W,C) -> packed receptive-field words (B,H,W,9*nwc).

    Channels are packed into words per spatial position, then the nine
    kernel taps are gathered as shifted slices of the padded word grid, so
    no per-element gather is needed.  Tap order is (dy, dx) row-major,
    matching the prepared channel-last weight words.
    """
    b, h, w, c = bits_cl.shape
    padded = np.zeros((b, h + 2, w + 2, c), dtype=bool)
    padded[:, 1:-1, 1:-1, :] = bits_cl
    words = pack_words(padded)  # [B, H+2, W+2, nwc]
    nwc = words.shape[-1]
    taps = np.empty((b, h, w, KERNEL * KERNEL, nwc), dtype=np.uint64)
    t = 0
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            taps[:, :, :, t, :] = words[:, dy:dy + h, dx:dx + w, :]
            t += 1
    return taps.reshape(b, h, w, KERNEL * KERNEL * nwc)


class _StagedConvBin:
    def __init__(self, layer: LayerSpec, src):
        bits, valid = _binary_source(src)
        b, c, h, w = bits.shape
        prep = layer.prepared()
        if not prep["w_valid"]:
            raise ShapeMismatch("conv weights must be fully valid")
        self.w_words = np.copy(prep["w_cl"])  # per-call filter transfer
        self.patches = _gather_tap_words(bits.transpose(0, 2, 3, 1))
        if valid is None:
            # fully valid input: the tap mask depends only on (i, j) borders
            pm = _gather_tap_words(np.ones((1, h, w, c), dtype=bool))
            self.pmask = np.broadcast_to(pm, self.patches.shape)
            self.valid_taps = np.broadcast_to(
                popcount(pm).sum(axis=-1, dtype=np.int32), (b, h, w)
            )
        else:
            self.pmask = _gather_tap_words(valid.transpose(0, 2, 3, 1))
            self.valid_taps = popcount(self.pmask).sum(axis=-1, dtype=np.int32)
        self.out = np.zeros((b, layer.out_channels, h, w), dtype=np.int32)

    def run(self, it: WorkItem) -> None:
        # dot = valid_taps - 2 * popcount((patch XOR weights) AND mask):
        # disagreements over valid taps, one bit-op cheaper than the xnor form
        if it.b1 - it.b0 == 1 and it.c1 - it.c0 == 1:
            pw = self.patches[it.b0, it.r0:it.r1]
            disagree = popcount(
                (pw ^ self.w_words[it.c0]) & self.pmask[it.b0, it.r0:it.r1]
            ).sum(axis=-1, dtype=np.int32)
            self.out[it.b0, it.c0, it.r0:it.r1] = (
                self.valid_taps[it.b0, it.r0:it.r1] - 2 * disagree
            )
            return
        pw = self.patches[it.b0:it.b1, it.r0:it.r1]
        pm = self.pmask[it.b0:it.b1, it.r0:it.r1]
        ww = self.w_words[it.c0:it.c1]
        disagree = popcount(
            (pw[:, :, :, None, :] ^ ww[None, None, None, :, :]) & pm[:, :, :, None, :]
        ).sum(axis=-1, dtype=np.int32)  # [B', R, W, K']
        dots = self.valid_taps[it.b0:it.b1, it.r0:it.r1, :, None] - 2 * disagree
        self.out[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1] = dots.transpose(0, 3, 1, 2)

    def finish(self) -> Activation:
        return Activation.of_integer(IntTensor(self.out.shape, np.copy(self.out)))

    def finish_device(self) -> _DeviceActivation:
        return _DeviceActivation(self.out)


class _StagedConvInt:
    def __init__(self, layer: LayerSpec, src):
        vals = _integer_source(src)
        b, c, h, w = vals.shape
        self.w_dense = np.copy(layer.prepared()["w_dense"])
        padded = np.zeros((b, c, h + 2, w + 2), dtype=np.float32)
        padded[:, :, 1:-1, 1:-1] = vals
        win = np.lib.stride_tricks.sliding_window_view(padded, (KERNEL, KERNEL), axis=(2, 3))
        self.patches = np.ascontiguousarray(
            win.transpose(0, 2, 3, 1, 4, 5).reshape(b, h, w, c * KERNEL * KERNEL)
        )
        self.out = np.zeros((b, layer.out_channels, h, w), dtype=np.int32)

    def run(self, it: WorkItem) -> None:
        taps = self.patches.shape[-1]
        w = self.patches.shape[2]
        block = self.patches[it.b0:it.b1, it.r0:it.r1].reshape(-1, taps)
        dots = (block @ self.w_dense[it.c0:it.c1].T).astype(np.int32)
        self.out[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1] = (
            dots.reshape(it.b1 - it.b0, it.r1 - it.r0, w, it.c1 - it.c0).transpose(0, 3, 1, 2)
        )

    def finish(self) -> Activation:
        return Activation.of_integer(IntTensor(self.out.shape, np.copy(self.out)))

    def finish_device(self) -> _DeviceActivation:
        return _DeviceActivation(self.out)


class _StagedFc:
    def __init__(self, layer: LayerSpec, src):
        prep = layer.prepared()
        if not prep["w_valid"]:
            raise ShapeMismatch("fc weights must be fully valid")
        self.w_words = np.copy(prep["w_words"])
        nw = self.w_words.shape[1]
        if isinstance(src, _DeviceActivation):
            b, length = src.array.shape
            self.in_words = pack_words(src.array.astype(np.uint8))
            self.in_mask = np.broadcast_to(full_mask(length), (b, nw)).copy()
        else:
            t = src.binary
            b = t.dims[0]
            self.in_words = t.words.reshape(b, nw).copy()
            self.in_mask = t.valid_mask.reshape(b, nw).copy()
        self.valid_bits = popcount(self.in_mask).sum(axis=-1, dtype=np.int32)
        self.out = np.zeros((b, layer.out_shape[0]), dtype=np.int32)

    def run(self, it: WorkItem) -> None:
        if it.b1 - it.b0 == 1:
            disagree = popcount(
                (self.in_words[it.b0] ^ self.w_words[it.c0:it.c1]) & self.in_mask[it.b0]
            ).sum(axis=-1, dtype=np.int32)
            self.out[it.b0, it.c0:it.c1] = self.valid_bits[it.b0] - 2 * disagree
            return
        disagree = popcount(
            (self.in_words[it.b0:it.b1, None, :] ^ self.w_words[None, it.c0:it.c1, :])
            & self.in_mask[it.b0:it.b1, None, :]
        ).sum(axis=-1, dtype=np.int32)
        self.out[it.b0:it.b1, it.c0:it.c1] = self.valid_bits[it.b0:it.b1, None] - 2 * disagree

    def finish(self) -> Activation:
        return Activation.of_integer(IntTensor(self.out.shape, np.copy(self.out)))

    def finish_device(self) -> _DeviceActivation:
        return _DeviceActivation(self.out)


class _StagedMaxPool:
    def __init__(self, layer: LayerSpec, src):
        if isinstance(src, _DeviceActivation):
            self.is_binary = src.is_binary
            self.vals = src.array  # already backend-resident
        else:
            self.is_binary = src.is_binary
            if self.is_binary:
                if not src.binary.fully_valid():
                    raise ShapeMismatch("maxpool expects fully valid binary input")
                self.vals = src.binary.value_bits()
            else:
                self.vals = np.copy(src.integer.values)
        b, c, h, w = self.vals.shape
        self.out = np.zeros((b, c, h // 2, w // 2), dtype=bool if self.is_binary else np.int32)

    def run(self, it: WorkItem) -> None:
        w2 = self.out.shape[3]
        block = self.vals[it.b0:it.b1, it.c0:it.c1, 2 * it.r0:2 * it.r1]
        block = block.reshape(it.b1 - it.b0, it.c1 - it.c0, it.r1 - it.r0, 2, w2, 2)
        if self.is_binary:
            self.out[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1] = block.any(axis=(3, 5))
        else:
            self.out[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1] = block.max(axis=(3, 5))

    def finish(self) -> Activation:
        if self.is_binary:
            return Activation.of_binary(BinaryTensor.from_bits(self.out, self.out.shape))
        return Activation.of_integer(IntTensor(self.out.shape, np.copy(self.out)))

    def finish_device(self) -> _DeviceActivation:
        return _DeviceActivation(self.out)


class _StagedStep:
    def __init__(self, layer: LayerSpec, src):
        prep = layer.prepared()
        vals = _integer_source(src)
        self.vals = vals if isinstance(src, _DeviceActivation) else np.copy(vals)
        self.thr = np.copy(prep["thresholds"])
        self.pos = np.copy(prep["positive"])
        self.out = np.zeros(self.vals.shape, dtype=bool)

    def run(self, it: WorkItem) -> None:
        thr = self.thr[it.c0:it.c1]
        pos = self.pos[it.c0:it.c1]
        if self.vals.ndim == 2:
            v = self.vals[it.b0:it.b1, it.c0:it.c1]
            self.out[it.b0:it.b1, it.c0:it.c1] = np.where(pos, v > thr, v < thr)
        else:
            v = self.vals[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1]
            t = thr[:, None, None]
            p = pos[:, None, None]
            self.out[it.b0:it.b1, it.c0:it.c1, it.r0:it.r1] = np.where(p, v > t, v < t)

    def finish(self) -> Activation:
        return Activation.of_binary(BinaryTensor.from_bits(self.out, self.out.shape))

    def finish_device(self) -> _DeviceActivation:
        return _DeviceActivation(self.out)


_STAGING = {
    LayerKind.CONV_BIN: _StagedConvBin,
    LayerKind.CONV_INT: _StagedConvInt,
    LayerKind.FC_BIN: _StagedFc,
    LayerKind.FC_INT_OUT: _StagedFc,
    LayerKind.MAXPOOL: _StagedMaxPool,
    LayerKind.STEP: _StagedStep,
}


# -- engine -------------------------------------------------------------------


class ExecutionEngine:
    """Owns the worker pool and executes single layers or whole plans.

    One layer is in flight at a time (the pipeline is layer-sequential);
    workers write disjoint output slices, so outputs are independent of
    scheduling order.  The pool is created once and reused so thread spawn
    never shows up in measured overhead.  The clock is injectable for
    deterministic timing tests.
    """

    def __init__(self, workers: int | None = None, window_rows: int = 1,
                 fuse_transfers: bool = False, clock=time.perf_counter_ns):
        self.workers = workers if workers is not None else (os.cpu_count() or 1)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.window_rows = int(window_rows)
        if self.window_rows < 1:
            raise ValueError("window_rows must be >= 1")
        self.fuse_transfers = bool(fuse_transfers)
        self.clock = clock
        self._pool = ThreadPoolExecutor(max_workers=self.workers)

    def close(self):
        self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    # -- single layer -------------------------------------------------------

    def execute_layer(self, layer: LayerSpec, act: Activation, config: ParallelConfig,
                      batch_size: int | None = None) -> TimedResult:
        """Run one layer under one configuration, timing overhead and compute.

        Overhead covers staging into backend-private buffers, dispatch, and
        the result copy-back; it is paid on every call, even between
        consecutive parallel layers.  Compute covers the dispatch-to-join
        worker interval only.
        """
        if batch_size is not None and act.batch != batch_size:
            raise ShapeMismatch(f"batch {act.batch} != requested batch_size {batch_size}")
        result, _ = self._execute(layer, act, config, device_out=False)
        return result

    def _execute(self, layer: LayerSpec, src, config: ParallelConfig,
                 device_out: bool) -> tuple[TimedResult, "_DeviceActivation | None"]:
        if src.sample_shape != layer.in_shape:
            raise ShapeMismatch(
                f"{layer.kind.value} expects sample shape {layer.in_shape}, got {src.sample_shape}"
            )
        if config not in applicable_configs(layer.kind):
            raise ConfigNotApplicable(f"{config.value} not applicable to {layer.kind.value}")
        clock = self.clock

        if config is ParallelConfig.CPU:
            if isinstance(src, _DeviceActivation):
                raise ShapeMismatch("CPU path takes host activations")
            t0 = clock()
            out = self._cpu_forward(layer, src)
            t1 = clock()
            return TimedResult(out, 0, t1 - t0), None

        items = partition_work(layer, config, src.batch, self.workers, self.window_rows)
        t0 = clock()
        staged = _STAGING[layer.kind](layer, src)
        slices = [items[w::self.workers] for w in range(self.workers)]
        futures = [self._pool.submit(_run_slice, staged, s) for s in slices if s]
        t1 = clock()  # dispatch done
        for f in wait(futures).done:
            f.result()
        t2 = clock()  # workers joined
        if device_out:
            dev = staged.finish_device()
            t3 = clock()
            timed = TimedResult(None, (t1 - t0) + (t3 - t2), t2 - t1)
            return timed, dev
        out = staged.finish()
        t3 = clock()
        return TimedResult(out, (t1 - t0) + (t3 - t2), t2 - t1), None

    def _cpu_forward(self, layer: LayerSpec, act: Activation) -> Activation:
        """Sequential semantics: the batch is processed one image at a time."""
        if act.batch == 1:
            return layer_forward(layer, act)
        parts = []
        if act.is_binary:
            bits = act.binary.value_bits()
            valid = act.binary.mask_bits()
            for b in range(act.batch):
                sub = BinaryTensor.from_bits(bits[b:b + 1], bits[b:b + 1].shape, valid[b:b + 1])
                parts.append(layer_forward(layer, Activation.of_binary(sub)))
        else:
            vals = act.integer.values
            for b in range(act.batch):
                sub = IntTensor(vals[b:b + 1].shape, vals[b:b + 1])
                parts.append(layer_forward(layer, Activation.of_integer(sub)))
        return _concat_batch(parts)

    # -- whole model --------------------------------------------------------

    def run_model(self, model: ModelSpec, images: IntTensor,
                  assignments: list[ParallelConfig], batch_size: int) -> "RunReport":
        """Execute the dataset in batches under a per-layer assignment vector.

        The final batch may be smaller.  With fuse_transfers enabled the
        copy-in/copy-back halves of staging are skipped between consecutive
        parallel layers (not paper-faithful; off by default).
        """
        if len(assignments) != len(model.layers):
            raise ShapeMismatch(f"{len(assignments)} assignments for {len(model.layers)} layers")
        for layer, config in zip(model.layers, assignments):
            if config not in applicable_configs(layer.kind):
                raise ConfigNotApplicable(f"{config.value} not applicable to {layer.kind.value}")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        n = images.dims[0]
        nlayers = len(model.layers)
        overhead = [0] * nlayers
        compute = [0] * nlayers
        preds: list[int] = []
        t_start = self.clock()
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            src = Activation.of_integer(IntTensor((hi - lo,) + images.dims[1:], images.values[lo:hi]))
            for i, (layer, config) in enumerate(zip(model.layers, assignments)):
                fuse_next = (
                    self.fuse_transfers
                    and config is not ParallelConfig.CPU
                    and i + 1 < nlayers
                    and assignments[i + 1] is not ParallelConfig.CPU
                )
                timed, dev = self._execute(layer, src, config, device_out=fuse_next)
                src = dev if fuse_next else timed.output
                overhead[i] += timed.overhead_ns
                compute[i] += timed.compute_ns
            preds.extend(int(p) for p in np.argmax(src.integer.values, axis=1))
        wall_ns = self.clock() - t_start
        return RunReport(preds, overhead, compute, wall_ns)


def _run_slice(staged, items: list[WorkItem]) -> None:
    for it in items:
        staged.run(it)


def _concat_batch(parts: list[Activation]) -> Activation:
    if parts[0].is_binary:
        bits = np.concatenate([p.binary.value_bits() for p in parts])
        valid = np.concatenate([p.binary.mask_bits() for p in parts])
        return Activation.of_binary(BinaryTensor.from_bits(bits, bits.shape, valid))
    vals = np.concatenate([p.integer.values for p in parts])
    return Activation.of_integer(IntTensor(vals.shape, vals))


@dataclass
class RunReport:
    """Per-layer accumulated times and predictions for one dataset pass."""

    predictions: list[int]
    overhead_ns: list[int]
    compute_ns: list[int]
    wall_ns: int

    def accuracy(self, labels: list[int]) -> float:
        if not labels:
            return 0.0
        hits = sum(1 for p, t in zip(self.predictions, labels) if p == t)
        return hits / len(labels)
