"""File formats: model specs with packed weights, datasets, plans, profiles.

Models live in JSON with base64 weight blobs (human-diffable headers, exact
binary payloads); datasets are label-first CSV with raw 0..255 pixels;
plans and profile tables are plain JSON.  All writers emit a canonical form
(sorted keys, two-space indent, trailing newline) so save(load(x)) is
byte-stable.  Formats are documented in docs/model-format.md.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import (
    LabelOutOfRange,
    ModelHashMismatch,
    ParseError,
    ShapeMismatch,
    UnsupportedVersion,
    ValidationFailed,
)
from .mapper import ExecPlan
from .model import (
    InputSpec,
    LayerKind,
    LayerSpec,
    ModelSpec,
    ParallelConfig,
    StepDirection,
    model_digest,
    validate_model,
)
from .profiler import ProfileEntry, ProfileMeta, ProfileTable
from .tensors import BinaryTensor, IntTensor, full_mask, num_words

FORMAT_VERSION = 1


def _dump_canonical(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}: {e.msg}") from e


def _check_version(doc: dict, path) -> None:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: format_version {version!r}, expected {FORMAT_VERSION}")


def _words_to_b64(tensors: list[BinaryTensor]) -> str:
    blob = b"".join(t.words.astype("<u8").tobytes() for t in tensors)
    return base64.b64encode(blob).decode("ascii")


# -- model --------------------------------------------------------------------


def model_to_doc(model: ModelSpec) -> dict:
    layers = []
    for layer in model.layers:
        rec: dict = {
            "kind": layer.kind.value,
            "in_shape": list(layer.in_shape),
            "out_shape": list(layer.out_shape),
        }
        if layer.kind in (LayerKind.CONV_INT, LayerKind.CONV_BIN):
            rec.update(out_channels=layer.out_shape[0], kernel=3, pad=1,
                       weights_b64=_words_to_b64(layer.weights))
        elif layer.kind in (LayerKind.FC_BIN, LayerKind.FC_INT_OUT):
            rec["weights_b64"] = _words_to_b64(layer.weights)
        elif layer.kind is LayerKind.MAXPOOL:
            rec.update(window=2, stride=2)
        elif layer.kind is LayerKind.STEP:
            rec["thresholds"] = [int(t) for t in layer.thresholds.values]
            rec["directions"] = [d.value for d in layer.directions]
        layers.append(rec)
    return {
        "format_version": FORMAT_VERSION,
        "name": model.name,
        "input": {
            "channels": model.input.channels,
            "rows": model.input.rows,
            "cols": model.input.cols,
            "element": model.input.element,
        },
        "num_classes": model.num_classes,
        "layers": layers,
    }


def _decode_weight_rows(rec: dict, n: int, rows: int, bits_per_row: int,
                        row_dims: tuple[int, ...]) -> list[BinaryTensor]:
    try:
        blob = base64.b64decode(rec["weights_b64"], validate=True)
    except Exception as e:
        raise ParseError(f"layer {n}: bad base64 weight blob: {e}") from e
    wpr = num_words(bits_per_row)
    if len(blob) != rows * wpr * 8:
        raise ValidationFailed([f"blob length mismatch layer {n}"])
    words = np.frombuffer(blob, dtype="<u8").astype(np.uint64).reshape(rows, wpr)
    mask = full_mask(bits_per_row)
    return [BinaryTensor(row_dims, words[r], mask) for r in range(rows)]


def _layer_from_rec(rec: dict, n: int) -> LayerSpec:
    try:
        kind = LayerKind(rec["kind"])
    except (KeyError, ValueError) as e:
        raise ParseError(f"layer {n}: unknown or missing kind {rec.get('kind')!r}") from e
    try:
        in_shape = tuple(int(d) for d in rec["in_shape"])
        out_shape = tuple(int(d) for d in rec["out_shape"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"layer {n}: bad shapes") from e

    if kind in (LayerKind.CONV_INT, LayerKind.CONV_BIN):
        if rec.get("kernel", 3) != 3 or rec.get("pad", 1) != 1:
            raise ParseError(f"layer {n}: only kernel=3 pad=1 convolutions are supported")
        if len(in_shape) != 3 or len(out_shape) != 3:
            raise ParseError(f"layer {n}: conv shapes must be 3-D")
        c = in_shape[0]
        weights = _decode_weight_rows(rec, n, out_shape[0], c * 9, (c, 3, 3))
        return LayerSpec(kind, in_shape, out_shape, weights=weights)
    if kind in (LayerKind.FC_BIN, LayerKind.FC_INT_OUT):
        if len(in_shape) != 1 or len(out_shape) != 1:
            raise ParseError(f"layer {n}: fc shapes must be 1-D")
        weights = _decode_weight_rows(rec, n, out_shape[0], in_shape[0], (in_shape[0],))
        return LayerSpec(kind, in_shape, out_shape, weights=weights)
    if kind is LayerKind.MAXPOOL:
        if rec.get("window", 2) != 2 or rec.get("stride", 2) != 2:
            raise ParseError(f"layer {n}: only window=2 stride=2 maxpool is supported")
        return LayerSpec(kind, in_shape, out_shape)
    if kind is LayerKind.STEP:
        try:
            thresholds = IntTensor((len(rec["thresholds"]),), np.array(rec["thresholds"]))
            directions = [StepDirection(d) for d in rec["directions"]]
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"layer {n}: bad step thresholds/directions") from e
        return LayerSpec(kind, in_shape, out_shape, thresholds=thresholds, directions=directions)
    return LayerSpec(kind, in_shape, out_shape)


def model_from_doc(doc: dict, source: str = "<doc>") -> ModelSpec:
    _check_version(doc, source)
    try:
        inp = doc["input"]
        spec = ModelSpec(
            name=str(doc["name"]),
            input=InputSpec(int(inp["channels"]), int(inp["rows"]), int(inp["cols"]),
                            str(inp.get("element", "u8"))),
            layers=[_layer_from_rec(rec, i + 1) for i, rec in enumerate(doc["layers"])],
            num_classes=int(doc["num_classes"]),
        )
    except (KeyError, TypeError) as e:
        raise ParseError(f"{source}: missing or malformed field: {e}") from e
    violations = validate_model(spec)
    if violations:
        raise ValidationFailed(violations)
    return spec


def save_model(model: ModelSpec, path) -> None:
    _dump_canonical(model_to_doc(model), path)


def load_model(path) -> ModelSpec:
    return model_from_doc(_load_json(path), source=str(path))


def model_hash(model: ModelSpec) -> str:
    return model_digest(model)


# -- dataset ------------------------------------------------------------------


def load_dataset(path, expected_shape: tuple[int, int, int],
                 num_classes: int) -> tuple[IntTensor, list[int]]:
    """CSV rows of `label, pixel*` -> (images [N,C,H,W], labels).

    Pixels are kept exactly as read; each row must carry 1 + C*H*W integer
    fields with pixels in 0..255 and the label in 0..num_classes-1.  An
    empty file yields an N=0 dataset.
    """
    c, h, w = expected_shape
    npix = c * h * w
    rows = []
    labels: list[int] = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 1 + npix:
                raise ParseError(
                    f"{path}: row {lineno}: expected {1 + npix} fields, got {len(fields)}"
                )
            try:
                vals = np.array(fields, dtype=np.int64)
            except ValueError as e:
                raise ParseError(f"{path}: row {lineno}: non-integer field: {e}") from e
            label = int(vals[0])
            if not 0 <= label < num_classes:
                raise LabelOutOfRange(
                    f"{path}: row {lineno}: label {label} outside 0..{num_classes - 1}"
                )
            pixels = vals[1:]
            if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
                raise ParseError(f"{path}: row {lineno}: pixel outside 0..255")
            labels.append(label)
            rows.append(pixels)
    n = len(rows)
    data = np.array(rows, dtype=np.int32).reshape(n, c, h, w) if n else np.zeros((0, c, h, w), np.int32)
    return IntTensor((n, c, h, w), data), labels


def save_dataset(path, images: IntTensor, labels: list[int]) -> None:
    """Writer for synthetic test data (the inverse of load_dataset)."""
    n = images.dims[0]
    if len(labels) != n:
        raise ShapeMismatch(f"{len(labels)} labels for {n} images")
    flat = images.values.reshape(n, -1)
    with open(path, "w") as f:
        for i in range(n):
            f.write(str(int(labels[i])))
            if flat.shape[1]:
                f.write(",")
                f.write(",".join(str(int(v)) for v in flat[i]))
            f.write("\n")


# -- plan ---------------------------------------------------------------------


def plan_to_doc(plan: ExecPlan) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_name": plan.model_name,
        "model_hash": plan.model_hash,
        "batch_size": plan.batch_size,
        "assignments": [c.value for c in plan.assignments],
        "predicted_total_ns": plan.predicted_total_ns,
        "workers": plan.workers,
    }


def plan_from_doc(doc: dict, source: str = "<doc>") -> ExecPlan:
    _check_version(doc, source)
    try:
        assignments = []
        for tag in doc["assignments"]:
            try:
                assignments.append(ParallelConfig(tag))
            except ValueError as e:
                raise ParseError(f"{source}: unknown config tag {tag!r}") from e
        predicted = doc["predicted_total_ns"]
        return ExecPlan(
            model_name=str(doc["model_name"]),
            model_hash=str(doc["model_hash"]),
            batch_size=int(doc["batch_size"]),
            assignments=assignments,
            predicted_total_ns=None if predicted is None else float(predicted),
            workers=int(doc["workers"]),
        )
    except (KeyError, TypeError) as e:
        raise ParseError(f"{source}: missing or malformed field: {e}") from e


def save_plan(plan: ExecPlan, path) -> None:
    _dump_canonical(plan_to_doc(plan), path)


def load_plan(path, expected_model_hash: str | None = None) -> ExecPlan:
    plan = plan_from_doc(_load_json(path), source=str(path))
    if expected_model_hash is not None and plan.model_hash != expected_model_hash:
        raise ModelHashMismatch(
            f"{path}: plan was tuned for model {plan.model_hash[:12]}..., "
            f"got {expected_model_hash[:12]}..."
        )
    return plan


# -- profile table ------------------------------------------------------------


def profile_to_doc(table: ProfileTable) -> dict:
    entries = [
        {
            "layer": layer,
            "config": config.value,
            "batch": batch,
            "overhead_ns": entry.overhead_ns,
            "compute_ns": entry.compute_ns,
            "reps": entry.reps,
            "spread": entry.spread,
        }
        for (layer, config, batch), entry in sorted(
            table.entries.items(), key=lambda kv: (kv[0][0], kv[0][1].tie_rank, kv[0][2])
        )
    ]
    meta = table.meta
    doc = {
        "format_version": FORMAT_VERSION,
        "metadata": {
            "model_hash": meta.model_hash,
            "workers": meta.workers,
            "host": meta.host,
            "timestamp": meta.timestamp,
            "warmups": meta.warmups,
            "reps": meta.reps,
            "batch_sizes": list(meta.batch_sizes),
        },
        "entries": entries,
    }
    if table.per_batch_argmin is not None:
        doc["per_batch_argmin"] = {
            str(b): [c.value for c in cfgs] for b, cfgs in table.per_batch_argmin.items()
        }
    return doc


def profile_from_doc(doc: dict, source: str = "<doc>") -> ProfileTable:
    _check_version(doc, source)
    try:
        m = doc["metadata"]
        meta = ProfileMeta(
            model_hash=str(m["model_hash"]),
            workers=int(m["workers"]),
            host=str(m["host"]),
            timestamp=str(m["timestamp"]),
            warmups=int(m["warmups"]),
            reps=int(m["reps"]),
            batch_sizes=tuple(int(b) for b in m["batch_sizes"]),
        )
        entries = {}
        for rec in doc["entries"]:
            try:
                config = ParallelConfig(rec["config"])
            except ValueError as e:
                raise ParseError(f"{source}: unknown config tag {rec['config']!r}") from e
            key = (int(rec["layer"]), config, int(rec["batch"]))
            entries[key] = ProfileEntry(
                overhead_ns=float(rec["overhead_ns"]),
                compute_ns=float(rec["compute_ns"]),
                reps=int(rec["reps"]),
                spread=float(rec["spread"]),
            )
        argmin = None
        if "per_batch_argmin" in doc:
            argmin = {
                int(b): [ParallelConfig(tag) for tag in tags]
                for b, tags in doc["per_batch_argmin"].items()
            }
        return ProfileTable(entries=entries, meta=meta, per_batch_argmin=argmin)
    except (KeyError, TypeError) as e:
        raise ParseError(f"{source}: missing or malformed field: {e}") from e


def save_profile(table: ProfileTable, path) -> None:
    _dump_canonical(profile_to_doc(table), path)


def load_profile(path) -> ProfileTable:
    return profile_from_doc(_load_json(path), source=str(path))


# -- synthetic models ---------------------------------------------------------

ARCHITECTURES = ("fashion", "cifar10")

# (kind, parameter) rows; conv/fc parameter = output neurons.
_FASHION_STACK = [
    ("conv", 64), ("pool", None), ("step", None),
    ("conv", 64), ("pool", None), ("step", None),
    ("flat", None), ("fc", 2048), ("step", None), ("fc_out", None),
]
_CIFAR10_STACK = [
    ("conv", 64), ("step", None),
    ("conv", 64), ("pool", None), ("step", None),
    ("conv", 256), ("step", None),
    ("conv", 256), ("pool", None), ("step", None),
    ("conv", 512), ("step", None),
    ("conv", 512), ("pool", None), ("step", None),
    ("flat", None), ("fc", 1024), ("step", None), ("fc_out", None),
]


def export_synthetic_model(arch: str, seed: int) -> ModelSpec:
    """Deterministic random +-1 weights over a paper-shaped architecture.

    Trained weights are not shipped; random weights preserve every shape
    and timing property.  Step thresholds are drawn uniformly over
    [-window_bits, +window_bits] of the preceding dot-product window so
    both step outcomes occur, with all directions positive.
    """
    if arch == "fashion":
        stack, input_spec = _FASHION_STACK, InputSpec(1, 28, 28)
    elif arch == "cifar10":
        stack, input_spec = _CIFAR10_STACK, InputSpec(3, 32, 32)
    else:
        raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    num_classes = 10
    rng = np.random.default_rng(seed)
    layers: list[LayerSpec] = []
    shape: tuple[int, ...] = input_spec.shape
    window_bits = 0
    first = True
    for op, param in stack:
        if op == "conv":
            c = shape[0]
            k = param
            bits = rng.integers(0, 2, size=(k, c * 9), dtype=np.uint8)
            weights = [BinaryTensor.from_bits(bits[i], (c, 3, 3)) for i in range(k)]
            kind = LayerKind.CONV_INT if first else LayerKind.CONV_BIN
            out = (k, shape[1], shape[2])
            layers.append(LayerSpec(kind, shape, out, weights=weights))
            window_bits = c * 9
            shape = out
        elif op == "pool":
            out = (shape[0], shape[1] // 2, shape[2] // 2)
            layers.append(LayerSpec(LayerKind.MAXPOOL, shape, out))
            shape = out
        elif op == "step":
            channels = shape[0]
            thr = rng.integers(-window_bits, window_bits + 1, size=channels)
            layers.append(LayerSpec(
                LayerKind.STEP, shape, shape,
                thresholds=IntTensor((channels,), thr),
                directions=[StepDirection.POS] * channels,
            ))
        elif op == "flat":
            length = shape[0] * shape[1] * shape[2]
            layers.append(LayerSpec(LayerKind.FLATTEN, shape, (length,)))
            shape = (length,)
        elif op == "fc":
            m = param
            bits = rng.integers(0, 2, size=(m, shape[0]), dtype=np.uint8)
            weights = [BinaryTensor.from_bits(bits[i], (shape[0],)) for i in range(m)]
            layers.append(LayerSpec(LayerKind.FC_BIN, shape, (m,), weights=weights))
            window_bits = shape[0]
            shape = (m,)
        else:  # fc_out
            bits = rng.integers(0, 2, size=(num_classes, shape[0]), dtype=np.uint8)
            weights = [BinaryTensor.from_bits(bits[i], (shape[0],)) for i in range(num_classes)]
            layers.append(LayerSpec(LayerKind.FC_INT_OUT, shape, (num_classes,), weights=weights))
            shape = (num_classes,)
        first = False
    return ModelSpec(
        name=f"{arch}-synthetic-seed{seed}",
        input=input_spec,
        layers=layers,
        num_classes=num_classes,
    )
