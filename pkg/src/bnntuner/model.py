"""Model, layer, and parallel-configuration vocabulary.

A network is a chain of seven layer kinds over {-1,+1} data: an integer
first convolution over raw pixels, binary convolutions, 2x2 maxpools, step
(threshold) layers fusing batch-norm + activation, a flatten, binary
fully-connected layers, and an integer-output final fully-connected layer.
Convolutions are fixed at 3x3 kernel, same padding, stride 1; maxpool at
2x2 window, stride 2.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .tensors import BinaryTensor, IntTensor

KERNEL = 3
PAD = 1
POOL_WINDOW = 2
POOL_STRIDE = 2


class LayerKind(enum.Enum):
    CONV_INT = "conv_int"
    CONV_BIN = "conv_bin"
    MAXPOOL = "maxpool"
    STEP = "step"
    FLATTEN = "flatten"
    FC_BIN = "fc_bin"
    FC_INT_OUT = "fc_int_out"


class ParallelConfig(enum.Enum):
    """The eight per-layer executors; CPU is the sequential reference.

    Composites partition work along the Cartesian product of their axes:
    X across batch images, Y across output row bands, Z across output
    channels/neurons.  Definition order is the deterministic tie-break
    order used by the mapper.
    """

    CPU = "CPU"
    X = "X"
    Y = "Y"
    Z = "Z"
    XY = "XY"
    XZ = "XZ"
    YZ = "YZ"
    XYZ = "XYZ"

    @property
    def axes(self) -> frozenset[str]:
        return frozenset() if self is ParallelConfig.CPU else frozenset(self.value)

    @property
    def tie_rank(self) -> int:
        return _CONFIG_RANK[self]


_CONFIG_RANK = {c: i for i, c in enumerate(ParallelConfig)}

CONFIG_ORDER = tuple(ParallelConfig)


class StepDirection(enum.Enum):
    """Comparison direction of a step channel (negative batch-norm scale flips it)."""

    POS = "pos"  # +1 iff value > threshold
    NEG = "neg"  # +1 iff value < threshold


@dataclass(eq=False)
class LayerSpec:
    """One layer: kind, boundary shapes, and kind-specific parameters.

    Shapes are (channels, rows, cols) for spatial layers and (length,) after
    flatten.  `weights` holds one BinaryTensor per output channel (conv
    filters of dims (in_channels, 3, 3)) or per output neuron (fc rows of
    dims (in_length,)).  `thresholds`/`directions` belong to step layers.
    """

    kind: LayerKind
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    weights: list[BinaryTensor] | None = None
    thresholds: IntTensor | None = None
    directions: list[StepDirection] | None = None
    _prepared: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.in_shape = tuple(int(d) for d in self.in_shape)
        self.out_shape = tuple(int(d) for d in self.out_shape)

    @property
    def out_channels(self) -> int:
        return self.out_shape[0]

    def prepared(self) -> dict:
        """Dense/stacked weight forms, built lazily and cached on the spec.

        The cache is a pure function of the immutable parameters, so a
        racing rebuild is harmless.
        """
        if self._prepared is None:
            self._prepared = _prepare(self)
        return self._prepared


def _prepare(layer: LayerSpec) -> dict:
    from .tensors import pack_words  # local import keeps tensors free of model deps

    prep: dict = {}
    if layer.weights is not None:
        nbits = layer.weights[0].size
        dense = np.stack([w.unpack().reshape(-1) for w in layer.weights]).astype(np.float32)
        dense.setflags(write=False)
        prep["w_dense"] = dense
        prep["w_bits"] = nbits
        prep["w_valid"] = all(w.fully_valid() for w in layer.weights)
        if kind_is_conv(layer.kind):
            # channel-last, tap-major packed form for the word-parallel
            # kernels: [K, 9 * ceil(C/64)] with tap order (dy, dx)
            bits = np.stack([w.value_bits() for w in layer.weights])  # [K, C, 3, 3]
            taps = pack_words(bits.transpose(0, 2, 3, 1))  # [K, 3, 3, nwc]
            cl = np.ascontiguousarray(taps.reshape(taps.shape[0], -1))
            cl.setflags(write=False)
            prep["w_cl"] = cl
        else:
            words = np.stack([w.words for w in layer.weights])
            words.setflags(write=False)
            prep["w_words"] = words
    if layer.thresholds is not None:
        prep["thresholds"] = layer.thresholds.values.reshape(-1)
        pos = np.array([d is StepDirection.POS for d in layer.directions], dtype=bool)
        pos.setflags(write=False)
        prep["positive"] = pos
    return prep


def kind_is_conv(kind: LayerKind) -> bool:
    return kind in (LayerKind.CONV_INT, LayerKind.CONV_BIN)


@dataclass(frozen=True)
class InputSpec:
    channels: int
    rows: int
    cols: int
    element: str = "u8"

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.rows, self.cols)


@dataclass(eq=False)
class ModelSpec:
    name: str
    input: InputSpec
    layers: list[LayerSpec]
    num_classes: int


def layer_display_name(layer: LayerSpec) -> str:
    """Paper-style shorthand: C64, MP14, S, FLAT, FC2048."""
    kind = layer.kind
    if kind in (LayerKind.CONV_INT, LayerKind.CONV_BIN):
        return f"C{layer.out_shape[0]}"
    if kind is LayerKind.MAXPOOL:
        return f"MP{layer.out_shape[1]}"
    if kind is LayerKind.STEP:
        return "S"
    if kind is LayerKind.FLATTEN:
        return "FLAT"
    return f"FC{layer.in_shape[0]}" if kind is LayerKind.FC_INT_OUT else f"FC{layer.out_shape[0]}"


# -- validation --------------------------------------------------------------

_BINARY_IN = {LayerKind.CONV_BIN, LayerKind.FC_BIN, LayerKind.FC_INT_OUT}
_INT_IN = {LayerKind.CONV_INT, LayerKind.STEP}


def validate_model(model: ModelSpec) -> list[str]:
    """Return every structural violation; an empty list means the model is well formed.

    Checks shape chaining, kind ordering (first ConvInt, last FcIntOut,
    binary/integer domain transitions), and parameter sizes.
    """
    v: list[str] = []
    layers = model.layers
    if not layers:
        return ["model has no layers"]

    if layers[0].kind is not LayerKind.CONV_INT:
        v.append(f"layer 1 must be {LayerKind.CONV_INT.value}, got {layers[0].kind.value}")
    if layers[0].in_shape != model.input.shape:
        v.append(f"layer 1 in_shape {layers[0].in_shape} != input shape {model.input.shape}")
    last = layers[-1]
    if last.kind is not LayerKind.FC_INT_OUT:
        v.append(f"last layer must be {LayerKind.FC_INT_OUT.value}, got {last.kind.value}")
    elif last.out_shape != (model.num_classes,):
        v.append(f"last layer out length {last.out_shape} != num_classes {model.num_classes}")

    for i in range(len(layers) - 1):
        if layers[i].out_shape != layers[i + 1].in_shape:
            v.append(f"shape chain broken at layer {i + 2}")

    domain = "int"  # raw pixels
    for idx, layer in enumerate(layers):
        n = idx + 1
        v.extend(_check_layer(layer, n))
        if layer.kind is LayerKind.CONV_INT and idx != 0:
            v.append(f"layer {n}: {LayerKind.CONV_INT.value} allowed only as layer 1")
        if layer.kind is LayerKind.FC_INT_OUT and idx != len(layers) - 1:
            v.append(f"layer {n}: {LayerKind.FC_INT_OUT.value} allowed only as the last layer")
        if layer.kind in _BINARY_IN and domain != "bin":
            v.append(f"layer {n}: {layer.kind.value} needs binary input but gets integer")
        if layer.kind in _INT_IN and domain != "int":
            v.append(f"layer {n}: {layer.kind.value} needs integer input but gets binary")
        domain = _out_domain(layer.kind, domain)
    return v


def _out_domain(kind: LayerKind, domain: str) -> str:
    if kind in (LayerKind.CONV_INT, LayerKind.CONV_BIN, LayerKind.FC_BIN, LayerKind.FC_INT_OUT):
        return "int"
    if kind is LayerKind.STEP:
        return "bin"
    return domain  # maxpool / flatten preserve the carrier


def _check_layer(layer: LayerSpec, n: int) -> list[str]:
    v: list[str] = []
    kind = layer.kind
    if kind in (LayerKind.CONV_INT, LayerKind.CONV_BIN):
        if len(layer.in_shape) != 3 or len(layer.out_shape) != 3:
            return [f"layer {n}: conv shapes must be 3-D"]
        c, h, w = layer.in_shape
        k = layer.out_shape[0]
        if layer.out_shape[1:] != (h, w):
            v.append(f"layer {n}: same-padding conv must keep spatial dims ({h}x{w})")
        if not layer.weights:
            v.append(f"layer {n}: conv has no weights")
        else:
            if len(layer.weights) != k:
                v.append(f"layer {n}: {len(layer.weights)} filters for {k} output channels")
            for ki, filt in enumerate(layer.weights):
                if filt.dims != (c, KERNEL, KERNEL):
                    v.append(f"layer {n}: filter {ki} dims {filt.dims} != {(c, KERNEL, KERNEL)}")
                    break
            if layer.weights and not layer.weights[0].fully_valid():
                v.append(f"layer {n}: conv weights must be fully valid")
    elif kind is LayerKind.MAXPOOL:
        if len(layer.in_shape) != 3:
            return [f"layer {n}: maxpool shapes must be 3-D"]
        c, h, w = layer.in_shape
        if h % 2 or w % 2:
            v.append(f"layer {n}: maxpool input spatial dims must be even, got {h}x{w}")
        if layer.out_shape != (c, h // 2, w // 2):
            v.append(f"layer {n}: maxpool out_shape {layer.out_shape} != {(c, h // 2, w // 2)}")
    elif kind is LayerKind.STEP:
        if layer.out_shape != layer.in_shape:
            v.append(f"layer {n}: step must preserve shape")
        channels = layer.in_shape[0]
        if layer.thresholds is None or layer.thresholds.size != channels:
            got = None if layer.thresholds is None else layer.thresholds.size
            v.append(f"layer {n}: step needs {channels} thresholds, got {got}")
        if layer.directions is None or len(layer.directions) != channels:
            v.append(f"layer {n}: step needs {channels} direction flags")
    elif kind is LayerKind.FLATTEN:
        if len(layer.out_shape) != 1 or layer.out_shape[0] != math.prod(layer.in_shape):
            v.append(f"layer {n}: flatten out length must be {math.prod(layer.in_shape)}")
    else:  # FC_BIN / FC_INT_OUT
        if len(layer.in_shape) != 1 or len(layer.out_shape) != 1:
            return [f"layer {n}: fc shapes must be 1-D"]
        length, m = layer.in_shape[0], layer.out_shape[0]
        if not layer.weights:
            v.append(f"layer {n}: fc has no weights")
        else:
            if len(layer.weights) != m:
                v.append(f"layer {n}: {len(layer.weights)} weight rows for {m} outputs")
            if any(w.dims != (length,) for w in layer.weights):
                v.append(f"layer {n}: fc weight rows must have dims ({length},)")
            elif not layer.weights[0].fully_valid():
                v.append(f"layer {n}: fc weights must be fully valid")
    return v


# -- content hash -------------------------------------------------------------


def model_digest(model: ModelSpec) -> str:
    """256-bit content hash of the canonical model serialization (hex).

    Plans and profile tables bind to this digest so a stale plan cannot be
    replayed against a different model.  The byte stream is: header fields,
    then per layer the kind tag, shapes, raw little-endian weight words,
    thresholds, and direction flags.
    """
    h = hashlib.sha256()
    h.update(b"bnntuner-model-v1\0")
    h.update(model.name.encode())
    h.update(np.array(model.input.shape + (model.num_classes,), dtype="<i8").tobytes())
    for layer in model.layers:
        h.update(layer.kind.value.encode() + b"\0")
        h.update(np.array(layer.in_shape, dtype="<i8").tobytes())
        h.update(np.array(layer.out_shape, dtype="<i8").tobytes())
        if layer.weights is not None:
            for w in layer.weights:
                h.update(w.words.astype("<u8").tobytes())
        if layer.thresholds is not None:
            h.update(layer.thresholds.values.astype("<i4").tobytes())
            h.update("".join(d.value[0] for d in layer.directions).encode())
    return h.hexdigest()
