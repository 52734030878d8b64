"""Sequential reference implementation of every layer kind.

This is the single source of numerical truth: every backend must reproduce
these outputs bit-exactly.  Convolutions and fully-connected layers unpack
the +-1 operands (invalid positions become 0, so padding contributes
nothing) and multiply in float32.  All products and partial sums are
integers far below 2**24, so float32 accumulation is exact regardless of
summation order and the results are identical to masked xnor/popcount
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OddSpatialDim, ShapeMismatch
from .model import KERNEL, LayerKind, LayerSpec, ModelSpec
from .tensors import BinaryTensor, IntTensor


@dataclass(frozen=True, eq=False)
class Activation:
    """Inter-layer value: exactly one of a binary or an integer tensor.

    Tensor dims are (batch, *sample_shape); sample_shape matches the layer
    boundary it sits on.
    """

    binary: BinaryTensor | None = None
    integer: IntTensor | None = None

    def __post_init__(self):
        if (self.binary is None) == (self.integer is None):
            raise ShapeMismatch("activation must hold exactly one of binary/integer")

    @classmethod
    def of_binary(cls, t: BinaryTensor) -> "Activation":
        return cls(binary=t)

    @classmethod
    def of_integer(cls, t: IntTensor) -> "Activation":
        return cls(integer=t)

    @property
    def is_binary(self) -> bool:
        return self.binary is not None

    @property
    def dims(self) -> tuple[int, ...]:
        return self.binary.dims if self.is_binary else self.integer.dims

    @property
    def batch(self) -> int:
        return self.dims[0]

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.dims[1:]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Activation)
            and self.is_binary == other.is_binary
            and (self.binary == other.binary if self.is_binary else self.integer == other.integer)
        )


def _same_pad_patches(vals: np.ndarray) -> np.ndarray:
    """im2col for a 3x3 same-padding conv: (B,C,H,W) -> (B,H,W,C*9) float32.

    Out-of-range taps are zero, which is exactly the masked-invalid
    contribution of the packed arithmetic.
    """
    b, c, h, w = vals.shape
    padded = np.zeros((b, c, h + 2, w + 2), dtype=np.float32)
    padded[:, :, 1:-1, 1:-1] = vals
    windows = np.lib.stride_tricks.sliding_window_view(padded, (KERNEL, KERNEL), axis=(2, 3))
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, h, w, c * KERNEL * KERNEL)


def _conv_same3(vals: np.ndarray, w_dense: np.ndarray) -> np.ndarray:
    """(B,C,H,W) float32 x (K, C*9) float32 -> (B,K,H,W) int32."""
    b, _, h, w = vals.shape
    patches = _same_pad_patches(vals)
    out = patches.reshape(b * h * w, -1) @ w_dense.T
    return out.reshape(b, h, w, -1).transpose(0, 3, 1, 2).astype(np.int32)


def conv_int_forward(inp: IntTensor, weights: list[BinaryTensor], out_channels: int,
                     w_dense: np.ndarray | None = None) -> IntTensor:
    """First-layer convolution: integer pixels against +-1 filters."""
    if len(inp.dims) != 4:
        raise ShapeMismatch(f"conv input must be (B,C,H,W), got {inp.dims}")
    if w_dense is None:
        w_dense = np.stack([f.unpack().reshape(-1) for f in weights]).astype(np.float32)
    if w_dense.shape != (out_channels, inp.dims[1] * KERNEL * KERNEL):
        raise ShapeMismatch(f"weights {w_dense.shape} do not fit input {inp.dims}")
    out = _conv_same3(inp.values.astype(np.float32), w_dense)
    return IntTensor(out.shape, out)


def conv_bin_forward(inp: BinaryTensor, weights: list[BinaryTensor], out_channels: int,
                     w_dense: np.ndarray | None = None) -> IntTensor:
    """Binary convolution: each output equals the xnor/popcount dot product
    over the (C,3,3) receptive field with border taps masked invalid."""
    if len(inp.dims) != 4:
        raise ShapeMismatch(f"conv input must be (B,C,H,W), got {inp.dims}")
    if w_dense is None:
        w_dense = np.stack([f.unpack().reshape(-1) for f in weights]).astype(np.float32)
    if w_dense.shape != (out_channels, inp.dims[1] * KERNEL * KERNEL):
        raise ShapeMismatch(f"weights {w_dense.shape} do not fit input {inp.dims}")
    out = _conv_same3(inp.unpack().astype(np.float32), w_dense)
    return IntTensor(out.shape, out)


def maxpool_forward(act: Activation) -> Activation:
    """2x2/stride-2 max; on binary data the window max is an OR of the bits."""
    dims = act.dims
    if len(dims) != 4:
        raise ShapeMismatch(f"maxpool input must be (B,C,H,W), got {dims}")
    b, c, h, w = dims
    if h % 2 or w % 2:
        raise OddSpatialDim(f"maxpool needs even spatial dims, got {h}x{w}")
    if act.is_binary:
        bits = act.binary.value_bits().reshape(b, c, h // 2, 2, w // 2, 2)
        pooled = bits.any(axis=(3, 5))
        return Activation.of_binary(BinaryTensor.from_bits(pooled, pooled.shape))
    vals = act.integer.values.reshape(b, c, h // 2, 2, w // 2, 2)
    pooled = vals.max(axis=(3, 5))
    return Activation.of_integer(IntTensor(pooled.shape, pooled))


def step_forward(inp: IntTensor, thresholds: IntTensor, positive: np.ndarray) -> BinaryTensor:
    """Per-channel strict threshold: +1 iff v > T (POS) or v < T (NEG), else -1."""
    vals = inp.values
    channels = vals.shape[1]
    thr = thresholds.values.reshape(-1)
    if thr.shape[0] != channels or positive.shape[0] != channels:
        raise ShapeMismatch(f"{thr.shape[0]} thresholds / {positive.shape[0]} flags for {channels} channels")
    extra = (1,) * (vals.ndim - 2)
    t = thr.reshape((1, channels) + extra)
    pos = positive.reshape((1, channels) + extra)
    bits = np.where(pos, vals > t, vals < t)
    return BinaryTensor.from_bits(bits, vals.shape)


def flatten_forward(act: Activation) -> Activation:
    """(B, C, H, W) -> (B, C*H*W) in channel-major order.

    Packing is row-major over (B,C,H,W), so the flat view reuses the same
    words; only the dims change.
    """
    b = act.batch
    length = 1
    for d in act.sample_shape:
        length *= d
    if act.is_binary:
        return Activation.of_binary(act.binary.with_dims((b, length)))
    return Activation.of_integer(act.integer.with_dims((b, length)))


def fc_forward(inp: BinaryTensor, weights: list[BinaryTensor],
               w_dense: np.ndarray | None = None) -> IntTensor:
    """out[b, m] = xnor/popcount dot of input row b with weight row m."""
    if len(inp.dims) != 2:
        raise ShapeMismatch(f"fc input must be (B, L), got {inp.dims}")
    length = inp.dims[1]
    if w_dense is None:
        w_dense = np.stack([r.unpack() for r in weights]).astype(np.float32)
    if w_dense.shape[1] != length:
        raise ShapeMismatch(f"fc weights expect L={w_dense.shape[1]}, input has L={length}")
    out = (inp.unpack().astype(np.float32) @ w_dense.T).astype(np.int32)
    return IntTensor(out.shape, out)


def layer_forward(layer: LayerSpec, act: Activation) -> Activation:
    """Apply one layer with the reference implementation."""
    if act.sample_shape != layer.in_shape:
        raise ShapeMismatch(
            f"{layer.kind.value} expects sample shape {layer.in_shape}, got {act.sample_shape}"
        )
    kind = layer.kind
    if kind is LayerKind.CONV_INT:
        if act.is_binary:
            raise ShapeMismatch("conv_int expects an integer activation")
        prep = layer.prepared()
        return Activation.of_integer(
            conv_int_forward(act.integer, layer.weights, layer.out_channels, prep["w_dense"])
        )
    if kind is LayerKind.CONV_BIN:
        if not act.is_binary:
            raise ShapeMismatch("conv_bin expects a binary activation")
        prep = layer.prepared()
        return Activation.of_integer(
            conv_bin_forward(act.binary, layer.weights, layer.out_channels, prep["w_dense"])
        )
    if kind is LayerKind.MAXPOOL:
        return maxpool_forward(act)
    if kind is LayerKind.STEP:
        if act.is_binary:
            raise ShapeMismatch("step expects an integer activation")
        prep = layer.prepared()
        return Activation.of_binary(step_forward(act.integer, layer.thresholds, prep["positive"]))
    if kind is LayerKind.FLATTEN:
        return flatten_forward(act)
    # FC_BIN / FC_INT_OUT
    if not act.is_binary:
        raise ShapeMismatch(f"{kind.value} expects a binary activation")
    prep = layer.prepared()
    return Activation.of_integer(fc_forward(act.binary, layer.weights, prep["w_dense"]))


def reference_infer(model: ModelSpec, batch: IntTensor) -> tuple[IntTensor, list[int]]:
    """Run the whole model sequentially; prediction = argmax (lowest index wins ties)."""
    if len(batch.dims) != 4 or batch.dims[1:] != model.input.shape:
        raise ShapeMismatch(f"batch dims {batch.dims} do not match input {model.input.shape}")
    act = Activation.of_integer(batch)
    for layer in model.layers:
        act = layer_forward(layer, act)
    logits = act.integer
    preds = np.argmax(logits.values, axis=1)
    return logits, [int(p) for p in preds]
