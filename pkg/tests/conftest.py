import numpy as np
import pytest

from bnntuner import (
    BinaryTensor,
    IntTensor,
    LayerKind,
    LayerSpec,
    StepDirection,
    export_synthetic_model,
)


@pytest.fixture(scope="session")
def fashion_model():
    return export_synthetic_model("fashion", 7)


@pytest.fixture(scope="session")
def cifar_model():
    return export_synthetic_model("cifar10", 1)


def random_binary(rng, dims, masked=False) -> BinaryTensor:
    bits = rng.integers(0, 2, size=dims, dtype=np.uint8).astype(bool)
    valid = None
    if masked:
        valid = rng.integers(0, 2, size=dims, dtype=np.uint8).astype(bool)
    return BinaryTensor.from_bits(bits, dims, valid)


def random_conv_layer(rng, kind, c, k, h, w) -> LayerSpec:
    weights = [random_binary(rng, (c, 3, 3)) for _ in range(k)]
    return LayerSpec(kind, (c, h, w), (k, h, w), weights=weights)


def random_step_layer(rng, shape, window_bits=16) -> LayerSpec:
    channels = shape[0]
    thr = rng.integers(-window_bits, window_bits + 1, size=channels)
    directions = [
        StepDirection.POS if rng.integers(0, 2) else StepDirection.NEG for _ in range(channels)
    ]
    return LayerSpec(
        LayerKind.STEP, shape, shape,
        thresholds=IntTensor((channels,), thr), directions=directions,
    )


def random_fc_layer(rng, kind, length, m) -> LayerSpec:
    weights = [random_binary(rng, (length,)) for _ in range(m)]
    return LayerSpec(kind, (length,), (m,), weights=weights)
