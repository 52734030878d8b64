"""One convolution layer under all eight execution backends.

Every backend must produce bit-identical output; what differs is the cost
structure. The parallel configurations partition the output space along
the Data (X: batch images), Window (Y: output row bands), and Neuron
(Z: output channels) axes and pay staging overhead (copy-in, bit
re-layout, dispatch, copy-back) on every call, like a GPU paying
host<->device transfers before and after each layer. Fine partitions on a
small layer mean many tiny work items, which is exactly why fully-parallel
execution can lose to the plain CPU path.
"""

import numpy as np

from bnntuner import (
    Activation,
    ExecutionEngine,
    IntTensor,
    ParallelConfig,
    applicable_configs,
    export_synthetic_model,
    layer_forward,
    partition_work,
)

model = export_synthetic_model("fashion", seed=7)
rng = np.random.default_rng(1)
batch = IntTensor((8, 1, 28, 28), rng.integers(0, 256, (8, 1, 28, 28)))

# Propagate to the second convolution (binary input, 64 -> 64 channels).
act = Activation.of_integer(batch)
for layer in model.layers[:3]:
    act = layer_forward(layer, act)
conv = model.layers[3]
reference = layer_forward(conv, act)

print(f"layer: conv_bin {conv.in_shape} -> {conv.out_shape}, batch 8\n")
print(f"{'config':<6} {'items':>6} {'overhead ms':>12} {'compute ms':>12} {'equal':>6}")
with ExecutionEngine(workers=2) as engine:
    for config in applicable_configs(conv.kind):
        if config is ParallelConfig.CPU:
            items = "-"
        else:
            items = len(partition_work(conv, config, 8, engine.workers))
        timed = engine.execute_layer(conv, act, config)
        equal = timed.output == reference
        print(f"{config.value:<6} {items:>6} {timed.overhead_ns / 1e6:>12.2f} "
              f"{timed.compute_ns / 1e6:>12.2f} {str(equal):>6}")
        assert equal
