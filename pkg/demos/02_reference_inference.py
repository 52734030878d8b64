"""Run the sequential reference engine over a synthetic 10-layer model.

The model mirrors a small VGG-style binarized network for 28x28 grayscale
images: an integer first convolution, maxpools, threshold (step) layers
standing in for batch-norm + binary activation, a flatten, and two
fully-connected layers ending in integer class scores. Weights are random
+-1 (deterministic in the seed), so predictions are near-chance; shapes,
arithmetic, and timing behavior match a trained model exactly.
"""

import numpy as np

from bnntuner import (
    Activation,
    IntTensor,
    export_synthetic_model,
    layer_display_name,
    layer_forward,
    reference_infer,
)

model = export_synthetic_model("fashion", seed=7)
print(f"model: {model.name}, {len(model.layers)} layers")

rng = np.random.default_rng(42)
batch = IntTensor((4, 1, 28, 28), rng.integers(0, 256, (4, 1, 28, 28)))

# Walk the layers by hand to see the shape/carrier trace.
act = Activation.of_integer(batch)
print(f"\n{'layer':>6}  {'name':<8} {'carrier':<8} sample shape")
for i, layer in enumerate(model.layers):
    act = layer_forward(layer, act)
    carrier = "binary" if act.is_binary else "integer"
    print(f"{i + 1:>6}  {layer_display_name(layer):<8} {carrier:<8} {act.sample_shape}")

logits, preds = reference_infer(model, batch)
print(f"\nlogits of image 0: {logits.values[0].tolist()}")
print(f"predictions: {preds}")
