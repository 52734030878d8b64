"""Bit-packed {-1,+1} vectors and the xnor/popcount dot product.

A dot product of two +-1 vectors counts agreements minus disagreements,
so after packing each vector into 64-bit words it collapses to
2 * popcount(xnor(a, b)) - n. Validity masks extend this to padded
positions: masked-out bits simply drop out of both the popcount and n.
"""

import numpy as np

from bnntuner import BinaryTensor, pack_bits, xnor_popcount_dot

rng = np.random.default_rng(0)

# Pack two random +-1 vectors.
n = 100
a_vals = rng.choice([-1, 1], size=n)
b_vals = rng.choice([-1, 1], size=n)
a = pack_bits(a_vals, (n,))
b = pack_bits(b_vals, (n,))

print(f"a needs {a.nwords} words for {n} bits")
print(f"first word of a: {a.words[0]:064b}")

plain = int((a_vals * b_vals).sum())
packed = xnor_popcount_dot(a, b)
print(f"plain integer dot: {plain}")
print(f"xnor/popcount dot: {packed}")
assert plain == packed

# Same thing with a validity mask: only positions valid in BOTH vectors count.
mask = rng.integers(0, 2, n).astype(bool)
a_masked = BinaryTensor.from_bits(a_vals == 1, (n,), valid=mask)
masked_plain = int((a_vals * b_vals)[mask].sum())
masked_packed = xnor_popcount_dot(a_masked, b)
print(f"\nwith {mask.sum()} valid positions: plain {masked_plain}, packed {masked_packed}")
assert masked_plain == masked_packed

# Round trip: unpack(pack(v)) == v.
assert np.array_equal(a.unpack(), a_vals)
print("\npack/unpack round trip holds")
