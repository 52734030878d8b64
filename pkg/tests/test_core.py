"""pack/unpack, xnor-popcount dot product, and model validation."""

import numpy as np
import pytest

from bnntuner import (
    BinaryTensor,
    LayerKind,
    LengthMismatch,
    NonBinaryValue,
    export_synthetic_model,
    pack_bits,
    validate_model,
    xnor_popcount_dot,
)
from conftest import random_binary
from oracles import dot_oracle


class TestPackBits:
    def test_all_plus_one(self):
        t = pack_bits([1, 1, 1, 1], (4,))
        assert t.words[0] == 0b1111
        assert t.valid_mask[0] == 0b1111

    def test_all_minus_one(self):
        t = pack_bits([-1, -1], (2,))
        assert t.words[0] == 0
        assert t.valid_mask[0] == 0b11

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 300))
            v = rng.choice([-1, 1], size=n)
            assert np.array_equal(pack_bits(v, (n,)).unpack(), v)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pack_bits([1, -1, 1], (4,))

    def test_non_binary_value(self):
        with pytest.raises(NonBinaryValue):
            pack_bits([1, 0, -1], (3,))

    def test_canonical_trailing_and_masked_bits(self):
        # stray bits beyond the logical size and under invalid positions are cleared
        words = np.array([0xFFFF_FFFF_FFFF_FFFF], dtype=np.uint64)
        mask = np.array([0b0101], dtype=np.uint64)
        t = BinaryTensor((4,), words, mask)
        assert t.words[0] == 0b0101
        assert t.valid_mask[0] == 0b0101
        assert list(t.unpack()) == [1, 0, 1, 0]

    def test_multidim_layout_row_major(self):
        bits = np.arange(8).reshape(2, 2, 2) % 2 == 0
        t = BinaryTensor.from_bits(bits, (2, 2, 2))
        assert np.array_equal(t.value_bits(), bits)


class TestXnorPopcountDot:
    def test_identical_vectors(self):
        a = pack_bits([1] * 8, (8,))
        assert xnor_popcount_dot(a, a) == 8

    def test_antipodal_vectors(self):
        a = pack_bits([1] * 8, (8,))
        b = pack_bits([-1] * 8, (8,))
        assert xnor_popcount_dot(a, b) == -8

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            xnor_popcount_dot(pack_bits([1], (1,)), pack_bits([1, 1], (2,)))

    def test_against_integer_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(2000):
            n = int(rng.integers(1, 193))
            a = random_binary(rng, (n,), masked=True)
            b = random_binary(rng, (n,), masked=True)
            mask = a.mask_bits() & b.mask_bits()
            expected = dot_oracle(
                np.where(a.value_bits(), 1, -1), np.where(b.value_bits(), 1, -1), mask
            )
            assert xnor_popcount_dot(a, b) == expected


class TestValidateModel:
    def test_fashion_arch_ok(self, fashion_model):
        assert validate_model(fashion_model) == []
        assert len(fashion_model.layers) == 10

    def test_cifar_arch_ok(self, cifar_model):
        assert validate_model(cifar_model) == []
        assert len(cifar_model.layers) == 19

    def test_deleted_maxpool_breaks_chain(self):
        m = export_synthetic_model("fashion", 7)
        del m.layers[1]  # the first maxpool
        violations = validate_model(m)
        assert any("shape chain broken at layer 2" in v for v in violations)

    def test_single_field_mutations_rejected(self, fashion_model):
        # out_shape, threshold count, weight count mutations all trip a check
        m = export_synthetic_model("fashion", 7)
        m.layers[3].out_shape = (63, 14, 14)
        assert validate_model(m)

        m = export_synthetic_model("fashion", 7)
        m.layers[2].thresholds = m.layers[2].thresholds.with_dims((64,))
        m.layers[2].in_shape = (32, 14, 14)
        assert validate_model(m)

        m = export_synthetic_model("fashion", 7)
        m.layers[7].weights = m.layers[7].weights[:-1]
        assert validate_model(m)

    def test_conv_int_only_first(self, fashion_model):
        m = export_synthetic_model("fashion", 7)
        m.layers[3].kind = LayerKind.CONV_INT
        violations = validate_model(m)
        assert any("allowed only as layer 1" in v for v in violations)

    def test_domain_chain(self):
        # conv_bin directly after conv_int sees integer data: rejected
        m = export_synthetic_model("cifar10", 3)
        del m.layers[1]  # drop the first step
        violations = validate_model(m)
        assert any("needs binary input" in v for v in violations)
