"""
Unit tests for QC-IRA code construction and belief propagation
"""
from fractions import Fraction

import numpy as np
import pytest

from app.core.exceptions import ValidationError
from app.services.impl.ldpc import (
    bp_decode,
    build_qc_ira_code,
    channel_llr,
    code_from_matrix,
    gf2_rank,
    lift_size_for,
    parse_rate,
    syndrome_of,
)

TINY_H = np.array([
    [1, 1, 0, 1, 0, 0],
    [0, 1, 1, 0, 1, 0],
    [1, 0, 0, 0, 1, 1],
], dtype=np.uint8)


class TestConstruction:
    """Test QC-IRA construction"""

    @pytest.mark.parametrize("rate,expected_lift", [
        ("4/5", 324), ("3/4", 324), ("2/3", 360), ("3/5", 324), ("1/2", 360),
    ])
    def test_lift_sizes_short_block(self, rate, expected_lift):
        """Test the circulant size chosen at j = 6480"""
        r = parse_rate(rate)
        k = int(6480 * r)

        assert lift_size_for(k, 6480 - k) == expected_lift

    def test_lift_size_long_block(self):
        """Test the circulant size at j = 64800, rate 2/3"""
        assert lift_size_for(43200, 21600) == 360

    def test_shape_and_rate(self, code_two_thirds):
        """Test matrix shape and derived sizes"""
        code = code_two_thirds

        assert code.parity_check.shape == (2160, 6480)
        assert code.k == 4320
        assert code.rate_r == Fraction(2, 3)
        assert code.rate_label == "2/3"
        assert code.lift == 360

    def test_degrees(self, code_four_fifths):
        """Test info columns of weight 3 and parity columns of weight <= 2"""
        code = code_four_fifths
        col_deg = np.diff(code.parity_check.tocsc().indptr)

        assert np.all(col_deg[:code.k] == 3)
        assert np.all(col_deg[code.k:] <= 2)
        assert code.degree_stats()["min_row_degree"] >= 2

    def test_deterministic(self):
        """Test that the seed fixes the matrix"""
        a = build_qc_ira_code(720, "1/2", lift_size=36, seed=4)
        b = build_qc_ira_code(720, "1/2", lift_size=36, seed=4)

        assert (a.parity_check != b.parity_check).nnz == 0
        assert a.construction_id == b.construction_id

    def test_full_rank(self):
        """Test that the staircase makes H full rank"""
        code = build_qc_ira_code(720, "2/3", lift_size=40, seed=1)

        assert gf2_rank(code.parity_check.toarray()) == code.n_checks

    def test_no_four_cycles_in_info_part(self):
        """Test that no two info columns share two checks"""
        code = build_qc_ira_code(720, "1/2", lift_size=36, seed=2)
        info = code.parity_check[:, :code.k].astype(np.int64)

        overlap = (info.T @ info).toarray()
        np.fill_diagonal(overlap, 0)
        assert overlap.max() <= 1

    def test_indivisible_block(self):
        """Test that j * R must be an integer"""
        with pytest.raises(ValidationError):
            build_qc_ira_code(100, "2/3")

    def test_parse_rate(self):
        """Test accepted rate spellings"""
        assert parse_rate("3/4") == Fraction(3, 4)
        assert parse_rate(0.5) == Fraction(1, 2)
        with pytest.raises(ValidationError):
            parse_rate("1")
        with pytest.raises(ValidationError):
            parse_rate("abc")


class TestSyndromeAndDecoding:
    """Test syndrome computation and BP decoding"""

    def test_tiny_syndrome(self):
        """Test H x on a hand-built code"""
        code = code_from_matrix(TINY_H)
        x = np.array([1, 0, 1, 1, 0, 0], dtype=np.uint8)

        assert syndrome_of(code, x).tolist() == [0, 1, 1]
        assert code.rate_r == Fraction(1, 2)

    def test_syndrome_is_linear(self, code_two_thirds, rng):
        """Test H(x + y) = Hx + Hy"""
        x = rng.integers(0, 2, 6480, dtype=np.uint8)
        y = rng.integers(0, 2, 6480, dtype=np.uint8)

        lhs = syndrome_of(code_two_thirds, x ^ y)
        rhs = syndrome_of(code_two_thirds, x) ^ syndrome_of(code_two_thirds, y)

        assert np.array_equal(lhs, rhs)

    def test_syndrome_length_mismatch(self, code_two_thirds):
        """Test that a wrong block length is rejected"""
        with pytest.raises(ValidationError):
            syndrome_of(code_two_thirds, np.zeros(100, dtype=np.uint8))

    def test_zero_errors_immediate(self, code_two_thirds, rng):
        """Test that an error-free block needs no iterations"""
        alice = rng.integers(0, 2, 6480, dtype=np.uint8)

        result = bp_decode(code_two_thirds, alice, syndrome_of(code_two_thirds, alice), 0.01)

        assert result.success
        assert result.iterations <= 2
        assert np.array_equal(result.bits, alice)

    def test_tiny_single_error(self):
        """Test that one flip on the tiny code is corrected"""
        code = code_from_matrix(TINY_H)
        alice = np.array([1, 0, 1, 1, 0, 0], dtype=np.uint8)
        bob = alice.copy()
        bob[0] ^= 1

        result = bp_decode(code, bob, syndrome_of(code, alice), crossover=0.1)

        assert result.success
        assert np.array_equal(result.bits, alice)

    def test_decodes_below_threshold(self, code_two_thirds):
        """Test that 1.6% flips decode at rate 2/3"""
        rng = np.random.default_rng(3)
        for _ in range(5):
            alice = rng.integers(0, 2, 6480, dtype=np.uint8)
            bob = alice ^ (rng.random(6480) < 0.016).astype(np.uint8)

            result = bp_decode(code_two_thirds, bob, syndrome_of(code_two_thirds, alice), 0.016)

            assert result.success
            assert np.array_equal(result.bits, alice)

    def test_fails_far_above_threshold(self, code_four_fifths):
        """Test that 8% flips at rate 4/5 do not recover Alice's block"""
        rng = np.random.default_rng(8)
        alice = rng.integers(0, 2, 6480, dtype=np.uint8)
        bob = alice ^ (rng.random(6480) < 0.08).astype(np.uint8)

        result = bp_decode(code_four_fifths, bob, syndrome_of(code_four_fifths, alice), 0.08, max_iters=50)

        assert not (result.success and np.array_equal(result.bits, alice))

    def test_syndrome_length_checked(self, code_two_thirds):
        """Test that the target syndrome must match the code"""
        with pytest.raises(ValidationError):
            bp_decode(code_two_thirds, np.zeros(6480, dtype=np.uint8), np.zeros(5), 0.01)

    def test_channel_llr_sign(self):
        """Test prior LLR signs"""
        llr = channel_llr(np.array([0, 1], dtype=np.uint8), 0.1)

        assert llr[0] > 0 > llr[1]
        assert llr[0] == pytest.approx(np.log(9.0))


@pytest.mark.slow
class TestLongBlocks:
    """Test frame error rates at the production block length"""

    @pytest.mark.parametrize("rate,crossover", [("2/3", 0.016), ("4/5", 0.008)])
    def test_hundred_blocks(self, code_library, rate, crossover):
        """Test that 100 blocks of 64800 bits decode"""
        code = code_library.get(rate, 64800)
        rng = np.random.default_rng(42)
        failures = 0
        for _ in range(100):
            alice = rng.integers(0, 2, code.block_j, dtype=np.uint8)
            bob = alice ^ (rng.random(code.block_j) < crossover).astype(np.uint8)
            result = bp_decode(code, bob, syndrome_of(code, alice), crossover)
            failures += not (result.success and np.array_equal(result.bits, alice))

        assert failures == 0
