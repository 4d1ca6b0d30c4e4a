"""
Polynomial hashing over GF(2^64) for key verification

Each 64-bit lane evaluates the key words (plus a length word) as a
polynomial at a public point drawn after error correction. Two
distinct keys of d words collide in one t-bit lane with probability
at most d / 2^t.
"""
import math
from typing import List, Sequence

import numpy as np

from app.constants import HASH_LANE_BITS
from app.core.exceptions import ValidationError

MASK64 = (1 << 64) - 1
# x^64 + x^4 + x^3 + x + 1
REDUCTION = 0x1B


def gf64_mul(a: int, b: int) -> int:
    """Carry-less multiply modulo the reduction polynomial"""
    result = 0
    while b:
        if b & 1:
            result ^= a
        b >>= 1
        carry = a >> 63
        a = (a << 1) & MASK64
        if carry:
            a ^= REDUCTION
    return result


def hash_tag_bits(eps_ec: float) -> int:
    """Tag length t = ceil(log2(1 / eps_EC))"""
    if not 0 < eps_ec < 1:
        raise ValidationError("eps_EC must lie in (0, 1)", {"eps_EC": eps_ec})
    return math.ceil(math.log2(1.0 / eps_ec))


class _LaneMultiplier:
    """Multiply by a fixed point using 8 byte-indexed tables"""

    def __init__(self, point: int):
        self.tables = [
            [gf64_mul(byte << (8 * pos), point) for byte in range(256)]
            for pos in range(8)
        ]

    def __call__(self, value: int) -> int:
        out = 0
        for table in self.tables:
            out ^= table[value & 0xFF]
            value >>= 8
        return out


def _words(bits: np.ndarray) -> List[int]:
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-bits.size) % HASH_LANE_BITS
    if pad:
        bits = np.concatenate((bits, np.zeros(pad, dtype=np.uint8)))
    packed = np.packbits(bits).view(">u8")
    return [int(w) for w in packed]


class PolyHash:
    """
    t-bit verification tag from ceil(t/64) independent lanes

    Args:
        points: One evaluation point per lane
        tag_bits: Output length t
    """

    def __init__(self, points: Sequence[int], tag_bits: int):
        lanes = math.ceil(tag_bits / HASH_LANE_BITS)
        if tag_bits < 1 or len(points) != lanes:
            raise ValidationError(
                "need one evaluation point per 64-bit lane",
                {"tag_bits": tag_bits, "points": len(points)}
            )
        self.tag_bits = tag_bits
        self.points = [int(p) & MASK64 for p in points]
        self._multipliers = [_LaneMultiplier(p) for p in self.points]

    @classmethod
    def for_epsilon(cls, eps_ec: float, rng: np.random.Generator) -> "PolyHash":
        tag_bits = hash_tag_bits(eps_ec)
        lanes = math.ceil(tag_bits / HASH_LANE_BITS)
        points = [int.from_bytes(rng.bytes(8), "big") for _ in range(lanes)]
        return cls(points, tag_bits)

    def digest(self, bits: np.ndarray) -> int:
        """Tag of a bit vector as an integer below 2^t"""
        words = _words(bits) + [int(np.asarray(bits).size) & MASK64]
        tag = 0
        for multiply in self._multipliers:
            acc = 0
            for word in words:
                acc = multiply(acc ^ word)
            tag = (tag << HASH_LANE_BITS) | acc
        total_bits = HASH_LANE_BITS * len(self._multipliers)
        return tag >> (total_bits - self.tag_bits)
