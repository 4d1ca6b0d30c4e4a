"""Bit vector helpers (uint8 0/1 arrays)"""
import numpy as np


def pack(bits: np.ndarray) -> bytes:
    """Pack a 0/1 vector MSB-first into bytes"""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def unpack(data: bytes, n_bits: int) -> np.ndarray:
    """Inverse of :func:`pack` for exactly ``n_bits`` bits"""
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n_bits)


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def hamming_fraction(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of positions where two equal-length bit vectors differ"""
    if len(a) == 0:
        return 0.0
    return float(np.count_nonzero(a != b)) / len(a)


def bits_to_bytes(bits: np.ndarray) -> bytes:
    """Bits to bytes, dropping a trailing partial byte"""
    usable = (len(bits) // 8) * 8
    return pack(bits[:usable])


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))
