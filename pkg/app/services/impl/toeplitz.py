"""
Toeplitz hashing for privacy amplification

The l x n matrix is T[i, j] = diag[i - j + n - 1], so the product is
a slice of the full convolution of the diagonal sequence with the
input, computed by FFT.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from app.core.exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class ToeplitzSeed:
    """Public seed: n_in + l_out - 1 diagonal bits"""
    n_in: int
    l_out: int
    diag_bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.diag_bits, dtype=np.uint8)
        if self.l_out < 1 or self.l_out > self.n_in:
            raise ValidationError(
                "l_out must lie in [1, n_in]", {"n_in": self.n_in, "l_out": self.l_out}
            )
        if bits.size != self.n_in + self.l_out - 1:
            raise ValidationError(
                "diag_bits must have n_in + l_out - 1 bits",
                {"bits": int(bits.size), "expected": self.n_in + self.l_out - 1}
            )
        object.__setattr__(self, "diag_bits", bits)

    @classmethod
    def generate(cls, n_in: int, l_out: int, rng: np.random.Generator) -> "ToeplitzSeed":
        bits = rng.integers(0, 2, size=n_in + l_out - 1, dtype=np.uint8)
        return cls(n_in=n_in, l_out=l_out, diag_bits=bits)

    @classmethod
    def from_string(cls, n_in: int, l_out: int, bits: str) -> "ToeplitzSeed":
        return cls(n_in=n_in, l_out=l_out, diag_bits=np.array([int(b) for b in bits], dtype=np.uint8))


def toeplitz_hash(x: np.ndarray, seed: ToeplitzSeed) -> np.ndarray:
    """T x over GF(2) via FFT convolution"""
    x = np.asarray(x, dtype=np.uint8)
    if x.size != seed.n_in:
        raise ValidationError("input length does not match the seed", {"n": int(x.size), "n_in": seed.n_in})
    n = seed.n_in
    full = signal.fftconvolve(seed.diag_bits.astype(np.float64), x.astype(np.float64))
    window = full[n - 1:n - 1 + seed.l_out]
    return (np.rint(window).astype(np.int64) % 2).astype(np.uint8)


def toeplitz_matrix(seed: ToeplitzSeed) -> np.ndarray:
    """Dense l_out x n_in matrix (small sizes only)"""
    n = seed.n_in
    first_column = seed.diag_bits[n - 1:]
    first_row = seed.diag_bits[n - 1::-1]
    return linalg.toeplitz(first_column, first_row).astype(np.uint8)


def toeplitz_hash_dense(x: np.ndarray, seed: ToeplitzSeed) -> np.ndarray:
    """Reference GF(2) matrix-vector product"""
    T = toeplitz_matrix(seed).astype(np.int64)
    return ((T @ np.asarray(x, dtype=np.int64)) % 2).astype(np.uint8)
