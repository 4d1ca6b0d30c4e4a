"""Common validation utilities"""
from typing import Sequence

import numpy as np

from app.core.exceptions import ValidationError


def validate_probability(
    value: float,
    name: str,
    low: float = 0.0,
    high: float = 1.0,
    open_low: bool = False,
    open_high: bool = False,
) -> float:
    """
    Validate that a value lies in a (possibly open) probability interval.

    Args:
        value: Value to check
        name: Parameter name for the error message
        low: Lower bound
        high: Upper bound
        open_low: Exclude the lower bound
        open_high: Exclude the upper bound

    Returns:
        The value as float

    Raises:
        ValidationError: If the value is NaN or out of range
    """
    value = float(value)
    below = value <= low if open_low else value < low
    above = value >= high if open_high else value > high
    if np.isnan(value) or below or above:
        left = "(" if open_low else "["
        right = ")" if open_high else "]"
        raise ValidationError(
            f"{name} must be in {left}{low}, {high}{right}, got {value}",
            {"parameter": name, "value": value}
        )
    return value


def validate_count(value: int, name: str, minimum: int = 1) -> int:
    """
    Validate an integer count.

    Raises:
        ValidationError: If the count is below ``minimum``
    """
    if int(value) != value or value < minimum:
        raise ValidationError(
            f"{name} must be an integer >= {minimum}, got {value}",
            {"parameter": name, "value": value}
        )
    return int(value)


def validate_bits(bits: np.ndarray, name: str, length: int | None = None) -> np.ndarray:
    """Validate a 0/1 vector, optionally of exact length"""
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional", {"shape": bits.shape})
    if length is not None and bits.size != length:
        raise ValidationError(
            f"{name} has length {bits.size}, expected {length}",
            {"parameter": name, "length": int(bits.size), "expected": length}
        )
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValidationError(f"{name} must contain only 0/1 values")
    return bits.astype(np.uint8, copy=False)


def validate_equal_lengths(arrays: Sequence[np.ndarray], name: str) -> int:
    """Validate that all arrays share one length and return it"""
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise ValidationError(f"{name} must have equal lengths", {"lengths": sorted(lengths)})
    return lengths.pop()
