"""
Core module initialization
"""
from app.core.exceptions import (
    ConferenceKeyError,
    ValidationError,
    ConfigurationError,
    InsufficientRoundsError,
    ScheduleDecodeError,
    RecordFormatError,
    NoCodeAvailableError,
    DecodingError,
    VerificationError,
    InfeasibleKeyError,
    KeyExhaustedError,
    KeyReuseError,
)

__all__ = [
    "ConferenceKeyError",
    "ValidationError",
    "ConfigurationError",
    "InsufficientRoundsError",
    "ScheduleDecodeError",
    "RecordFormatError",
    "NoCodeAvailableError",
    "DecodingError",
    "VerificationError",
    "InfeasibleKeyError",
    "KeyExhaustedError",
    "KeyReuseError",
]
