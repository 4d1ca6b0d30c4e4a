"""
Core exceptions for ConfKeyBench

All custom exceptions inherit from ConferenceKeyError
for consistent error handling across the application.
"""
from typing import Optional


class ConferenceKeyError(Exception):
    """Base exception for all ConfKeyBench errors"""

    def __init__(self, message: str, details: Optional[dict] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(ConferenceKeyError):
    """Input validation failed"""
    pass


class ConfigurationError(ConferenceKeyError):
    """Configuration error"""
    pass


class InsufficientRoundsError(ConferenceKeyError):
    """Not enough type-1/type-2 rounds for parameter estimation"""
    pass


class ScheduleDecodeError(ConferenceKeyError):
    """Compressed schedule could not be decoded"""
    pass


class RecordFormatError(ConferenceKeyError):
    """Persisted record is corrupt or has an unknown layout"""
    pass


class NoCodeAvailableError(ConferenceKeyError):
    """Corrected QBER exceeds every configured code threshold"""
    pass


class DecodingError(ConferenceKeyError):
    """Belief propagation failed to reproduce Alice's syndrome"""

    def __init__(self, message: str, bob: int, block: int, iterations: int):
        super().__init__(message, {"bob": bob, "block": block, "iterations": iterations})
        self.bob = bob
        self.block = block
        self.iterations = iterations


class VerificationError(ConferenceKeyError):
    """Verification hashes differ after error correction"""
    pass


class InfeasibleKeyError(ConferenceKeyError):
    """No extractable key at these parameters"""
    pass


class KeyExhaustedError(ConferenceKeyError):
    """Not enough unused key bits"""
    pass


class KeyReuseError(ConferenceKeyError):
    """Attempt to reuse already spent key bits"""
    pass
