"""
Service implementations and numeric kernels
"""
from app.services.impl.arithmetic_codec import ArithmeticScheduleCodec
from app.services.impl.in_memory_channel import InMemoryChannel

__all__ = [
    "ArithmeticScheduleCodec",
    "InMemoryChannel",
]
