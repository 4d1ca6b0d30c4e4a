"""
Service interfaces package
"""
from app.services.interfaces.channel import IClassicalChannel, Message
from app.services.interfaces.schedule_codec import CompressedSchedule, IScheduleCodec

__all__ = [
    "IClassicalChannel",
    "Message",
    "CompressedSchedule",
    "IScheduleCodec",
]
