"""
Schedule Codec Interface

Defines the contract for compressing the round-type schedule that
is shared from the pre-shared key.
"""
import struct
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

from app.core.exceptions import ScheduleDecodeError
from app.models.rounds import Schedule

# L, m, p, seed, freq1 (of 2^16), payload bits, crc32
_FRAME_HEADER = struct.Struct("<QQdQIQI")


@dataclass(frozen=True)
class CompressedSchedule:
    """Compressed schedule frame"""
    L: int
    m: int
    p: float
    seed: int
    freq1: int
    payload: bytes
    n_bits: int

    def __post_init__(self):
        """Validate frame values"""
        if self.n_bits > 8 * len(self.payload):
            raise ValueError("n_bits exceeds payload size")
        if not 0 <= self.m <= self.L:
            raise ValueError("m must lie in [0, L]")

    @property
    def charged_bits(self) -> int:
        """Bits consumed from the pre-shared key"""
        return self.n_bits

    def _crc(self) -> int:
        head = _FRAME_HEADER.pack(self.L, self.m, self.p, self.seed, self.freq1, self.n_bits, 0)
        return zlib.crc32(head + self.payload) & 0xFFFFFFFF

    def to_bytes(self) -> bytes:
        head = _FRAME_HEADER.pack(
            self.L, self.m, self.p, self.seed, self.freq1, self.n_bits, self._crc()
        )
        return head + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedSchedule":
        if len(data) < _FRAME_HEADER.size:
            raise ScheduleDecodeError("schedule frame truncated", {"size": len(data)})
        L, m, p, seed, freq1, n_bits, crc = _FRAME_HEADER.unpack_from(data)
        payload = data[_FRAME_HEADER.size:]
        if len(payload) != (n_bits + 7) // 8:
            raise ScheduleDecodeError(
                "schedule payload length mismatch",
                {"payload_bytes": len(payload), "n_bits": n_bits}
            )
        try:
            frame = cls(L=L, m=m, p=p, seed=seed, freq1=freq1, payload=payload, n_bits=n_bits)
        except ValueError as e:
            raise ScheduleDecodeError(f"invalid schedule frame: {e}") from e
        if frame._crc() != crc:
            raise ScheduleDecodeError("schedule frame checksum mismatch")
        return frame


class IScheduleCodec(ABC):
    """
    Interface for schedule entropy coders

    All implementations must reproduce the schedule exactly and report
    the number of payload bits they consumed.
    """

    @abstractmethod
    def encode(self, schedule: Schedule) -> CompressedSchedule:
        """
        Compress a schedule

        Args:
            schedule: Schedule to compress

        Returns:
            CompressedSchedule frame
        """
        pass

    @abstractmethod
    def decode(self, frame: CompressedSchedule, L: Optional[int] = None) -> Schedule:
        """
        Decompress a frame

        Args:
            frame: Compressed frame
            L: Expected round count (checked against the header when given)

        Returns:
            The original Schedule

        Raises:
            ScheduleDecodeError: If the frame is inconsistent
        """
        pass

    @property
    @abstractmethod
    def codec_name(self) -> str:
        """Codec identifier recorded in reports"""
        pass
