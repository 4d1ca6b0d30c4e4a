"""
Binary arithmetic coder for round schedules

32-bit integer range coder with underflow (pending) bits and a static
16-bit probability taken from the realized type-2 fraction. Cost is
L*h(m/L) plus a few bits of termination.
"""
from typing import List, Optional

import numpy as np

from app.core.exceptions import ScheduleDecodeError
from app.models.rounds import Schedule
from app.services.interfaces.schedule_codec import CompressedSchedule, IScheduleCodec

STATE_BITS = 32
FULL_RANGE = 1 << STATE_BITS
HALF_RANGE = FULL_RANGE >> 1
QUARTER_RANGE = HALF_RANGE >> 1
STATE_MASK = FULL_RANGE - 1

PROB_BITS = 16
PROB_TOTAL = 1 << PROB_BITS


def quantize_probability(m: int, L: int) -> int:
    """Frequency of symbol 1 out of 2^16; 0 and 2^16 mark degenerate schedules"""
    if m == 0:
        return 0
    if m == L:
        return PROB_TOTAL
    return int(min(max(round(m / L * PROB_TOTAL), 1), PROB_TOTAL - 1))


class _BitEncoder:
    def __init__(self, freq0: int):
        self.freq0 = freq0
        self.low = 0
        self.high = STATE_MASK
        self.pending = 0
        self.out: List[int] = []

    def _emit(self, bit: int):
        self.out.append(bit)
        if self.pending:
            self.out.extend([bit ^ 1] * self.pending)
            self.pending = 0

    def encode(self, symbol: int):
        span = self.high - self.low + 1
        split = self.low + (span * self.freq0) // PROB_TOTAL
        if symbol:
            self.low = split
        else:
            self.high = split - 1

        while ((self.low ^ self.high) & HALF_RANGE) == 0:
            self._emit(self.low >> (STATE_BITS - 1))
            self.low = (self.low << 1) & STATE_MASK
            self.high = ((self.high << 1) & STATE_MASK) | 1

        while (self.low & ~self.high & QUARTER_RANGE) != 0:
            self.pending += 1
            self.low = (self.low << 1) ^ HALF_RANGE
            self.high = ((self.high ^ HALF_RANGE) << 1) | HALF_RANGE | 1

    def finish(self) -> List[int]:
        # A single 1 followed by implicit zeros lands at the window midpoint
        self._emit(1)
        return self.out


class _BitDecoder:
    def __init__(self, bits: np.ndarray, freq0: int):
        self.bits = bits
        self.pos = 0
        self.freq0 = freq0
        self.low = 0
        self.high = STATE_MASK
        self.code = 0
        for _ in range(STATE_BITS):
            self.code = (self.code << 1) | self._next()

    def _next(self) -> int:
        if self.pos < self.bits.size:
            bit = int(self.bits[self.pos])
        else:
            bit = 0
        self.pos += 1
        return bit

    def decode(self) -> int:
        span = self.high - self.low + 1
        split = self.low + (span * self.freq0) // PROB_TOTAL
        if self.code < split:
            symbol = 0
            self.high = split - 1
        else:
            symbol = 1
            self.low = split

        while ((self.low ^ self.high) & HALF_RANGE) == 0:
            self.low = (self.low << 1) & STATE_MASK
            self.high = ((self.high << 1) & STATE_MASK) | 1
            self.code = ((self.code << 1) & STATE_MASK) | self._next()

        while (self.low & ~self.high & QUARTER_RANGE) != 0:
            self.low = (self.low << 1) ^ HALF_RANGE
            self.high = ((self.high ^ HALF_RANGE) << 1) | HALF_RANGE | 1
            self.code = (self.code & HALF_RANGE) | ((self.code << 1) & (STATE_MASK >> 1)) | self._next()

        return symbol


class ArithmeticScheduleCodec(IScheduleCodec):
    """Static-model binary arithmetic coder"""

    def encode(self, schedule: Schedule) -> CompressedSchedule:
        m = schedule.m
        freq1 = quantize_probability(m, schedule.L)

        if freq1 in (0, PROB_TOTAL):
            payload, n_bits = b"", 0
        else:
            encoder = _BitEncoder(PROB_TOTAL - freq1)
            for symbol in schedule.type_flags.tolist():
                encoder.encode(symbol)
            out = encoder.finish()
            n_bits = len(out)
            payload = np.packbits(np.asarray(out, dtype=np.uint8)).tobytes()

        return CompressedSchedule(
            L=schedule.L,
            m=m,
            p=schedule.p,
            seed=schedule.seed,
            freq1=freq1,
            payload=payload,
            n_bits=n_bits,
        )

    def decode(self, frame: CompressedSchedule, L: Optional[int] = None) -> Schedule:
        if L is not None and L != frame.L:
            raise ScheduleDecodeError("round count mismatch", {"expected": L, "header": frame.L})
        if frame.freq1 > PROB_TOTAL:
            raise ScheduleDecodeError("invalid symbol frequency", {"freq1": frame.freq1})

        if frame.freq1 == 0:
            flags = np.zeros(frame.L, dtype=np.uint8)
        elif frame.freq1 == PROB_TOTAL:
            flags = np.ones(frame.L, dtype=np.uint8)
        else:
            bits = np.unpackbits(np.frombuffer(frame.payload, dtype=np.uint8), count=frame.n_bits)
            decoder = _BitDecoder(bits, PROB_TOTAL - frame.freq1)
            flags = np.fromiter((decoder.decode() for _ in range(frame.L)), dtype=np.uint8, count=frame.L)

        if int(np.count_nonzero(flags)) != frame.m:
            raise ScheduleDecodeError(
                "decoded schedule disagrees with header",
                {"decoded_m": int(np.count_nonzero(flags)), "header_m": frame.m}
            )
        return Schedule(L=frame.L, p=frame.p, type_flags=flags, seed=frame.seed)

    @property
    def codec_name(self) -> str:
        return "binary-arithmetic-static-16"
