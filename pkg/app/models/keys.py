"""
Key material types
"""
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Dict, List

import numpy as np

from app.core.exceptions import ValidationError


class RecordKind(IntEnum):
    CONFERENCE_KEY = 0
    SYNDROME = 1
    RAW_KEY = 2


@dataclass(eq=False)
class ConferenceKey:
    """Distilled key, one identical row per party"""
    bits: np.ndarray
    party_names: List[str]
    security_label: float

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2 or self.bits.shape[0] != len(self.party_names):
            raise ValidationError("one key row per party required", {"shape": self.bits.shape})

    @property
    def length(self) -> int:
        return int(self.bits.shape[1])

    @property
    def consistent(self) -> bool:
        """All parties hold bit-identical keys"""
        return bool(np.all(self.bits == self.bits[0]))

    def shared(self) -> np.ndarray:
        """The common key (raises if parties disagree)"""
        if not self.consistent:
            raise ValidationError("parties hold different keys")
        return self.bits[0]


@dataclass(eq=False)
class KeyRecord:
    """Packed bits with a JSON label, as persisted"""
    kind: RecordKind
    bits: np.ndarray
    label: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = RecordKind(self.kind)
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8).ravel()

    @property
    def n_bits(self) -> int:
        return int(self.bits.size)
