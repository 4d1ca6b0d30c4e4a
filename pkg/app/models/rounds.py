"""
Round bookkeeping types

Schedule, RoundLedger, ParamEstimate and RawKey are shared by the
protocol service, the schedule codec and the ledger repository.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.constants import MIN_CONFERENCE_PARTIES
from app.core.exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class Schedule:
    """L-round type schedule; flag 1 marks a type-2 (X) round"""
    L: int
    p: float
    type_flags: np.ndarray
    seed: int

    def __post_init__(self):
        flags = np.ascontiguousarray(self.type_flags, dtype=np.uint8)
        if flags.ndim != 1 or flags.size != self.L:
            raise ValidationError(
                "type_flags length must equal L",
                {"L": self.L, "flags": int(flags.size)}
            )
        object.__setattr__(self, "type_flags", flags)

    @property
    def m(self) -> int:
        """Realized number of type-2 rounds"""
        return int(np.count_nonzero(self.type_flags))

    @property
    def has_test_rounds(self) -> bool:
        return self.m >= 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Schedule):
            return NotImplemented
        return (
            self.L == other.L
            and self.p == other.p
            and self.seed == other.seed
            and np.array_equal(self.type_flags, other.type_flags)
        )

    __hash__ = None


@dataclass(eq=False)
class RoundLedger:
    """
    Schedule plus outcomes, one row per party over all L rounds

    ``phase_errors`` is simulator-only ground truth (the X-parity
    error a key round would have shown). It is never persisted.
    """
    schedule: Schedule
    outcomes: np.ndarray
    party_names: List[str]
    phase_errors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.outcomes = np.ascontiguousarray(self.outcomes, dtype=np.uint8)
        if self.outcomes.ndim != 2 or self.outcomes.shape[1] != self.schedule.L:
            raise ValidationError(
                "outcomes must have one column per round",
                {"shape": self.outcomes.shape, "L": self.schedule.L}
            )
        if self.outcomes.shape[0] != len(self.party_names):
            raise ValidationError(
                "one outcome row per party required",
                {"rows": self.outcomes.shape[0], "parties": len(self.party_names)}
            )
        if len(self.party_names) < MIN_CONFERENCE_PARTIES:
            raise ValidationError(
                f"a conference needs at least {MIN_CONFERENCE_PARTIES} parties",
                {"parties": len(self.party_names)}
            )

    @property
    def L(self) -> int:
        return self.schedule.L

    @property
    def n_parties(self) -> int:
        return len(self.party_names)

    def type1_indices(self) -> np.ndarray:
        return np.flatnonzero(self.schedule.type_flags == 0)

    def type2_indices(self) -> np.ndarray:
        return np.flatnonzero(self.schedule.type_flags == 1)

    def to_dict(self) -> Dict:
        """JSON-friendly view for inspection"""
        return {
            "L": self.schedule.L,
            "p": self.schedule.p,
            "seed": self.schedule.seed,
            "m": self.schedule.m,
            "party_names": list(self.party_names),
            "type_flags": "".join(map(str, self.schedule.type_flags.tolist())),
            "outcomes": {
                name: "".join(map(str, row.tolist()))
                for name, row in zip(self.party_names, self.outcomes)
            },
        }


@dataclass(frozen=True)
class ParamEstimate:
    """Error fractions measured on disclosed rounds"""
    q_ab_m: Tuple[float, ...]
    q_x_m: float
    qber_m: float
    m: int
    n: int
    disclosed_type1_indices: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "q_ab_m", tuple(float(q) for q in self.q_ab_m))
        for value in (*self.q_ab_m, self.q_x_m, self.qber_m):
            if not 0.0 <= value <= 1.0:
                raise ValidationError("estimated fractions must lie in [0, 1]", {"value": value})
        if self.q_ab_m and self.qber_m != max(self.q_ab_m):
            raise ValidationError("qber_m must equal max(q_ab_m)")

    @property
    def L(self) -> int:
        return self.n + 2 * self.m

    def summary(self) -> Dict:
        return {
            "q_ab_m": list(self.q_ab_m),
            "q_x_m": self.q_x_m,
            "qber_m": self.qber_m,
            "m": self.m,
            "n": self.n,
        }


@dataclass(eq=False)
class RawKey:
    """Sifted key rows, one per party, over identical round indices"""
    bits: np.ndarray
    indices: np.ndarray
    party_names: List[str]

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2 or self.bits.shape[1] != self.indices.size:
            raise ValidationError("raw key rows must match the sifted index set")

    @property
    def n(self) -> int:
        return int(self.bits.shape[1])

    def for_party(self, index: int) -> np.ndarray:
        return self.bits[index]
