"""
Round ledger repository

Binary layout (little-endian), see docs/RECORD_FORMATS.md:

    magic "CKLG" | version u16 | N u16 | L u64 | p f64 | seed u64
    u64 byte length + packed type flags
    N x (u64 byte length + packed outcome row)
    u32 byte length + UTF-8 JSON list of party names
"""
import json
import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from app.constants import LEDGER_MAGIC, RECORD_VERSION
from app.core.exceptions import RecordFormatError
from app.models.rounds import RoundLedger, Schedule
from app.repositories.base import BaseRepository
from app.utils.bits import pack, unpack

_HEADER = struct.Struct("<4sHHQdQ")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")


class LedgerRepository(BaseRepository[RoundLedger]):
    """
    Repository for round ledgers

    Simulator-only phase-error records are not persisted.
    """

    suffix = ".cklg"

    def encode(self, record: RoundLedger) -> bytes:
        schedule = record.schedule
        parts = [
            _HEADER.pack(
                LEDGER_MAGIC, RECORD_VERSION, record.n_parties, schedule.L, schedule.p, schedule.seed
            )
        ]
        for row in (schedule.type_flags, *record.outcomes):
            packed = pack(row)
            parts.append(_U64.pack(len(packed)))
            parts.append(packed)
        names = json.dumps(list(record.party_names)).encode("utf-8")
        parts.append(_U32.pack(len(names)))
        parts.append(names)
        return b"".join(parts)

    def decode(self, data: bytes) -> RoundLedger:
        if len(data) < _HEADER.size:
            raise RecordFormatError("ledger record truncated")
        magic, version, n_parties, L, p, seed = _HEADER.unpack_from(data)
        if magic != LEDGER_MAGIC:
            raise RecordFormatError("not a ledger record", {"magic": magic.hex()})
        if version != RECORD_VERSION:
            raise RecordFormatError("unsupported ledger version", {"version": version})

        offset = _HEADER.size
        rows = []
        for _ in range(n_parties + 1):
            row, offset = self._read_row(data, offset, L)
            rows.append(row)

        if offset + _U32.size > len(data):
            raise RecordFormatError("ledger record truncated before party names")
        (name_len,) = _U32.unpack_from(data, offset)
        offset += _U32.size
        if offset + name_len != len(data):
            raise RecordFormatError("ledger party-name block has wrong length")
        names = json.loads(data[offset:offset + name_len].decode("utf-8"))

        schedule = Schedule(L=L, p=p, type_flags=rows[0], seed=seed)
        return RoundLedger(schedule=schedule, outcomes=np.vstack(rows[1:]), party_names=names)

    @staticmethod
    def _read_row(data: bytes, offset: int, L: int) -> Tuple[np.ndarray, int]:
        if offset + _U64.size > len(data):
            raise RecordFormatError("ledger record truncated")
        (length,) = _U64.unpack_from(data, offset)
        offset += _U64.size
        if length != (L + 7) // 8 or offset + length > len(data):
            raise RecordFormatError("ledger row has wrong length", {"bytes": length, "L": L})
        return unpack(data[offset:offset + length], L), offset + length

    def export_json(self, record: RoundLedger, path: Path | str) -> Path:
        """Write a human-readable JSON copy"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(record.to_dict(), indent=2), encoding="utf-8")
        return path
