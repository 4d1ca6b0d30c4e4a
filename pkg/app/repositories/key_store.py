"""
Key and syndrome repository

Layout (little-endian): magic "CKKY" | version u16 | kind u16 |
n_bits u64 | label_len u32 | UTF-8 JSON label | packed bits.
"""
import json
import struct

from app.constants import KEY_MAGIC, RECORD_VERSION
from app.core.exceptions import RecordFormatError
from app.models.keys import KeyRecord, RecordKind
from app.repositories.base import BaseRepository
from app.utils.bits import pack, unpack

_HEADER = struct.Struct("<4sHHQI")


class KeyRepository(BaseRepository[KeyRecord]):
    """Repository for packed key material"""

    suffix = ".ckky"

    def encode(self, record: KeyRecord) -> bytes:
        label = json.dumps(record.label, sort_keys=True).encode("utf-8")
        header = _HEADER.pack(KEY_MAGIC, RECORD_VERSION, int(record.kind), record.n_bits, len(label))
        return header + label + pack(record.bits)

    def decode(self, data: bytes) -> KeyRecord:
        if len(data) < _HEADER.size:
            raise RecordFormatError("key record truncated")
        magic, version, kind, n_bits, label_len = _HEADER.unpack_from(data)
        if magic != KEY_MAGIC:
            raise RecordFormatError("not a key record", {"magic": magic.hex()})
        if version != RECORD_VERSION:
            raise RecordFormatError("unsupported key record version", {"version": version})

        offset = _HEADER.size
        body = data[offset + label_len:]
        if len(body) != (n_bits + 7) // 8:
            raise RecordFormatError("key payload has wrong length", {"n_bits": n_bits, "bytes": len(body)})
        label = json.loads(data[offset:offset + label_len].decode("utf-8"))
        return KeyRecord(kind=RecordKind(kind), bits=unpack(body, n_bits), label=label)
