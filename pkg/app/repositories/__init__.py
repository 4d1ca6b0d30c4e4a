"""
Repository layer initialization
"""
from app.repositories.base import BaseRepository
from app.repositories.key_store import KeyRepository
from app.repositories.ldpc_matrix import AlistRepository
from app.repositories.ledger import LedgerRepository

__all__ = [
    "BaseRepository",
    "KeyRepository",
    "AlistRepository",
    "LedgerRepository",
]
