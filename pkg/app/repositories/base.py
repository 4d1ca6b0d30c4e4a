"""
Base repository pattern

Provides generic file-record operations for all repositories.
"""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Generic, List, TypeVar

from app.core.exceptions import RecordFormatError

# Type variable for record
RecordType = TypeVar("RecordType")


class BaseRepository(ABC, Generic[RecordType]):
    """
    Base repository over one directory of record files

    Subclasses implement ``encode``/``decode`` for their record type.
    """

    suffix: str = ""

    def __init__(self, directory: Path | str = "."):
        """
        Initialize repository

        Args:
            directory: Directory holding the record files
        """
        self.directory = Path(directory)

    @abstractmethod
    def encode(self, record: RecordType) -> bytes:
        """Serialize a record"""
        pass

    @abstractmethod
    def decode(self, data: bytes) -> RecordType:
        """Deserialize a record; raise RecordFormatError on bad input"""
        pass

    def path_for(self, name: str | Path) -> Path:
        """Resolve a record name (absolute paths pass through)"""
        path = Path(name)
        if not path.is_absolute() and path.parent == Path("."):
            path = self.directory / path
        if self.suffix and not path.suffix:
            path = path.with_suffix(self.suffix)
        return path

    def save(self, record: RecordType, name: str | Path) -> Path:
        """
        Write a record

        Returns:
            Path written
        """
        path = self.path_for(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encode(record))
        return path

    def load(self, name: str | Path) -> RecordType:
        """
        Read a record

        Raises:
            RecordFormatError: If the file is missing or corrupt
        """
        path = self.path_for(name)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise RecordFormatError(f"Failed to read {path}: {e}", {"path": str(path)})
        try:
            return self.decode(data)
        except RecordFormatError:
            raise
        except (ValueError, KeyError, IndexError) as e:
            raise RecordFormatError(f"Corrupt record {path}: {e}", {"path": str(path)})

    def exists(self, name: str | Path) -> bool:
        return self.path_for(name).exists()

    def delete(self, name: str | Path) -> bool:
        """
        Delete a record

        Returns:
            True if deleted, False if not found
        """
        path = self.path_for(name)
        if path.exists():
            path.unlink()
            return True
        return False

    def list(self) -> List[Path]:
        """Record files in the directory"""
        if not self.directory.exists():
            return []
        pattern = f"*{self.suffix}" if self.suffix else "*"
        return sorted(self.directory.glob(pattern))
