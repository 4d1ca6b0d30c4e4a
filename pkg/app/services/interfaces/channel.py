"""
Classical Channel Interface

Authenticated public broadcast between the conference parties. The
transport is pluggable; implementations account for every bit that
leaks information about the key.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List

# Topics whose bits are subtracted from the key
LEAKAGE_TOPICS = ("syndrome", "verification")


@dataclass(frozen=True)
class Message:
    """One public announcement"""
    sender: str
    topic: str
    n_bits: int
    payload: Any = None

    def __post_init__(self):
        """Validate message values"""
        if self.n_bits < 0:
            raise ValueError("n_bits must be >= 0")


class IClassicalChannel(ABC):
    """
    Interface for the public classical channel

    Authentication is assumed, not implemented.
    """

    @abstractmethod
    def broadcast(self, sender: str, topic: str, n_bits: int, payload: Any = None) -> Message:
        """
        Announce a payload to every party

        Args:
            sender: Party name
            topic: Message topic (e.g. "syndrome")
            n_bits: Size of the announcement in bits
            payload: Optional in-process payload

        Returns:
            The recorded Message
        """
        pass

    @abstractmethod
    def messages(self, topic: str | None = None) -> List[Message]:
        """All messages, optionally filtered by topic"""
        pass

    def leakage_bits(self, since: int = 0) -> int:
        """Bits on leakage topics, counting messages from index ``since`` on"""
        return sum(msg.n_bits for msg in self.messages()[since:] if msg.topic in LEAKAGE_TOPICS)

    def bits_by_topic(self, since: int = 0) -> Dict[str, int]:
        totals: Dict[str, int] = {}
        for msg in self.messages()[since:]:
            totals[msg.topic] = totals.get(msg.topic, 0) + msg.n_bits
        return totals
