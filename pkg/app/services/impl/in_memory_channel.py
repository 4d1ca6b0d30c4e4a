"""
In-process classical channel
"""
import threading
from typing import Any, List

from app.constants import LOG_LEAKAGE
from app.services.interfaces.channel import LEAKAGE_TOPICS, IClassicalChannel, Message
from app.utils.logging import get_logger

logger = get_logger(__name__)


class InMemoryChannel(IClassicalChannel):
    """Message log shared by all parties of one session"""

    def __init__(self):
        self._messages: List[Message] = []
        self._lock = threading.Lock()

    def broadcast(self, sender: str, topic: str, n_bits: int, payload: Any = None) -> Message:
        message = Message(sender=sender, topic=topic, n_bits=int(n_bits), payload=payload)
        with self._lock:
            self._messages.append(message)

        if topic in LEAKAGE_TOPICS:
            logger.info(LOG_LEAKAGE, topic=topic, sender=sender, bits=message.n_bits)
        else:
            logger.debug("Announcement", topic=topic, sender=sender, bits=message.n_bits)
        return message

    def messages(self, topic: str | None = None) -> List[Message]:
        with self._lock:
            return [m for m in self._messages if topic is None or m.topic == topic]
