import threading
from typing import Optional

from cachetools import LRUCache

from edge_rca.utils.specs import EventTemplate
from edge_rca.utils.text import norm

DEFAULT_CAPACITY = 10_000


class _CountingLRU(LRUCache):
    """LRUCache that counts what its eviction policy throws out."""

    def __init__(self, maxsize: int):
        super().__init__(maxsize=maxsize)
        self.evictions = 0

    def popitem(self):
        item = super().popitem()
        self.evictions += 1
        return item


class TemplateCache:
    """
    L1 exact-match cache: Norm(text) -> EventTemplate, least-recently-used eviction.
    Inserts and lookups share one lock so an insert is atomic for readers.
    """
    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self._entries = _CountingLRU(maxsize=capacity)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def evictions(self) -> int:
        return self._entries.evictions

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, text: str) -> bool:
        return norm(text) in self._entries

    def get(self, text: str) -> Optional[EventTemplate]:
        key = norm(text)
        with self._lock:
            # LRUCache.get bumps recency on a hit
            template = self._entries.get(key)
            if template is None:
                self.misses += 1
                return None
            self.hits += 1
            return template

    def put(self, text: str, template: EventTemplate) -> None:
        with self._lock:
            self._entries[norm(text)] = template

    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def clear(self) -> None:
        with self._lock:
            evicted = self._entries.evictions
            # MutableMapping.clear goes through popitem
            self._entries.clear()
            self._entries.evictions = evicted
