"""
In-process memo for solver artifacts.

Equilibrium states and catalog scans are expensive to recompute and are
requested repeatedly within one command (a grid check, a critical Rayleigh
bisection, a gap sweep). Entries expire after a TTL and the least recently
used ones are evicted once the entry budget is reached.
"""

import copy
import functools
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np

from config.settings import settings

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


@dataclass
class CacheEntry:
    value: Any
    expires_at: float
    nbytes: int


def _nbytes(value: Any) -> int:
    if isinstance(value, np.ndarray):
        return int(value.nbytes)
    if isinstance(value, (list, tuple)):
        return sum(_nbytes(v) for v in value)
    return 0


class CacheManager:
    """LRU cache of solver artifacts with expiring entries."""

    def __init__(self, max_entries: int = settings.CACHE_MAX_ENTRIES):
        self.max_entries = max_entries
        self.entries: "OrderedDict[str, CacheEntry]" = OrderedDict()
        self.cache_stats = {'hits': 0, 'misses': 0, 'evictions': 0}

    def get(self, key: str) -> Optional[Any]:
        """
        Look up a key.

        Returns:
            The stored value, or None if absent or expired
        """
        entry = self.entries.get(key)
        if entry is not None and entry.expires_at > time.monotonic():
            self.entries.move_to_end(key)
            self.cache_stats['hits'] += 1
            return entry.value
        if entry is not None:
            del self.entries[key]
        self.cache_stats['misses'] += 1
        return None

    def set(self, key: str, value: Any, ttl: int = settings.CACHE_TTL):
        """Store a value for ``ttl`` seconds; a non-positive TTL stores nothing."""
        if ttl <= 0 or self.max_entries < 1:
            return
        self.entries[key] = CacheEntry(value, time.monotonic() + ttl, _nbytes(value))
        self.entries.move_to_end(key)
        while len(self.entries) > self.max_entries:
            evicted, _ = self.entries.popitem(last=False)
            self.cache_stats['evictions'] += 1
            logger.debug(f"Evicted {evicted} from the solver cache")

    def delete(self, key: str):
        self.entries.pop(key, None)

    def clear(self, prefix: Optional[str] = None):
        """Drop every entry, or only those whose key starts with ``prefix``."""
        if prefix is None:
            self.entries.clear()
        else:
            for key in [k for k in self.entries if k.startswith(prefix)]:
                del self.entries[key]

    def get_stats(self) -> Dict[str, Any]:
        """Hit and miss counts, hit rate in percent, entry count and array memory."""
        requests = self.cache_stats['hits'] + self.cache_stats['misses']
        return {
            **self.cache_stats,
            'total_requests': requests,
            'hit_rate': 100.0 * self.cache_stats['hits'] / requests if requests else 0.0,
            'entries': len(self.entries),
            'nbytes': sum(e.nbytes for e in self.entries.values()),
        }

    def reset_stats(self):
        self.cache_stats = {'hits': 0, 'misses': 0, 'evictions': 0}


# Create singleton instance
cache_manager = CacheManager()


def cached(ttl: int = settings.CACHE_TTL, key_prefix: str = "",
           key_fn: Optional[Callable[..., str]] = None):
    """
    Memoize a function in the shared cache.

    Results are handed out as deep copies, so callers may modify the arrays
    they receive.

    Args:
        ttl: seconds an entry stays valid
        key_prefix: first key component, used by ``clear(prefix)``
        key_fn: builds the rest of the key from the call arguments (their
            string forms by default)
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            if key_fn is not None:
                suffix = [key_fn(*args, **kwargs)]
            else:
                suffix = [str(a) for a in args] + [f"{k}={v}" for k, v in sorted(kwargs.items())]
            key = ":".join(filter(None, [key_prefix, func.__name__, *suffix]))

            hit = cache_manager.get(key)
            if hit is None:
                hit = func(*args, **kwargs)
                cache_manager.set(key, hit, ttl)
            return copy.deepcopy(hit)

        return wrapper
    return decorator
