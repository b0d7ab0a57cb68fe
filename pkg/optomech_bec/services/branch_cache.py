import hashlib
import logging
import os
import threading
from collections import OrderedDict

import numpy as np

from ..models.cavity_model import derive_params
from .steadystate_service import sweep_detuning

_logger = logging.getLogger(__name__)


class BranchCache:
    """
    Detuning sweeps keyed by the mean-field parameters and the grid.

    Squeezing settings do not move the classical steady state, so runs that
    differ only in injection share one entry.
    """

    def __init__(self, max_entries=None):
        if max_entries is None:
            max_entries = int(os.getenv('OPTOMECH_CACHE_SIZE', '16'))
        if max_entries < 1:
            raise ValueError('Branch cache needs room for at least one entry')
        self.max_entries = max_entries
        self._entries = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def cache_key(p, delta_values):
        """
        Hash of everything that shapes a detuning sweep.

        Args:
            p (SystemParams): Inputs; squeezing fields are ignored.
            delta_values (numpy.ndarray): Detuning grid.

        Returns:
            str: md5 hex digest.
        """
        digest = hashlib.md5()
        digest.update(repr(p.mean_field_key()).encode())
        digest.update(np.ascontiguousarray(delta_values, dtype=float).tobytes())
        return digest.hexdigest()

    def get(self, p, delta_values):
        key = self.cache_key(p, delta_values)
        with self._lock:
            table = self._entries.get(key)
            if table is None:
                self.misses += 1
                return None
            self._entries.move_to_end(key)
            self.hits += 1
        _logger.debug(f"Branch cache hit {key[:8]}")
        return table

    def store(self, p, delta_values, table):
        key = self.cache_key(p, delta_values)
        with self._lock:
            self._entries[key] = table
            self._entries.move_to_end(key)
        evicted = self.cleanup()
        _logger.info(f"Stored branch table {key[:8]} ({len(table.deltas)} detunings, evicted {evicted})")
        return key

    def get_or_compute(self, p, delta_values, threads=1):
        """
        Cached sweep_detuning.

        Args:
            p (SystemParams): Inputs.
            delta_values (sequence): Detuning grid in the params' rate unit.
            threads (int): Workers for a fresh sweep.

        Returns:
            BranchTable: Cached or newly computed sweep.
        """
        deltas = np.asarray(delta_values, dtype=float)
        table = self.get(p, deltas)
        if table is None:
            table = sweep_detuning(p, derive_params(p), deltas, threads=threads)
            self.store(p, deltas, table)
        return table

    def cleanup(self):
        """Drop least recently used entries beyond max_entries; returns how many went."""
        count = 0
        with self._lock:
            while len(self._entries) > self.max_entries:
                self._entries.popitem(last=False)
                count += 1
        if count:
            _logger.info(f"Evicted {count} branch table(s) from cache")
        return count

    def clear(self):
        with self._lock:
            self._entries.clear()
            self.hits = 0
            self.misses = 0

    def get_cache_stats(self):
        """Cache statistics for logging and the run manifest."""
        with self._lock:
            return {
                'total_entries': len(self._entries),
                'max_entries': self.max_entries,
                'hits': self.hits,
                'misses': self.misses,
            }
