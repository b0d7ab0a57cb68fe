import os
import unittest
from unittest.mock import MagicMock, patch

import numpy as np

from optomech_bec.services import config_service
from optomech_bec.services.branch_cache import BranchCache


class TestBranchCache(unittest.TestCase):

    def setUp(self):
        self.params = config_service.load_config().scaled()
        self.grid = np.linspace(0.0, 10.0, 5)
        self.cache = BranchCache(max_entries=2)

    def _table(self):
        table = MagicMock()
        table.deltas = self.grid
        return table

    def test_hit_after_miss(self):
        """Test a second request is served from the cache"""
        with patch('optomech_bec.services.branch_cache.sweep_detuning') as mock_sweep:
            mock_sweep.return_value = self._table()
            first = self.cache.get_or_compute(self.params, self.grid)
            second = self.cache.get_or_compute(self.params, self.grid)
        self.assertIs(first, second)
        self.assertEqual(mock_sweep.call_count, 1)
        stats = self.cache.get_cache_stats()
        self.assertEqual(stats['hits'], 1)
        self.assertEqual(stats['misses'], 1)
        self.assertEqual(stats['total_entries'], 1)

    def test_squeezing_shares_entry(self):
        """Test injection settings do not split the cache"""
        with patch('optomech_bec.services.branch_cache.sweep_detuning') as mock_sweep:
            mock_sweep.return_value = self._table()
            self.cache.get_or_compute(self.params, self.grid)
            self.cache.get_or_compute(self.params.replace(squeezing_enabled=True), self.grid)
            self.assertEqual(mock_sweep.call_count, 1)
            self.cache.get_or_compute(self.params.replace(xi2=0.01 * self.params.xi1), self.grid)
            self.cache.get_or_compute(self.params, self.grid[:-1])
            self.assertEqual(mock_sweep.call_count, 3)

    def test_cache_key(self):
        """Test keys depend on parameters and grid only"""
        key = BranchCache.cache_key(self.params, self.grid)
        self.assertEqual(key, BranchCache.cache_key(self.params.replace(n_s=2.0), list(self.grid)))
        self.assertNotEqual(key, BranchCache.cache_key(self.params.replace(eta=50.0), self.grid))
        self.assertEqual(len(key), 32)

    def test_eviction(self):
        """Test least recently used tables are dropped"""
        tables = [self._table() for _ in range(3)]
        params = [self.params.replace(delta_c=float(k)) for k in range(3)]
        self.cache.store(params[0], self.grid, tables[0])
        self.cache.store(params[1], self.grid, tables[1])
        self.assertIs(self.cache.get(params[0], self.grid), tables[0])
        self.cache.store(params[2], self.grid, tables[2])
        self.assertIsNone(self.cache.get(params[1], self.grid))
        self.assertIs(self.cache.get(params[0], self.grid), tables[0])
        self.assertEqual(self.cache.get_cache_stats()['total_entries'], 2)

    def test_clear(self):
        """Test clearing resets entries and counters"""
        self.cache.store(self.params, self.grid, self._table())
        self.cache.get(self.params, self.grid)
        self.cache.clear()
        self.assertEqual(
            self.cache.get_cache_stats(), {'total_entries': 0, 'max_entries': 2, 'hits': 0, 'misses': 0},
        )

    def test_size_from_environment(self):
        """Test capacity from OPTOMECH_CACHE_SIZE"""
        with patch.dict(os.environ, {'OPTOMECH_CACHE_SIZE': '4'}):
            self.assertEqual(BranchCache().max_entries, 4)
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(BranchCache().max_entries, 16)
        with self.assertRaises(ValueError):
            BranchCache(max_entries=0)


if __name__ == '__main__':
    unittest.main()
