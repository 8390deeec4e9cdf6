"""
Tests for the timing monitor.
"""

import json
from unittest.mock import patch

import pytest

from lunakit.performance import PerformanceMonitor, perf_monitor
from lunakit.solver import locate


class TestPerformanceMonitor:
    """Test timing bookkeeping."""

    @patch('lunakit.performance.time.perf_counter')
    def test_start_and_end(self, mock_clock):
        """A timed operation records its elapsed time."""
        mock_clock.side_effect = [10.0, 10.25]
        monitor = PerformanceMonitor()
        timing_id = monitor.start_timing('solve')
        monitor.end_timing(timing_id)
        stats = monitor.get_stats()['solve']
        assert stats['total_calls'] == 1
        assert stats['avg_time_ms'] == pytest.approx(250.0)
        assert stats['success_rate'] == 1.0

    def test_failures_counted(self):
        """Failed operations raise the error rate."""
        monitor = PerformanceMonitor()
        monitor.record('trial', 0.1)
        monitor.record('trial', 0.3, success=False)
        stats = monitor.get_stats()['trial']
        assert stats['total_errors'] == 1
        assert stats['error_rate'] == 0.5
        assert stats['avg_time_ms'] == pytest.approx(200.0)

    def test_overlapping_timings(self):
        """Concurrent timings of one operation are tracked separately."""
        monitor = PerformanceMonitor()
        first = monitor.start_timing('solve')
        second = monitor.start_timing('solve')
        assert first != second
        monitor.end_timing(second)
        monitor.end_timing(first)
        assert monitor.get_stats()['solve']['total_calls'] == 2

    def test_extremes(self):
        """Fastest and slowest calls are kept."""
        monitor = PerformanceMonitor()
        for duration in (0.2, 0.05, 0.4):
            monitor.record('step3', duration)
        stats = monitor.get_stats()['step3']
        assert stats['min_time_ms'] == pytest.approx(50.0)
        assert stats['max_time_ms'] == pytest.approx(400.0)
        assert stats['total_time_s'] == pytest.approx(0.65)

    def test_timed_block(self):
        """A block that raises is timed and counted as an error."""
        monitor = PerformanceMonitor()
        with monitor.timed('step1'):
            pass
        with pytest.raises(RuntimeError):
            with monitor.timed('step1'):
                raise RuntimeError("boom")
        stats = monitor.get_stats()['step1']
        assert stats['total_calls'] == 2
        assert stats['total_errors'] == 1

    def test_unknown_timing_ignored(self):
        """Ending an unknown timing records nothing."""
        monitor = PerformanceMonitor()
        monitor.end_timing('missing#0')
        assert monitor.get_stats() == {}

    def test_recent_window(self):
        """The recent average covers only the last hundred calls."""
        monitor = PerformanceMonitor()
        for _ in range(100):
            monitor.record('x', 1.0)
        for _ in range(100):
            monitor.record('x', 0.0)
        stats = monitor.get_stats()['x']
        assert stats['recent_avg_ms'] == 0.0
        assert stats['avg_time_ms'] == pytest.approx(500.0)

    def test_reset(self):
        """Reset forgets every operation."""
        monitor = PerformanceMonitor()
        monitor.record('x', 1.0)
        monitor.reset()
        assert monitor.get_stats() == {}

    def test_export(self, tmp_path):
        """Statistics export as JSON."""
        monitor = PerformanceMonitor()
        monitor.record('gdop_map', 2.0)
        path = tmp_path / 'perf.json'
        monitor.export_stats(str(path))
        assert json.loads(path.read_text())['gdop_map']['total_calls'] == 1


class TestInstrumentation:
    """Test that library entry points report their timings."""

    def test_locate_is_timed(self, noiseless_pass):
        """Solving records a timing under the global monitor."""
        locate(noiseless_pass.observations, noiseless_pass.ephemeris)
        stats = perf_monitor.get_stats()
        assert stats["step1"]["total_calls"] == 1
        assert stats["step2"]["total_calls"] == 1
        assert stats["step3"]["total_calls"] >= 1
