"""
Tests for environment settings, result storage and the trial pool.

    pytest tests/test_utils.py -v
"""

import json
import os
import sys
from pathlib import Path
from unittest.mock import patch

import numpy as np

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from utils import environment
from utils.parallel import map_tasks
from utils.result_storage import ResultStore, csv_text, dumps_report


def _square(x):
    return x * x


class TestEnvironment:
    """Settings from environment variables and local.settings.json"""

    def test_output_dir_from_environment(self, tmp_path):
        with patch.dict(os.environ, {environment.OUTPUT_DIR_VAR: str(tmp_path)}):
            assert environment.get_output_dir() == str(tmp_path)

    def test_output_dir_default(self):
        with patch.dict(os.environ):
            os.environ.pop(environment.OUTPUT_DIR_VAR, None)
            assert environment.get_output_dir() == os.path.join(environment.PROJECT_ROOT, 'results')

    def test_jobs(self):
        with patch.dict(os.environ, {environment.JOBS_VAR: '4'}):
            assert environment.get_default_jobs() == 4
        with patch.dict(os.environ, {environment.JOBS_VAR: '0'}):
            assert environment.get_default_jobs() == 1
        with patch.dict(os.environ, {environment.JOBS_VAR: 'many'}):
            assert environment.get_default_jobs() is None

    def test_jobs_unset(self):
        with patch.dict(os.environ):
            os.environ.pop(environment.JOBS_VAR, None)
            assert environment.get_default_jobs() is None

    def test_flags(self):
        with patch.dict(os.environ, {environment.SOLVER_TRACE_VAR: 'yes', environment.RUN_SLOW_VAR: '0'}):
            assert environment.solver_trace_enabled()
            assert not environment.slow_tests_enabled()

    def test_log_level_is_upper_case(self):
        with patch.dict(os.environ, {environment.LOG_LEVEL_VAR: 'debug'}):
            assert environment.get_log_level() == 'DEBUG'

    def test_settings_file_does_not_override_environment(self, tmp_path):
        settings = tmp_path / 'local.settings.json'
        settings.write_text(json.dumps({'Values': {environment.LOG_LEVEL_VAR: 'ERROR',
                                                   environment.JOBS_VAR: '3'}}))
        with patch.dict(os.environ, {environment.LOG_LEVEL_VAR: 'WARNING'}):
            os.environ.pop(environment.JOBS_VAR, None)
            environment.load_settings(str(settings))
            assert environment.get_log_level() == 'WARNING'
            assert environment.get_default_jobs() == 3

    def test_broken_settings_file_is_ignored(self, tmp_path):
        settings = tmp_path / 'local.settings.json'
        settings.write_text('{not json')
        environment.load_settings(str(settings))


class TestResultStore:
    """Local result files"""

    def test_json_round_trip_with_numpy_values(self, tmp_path):
        store = ResultStore(str(tmp_path))
        assert store.write_json('report.json', {'b': np.float64(1.5), 'a': np.arange(3), 'z': 1 + 2j,
                                                'missing': float('nan')})
        data = store.read_json('report.json')
        assert data == {'a': [0, 1, 2], 'b': 1.5, 'z': [1.0, 2.0], 'missing': None}

    def test_reports_have_sorted_keys(self):
        text = dumps_report({'b': 1, 'a': 2})
        assert text.index('"a"') < text.index('"b"')

    def test_csv_text(self):
        text = csv_text(['x', 'y'], [[1, 0.5], [2, None], [3, float('nan')]], header='generated now')
        assert text.splitlines() == ['# generated now', 'x,y', '1,0.5', '2,', '3,']

    def test_series_go_under_plot_data(self, tmp_path):
        store = ResultStore(str(tmp_path))
        assert store.write_series('profile', [0.0, 0.5], [1.0, 0.25], 'tau', 'norm')
        assert store.list_files('plot_data') == ['profile.csv']
        assert (tmp_path / 'plot_data' / 'profile.csv').read_text().splitlines()[0] == 'tau,norm'

    def test_write_failure_returns_false(self, tmp_path):
        store = ResultStore(str(tmp_path))
        (tmp_path / 'blocker').write_text('file')
        assert store.write_text(os.path.join('blocker', 'out.txt'), 'data') is False

    def test_missing_file_reads_none(self, tmp_path):
        assert ResultStore(str(tmp_path)).read_json('absent.json') is None

    def test_list_missing_directory(self, tmp_path):
        assert ResultStore(str(tmp_path)).list_files('nowhere') == []


class TestParallel:
    """Trial pool"""

    def test_serial_map_keeps_order(self):
        assert map_tasks(_square, [3, 1, 2], jobs=1) == [9, 1, 4]

    def test_pool_map_keeps_order(self):
        assert map_tasks(_square, list(range(8)), jobs=2) == [x * x for x in range(8)]

    def test_empty(self):
        assert map_tasks(_square, [], jobs=4) == []

    def test_pool_is_sized_by_jobs(self, mocker):
        pool = mocker.patch('utils.parallel.Pool')
        pool.return_value.__enter__.return_value.map.return_value = [0, 1, 4]
        assert map_tasks(_square, [0, 1, 2], jobs=8) == [0, 1, 4]
        pool.assert_called_once_with(processes=3)

    def test_single_job_never_starts_a_pool(self, mocker):
        pool = mocker.patch('utils.parallel.Pool')
        map_tasks(_square, [1, 2, 3], jobs=1)
        pool.assert_not_called()
