"""
Environment Utilities

Reads runtime settings for experiments from the process environment, a `.env`
file (python-dotenv) or the `Values` block of `local.settings.json`, in that
order of precedence.
"""

import json
import logging
import os
from typing import Optional

from dotenv import load_dotenv

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

OUTPUT_DIR_VAR = 'ATOMICLIFT_OUTPUT_DIR'
JOBS_VAR = 'ATOMICLIFT_JOBS'
LOG_LEVEL_VAR = 'ATOMICLIFT_LOG_LEVEL'
SOLVER_TRACE_VAR = 'ATOMICLIFT_SOLVER_TRACE'
RUN_SLOW_VAR = 'ATOMICLIFT_RUN_SLOW'

_TRUTHY = ('1', 'true', 'yes', 'on')
_loaded = False


def load_settings(settings_path: Optional[str] = None) -> None:
    """
    Load `.env` and `local.settings.json` values into os.environ without overriding.

    Args:
        settings_path: Optional path to a local.settings.json file.
            Defaults to the one in the project root.
    """
    global _loaded
    load_dotenv(os.path.join(PROJECT_ROOT, '.env'), override=False)

    settings_path = settings_path or os.path.join(PROJECT_ROOT, 'local.settings.json')
    if os.path.exists(settings_path):
        try:
            with open(settings_path, 'r') as f:
                values = json.load(f).get('Values', {})
            for key, value in values.items():
                os.environ.setdefault(key, str(value))
            logging.debug(f"Loaded settings from {settings_path}")
        except (OSError, json.JSONDecodeError) as e:
            logging.warning(f"Could not read {settings_path}: {e}")
    _loaded = True


def _get(name: str, default: Optional[str] = None) -> Optional[str]:
    if not _loaded:
        load_settings()
    return os.environ.get(name, default)


def get_output_dir() -> str:
    """
    Default output directory for results.

    Returns:
        str: ATOMICLIFT_OUTPUT_DIR if set, else `results/` under the project root
    """
    return _get(OUTPUT_DIR_VAR) or os.path.join(PROJECT_ROOT, 'results')


def get_default_jobs() -> Optional[int]:
    """Worker count from ATOMICLIFT_JOBS, or None when unset."""
    value = _get(JOBS_VAR)
    if not value:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        logging.warning(f"Ignoring invalid {JOBS_VAR}={value!r}")
        return None


def get_log_level() -> str:
    return (_get(LOG_LEVEL_VAR, 'INFO') or 'INFO').upper()


def solver_trace_enabled() -> bool:
    """True when ATOMICLIFT_SOLVER_TRACE requests the per-iteration trace CSV."""
    return (_get(SOLVER_TRACE_VAR, '') or '').lower() in _TRUTHY


def slow_tests_enabled() -> bool:
    """True when acceptance-scale tests are requested via ATOMICLIFT_RUN_SLOW."""
    return (_get(RUN_SLOW_VAR, '') or '').lower() in _TRUTHY
