#!/usr/bin/env python3
"""
Check Runner

Run this script before a long experiment campaign to catch broken installs
and regressions early.

Usage:
    python run_checks.py

Or with verbose output and the acceptance-scale suites:
    python run_checks.py -v --slow

This script runs:
1. Environment checks (Python version, dependencies, settings)
2. Project readiness tests (files, syntax, shipped workflows)
3. Unit tests (numerical core, experiments, agents and CLI)
"""

import json
import os
import subprocess
import sys
from pathlib import Path

import colorama
from termcolor import colored

PROJECT_ROOT = Path(__file__).parent
REQUIRED = ['numpy', 'scipy', 'cvxpy', 'pydantic', 'dotenv', 'termcolor', 'colorama']
UNIT_TESTS = ['test_signal_model.py', 'test_lifting.py', 'test_sdp_solver.py', 'test_dual_localizer.py',
              'test_certificate_lab.py', 'test_experiments.py', 'test_agents_cli.py', 'test_utils.py']


def print_header(text):
    print(colored(f"\n{'=' * 60}", 'blue', attrs=['bold']))
    print(colored(text, 'blue', attrs=['bold']))
    print(colored(f"{'=' * 60}\n", 'blue', attrs=['bold']))


def print_success(text):
    print(colored(f"✓ {text}", 'green'))


def print_failure(text):
    print(colored(f"✗ {text}", 'red'))


def print_warning(text):
    print(colored(f"⚠ {text}", 'yellow'))


def run_pytest(test_paths, verbose=False, slow=False):
    """Run pytest on the given paths"""
    args = [sys.executable, "-m", "pytest", *test_paths, "--tb=short", "-q"]
    if verbose:
        args.append("-v")
    env = dict(os.environ)
    if slow:
        env['ATOMICLIFT_RUN_SLOW'] = '1'
    result = subprocess.run(args, capture_output=True, text=True, env=env, cwd=PROJECT_ROOT)
    return result.returncode == 0, result.stdout, result.stderr


def check_python_version():
    version = sys.version_info
    if version.major != 3 or version.minor < 9:
        print_failure(f"Python {version.major}.{version.minor} detected, 3.9 or newer is required")
        return False
    print_success(f"Python {version.major}.{version.minor}.{version.micro} detected")
    return True


def check_dependencies():
    """Check if all required dependencies are installed"""
    missing = []
    for package in REQUIRED:
        try:
            __import__(package)
        except ImportError:
            missing.append(package)

    if missing:
        print_failure(f"Missing dependencies: {', '.join(missing)}")
        print("  Run: pip install -r requirements-dev.txt")
        return False

    print_success("All required dependencies installed")
    return True


def check_local_settings():
    """local.settings.json is optional; when present it must parse"""
    settings_path = PROJECT_ROOT / "local.settings.json"
    if not settings_path.exists():
        print_warning("local.settings.json not found, using defaults")
        return True

    try:
        with open(settings_path, 'r') as f:
            values = json.load(f).get("Values", {})
    except (OSError, json.JSONDecodeError) as e:
        print_failure(f"local.settings.json is unreadable: {e}")
        return False

    unknown = [k for k in values if not k.startswith("ATOMICLIFT_")]
    if unknown:
        print_warning(f"local.settings.json has unused keys: {', '.join(unknown)}")
    print_success("local.settings.json readable")
    return True


def run_suite(label, paths, verbose, slow=False):
    passed, stdout, stderr = run_pytest(paths, verbose, slow)
    if passed:
        print_success(f"{label} passed")
    else:
        print_failure(f"{label} failed")
    if verbose or not passed:
        print(stdout)
        print(stderr)
    return passed


def main():
    colorama.just_fix_windows_console()
    verbose = "-v" in sys.argv or "--verbose" in sys.argv
    slow = "--slow" in sys.argv
    results = {}

    print_header("ENVIRONMENT CHECKS")
    results["python_version"] = check_python_version()
    results["dependencies"] = check_dependencies()
    results["local_settings"] = check_local_settings()
    if not results["dependencies"]:
        return 1

    print_header("PROJECT READINESS TESTS")
    results["readiness"] = run_suite("Readiness tests", [str(PROJECT_ROOT / "tests" / "test_project_readiness.py")],
                                     verbose)

    print_header("UNIT TESTS" + (" (with acceptance-scale suites)" if slow else ""))
    results["unit_tests"] = run_suite("Unit tests", [str(PROJECT_ROOT / "tests" / name) for name in UNIT_TESTS],
                                      verbose, slow)

    print_header("SUMMARY")
    for name, passed in results.items():
        (print_success if passed else print_failure)(f"{name.replace('_', ' ').title()}: "
                                                     f"{'PASSED' if passed else 'FAILED'}")

    print("\n" + "=" * 60)
    if all(results.values()):
        print(colored("ALL CHECKS PASSED", 'green', attrs=['bold']))
        return 0
    print(colored("CHECKS FAILED - fix the issues above before running experiments", 'red', attrs=['bold']))
    return 1


if __name__ == "__main__":
    sys.exit(main())
