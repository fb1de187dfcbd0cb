"""
Project Readiness Tests

Validates that the checkout is complete and runnable: files present,
dependencies importable, sources compile, shipped workflows are valid.

Usage:
    pytest tests/test_project_readiness.py -v

Or use the run_checks.py script:
    python run_checks.py
"""

import ast
import json
import re
import sys
from pathlib import Path

import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from atomiclift.config import ExperimentConfig


class TestRequiredFiles:
    """Verify all required files exist"""

    def test_cli_exists(self):
        assert (project_root / "atomiclift_cli.py").exists()

    def test_requirements_exists(self):
        assert (project_root / "requirements.txt").exists()

    def test_basic_agent_exists(self):
        """Agent base classes must exist"""
        assert (project_root / "agents" / "basic_agent.py").exists()

    def test_utils_exist(self):
        for name in ("agent_manager.py", "environment.py", "parallel.py", "result_storage.py"):
            assert (project_root / "utils" / name).exists()


class TestRequiredDependencies:
    """Verify all required dependencies are installed"""

    def test_numerical_stack_import(self):
        import numpy
        import scipy.linalg
        import scipy.optimize
        assert numpy is not None
        assert scipy.linalg is not None

    def test_cvxpy_import(self):
        """cvxpy backs the direct dual-SDP cross-check"""
        import cvxpy
        assert cvxpy is not None

    def test_support_libraries_import(self):
        import colorama
        import dotenv
        import pydantic
        import termcolor
        assert pydantic.VERSION.startswith("1.")
        assert all(m is not None for m in (colorama, dotenv, termcolor))


class TestCodeSyntax:
    """Verify code files have valid syntax"""

    @pytest.mark.parametrize("directory", ["atomiclift", "agents", "utils"])
    def test_package_syntax(self, directory):
        for source in (project_root / directory).glob("*.py"):
            try:
                compile(source.read_text(), str(source), 'exec')
            except SyntaxError as e:
                pytest.fail(f"Syntax error in {source.name}: {e}")

    def test_public_functions_are_referenced(self):
        """Every public function or method is called from somewhere besides its definition"""
        packaged = [p for d in ("atomiclift", "agents", "utils") for p in (project_root / d).glob("*.py")]
        packaged.append(project_root / "atomiclift_cli.py")
        everything = packaged + list((project_root / "tests").glob("*.py")) + [project_root / "run_checks.py"]
        corpus = "\n".join(p.read_text() for p in everything)

        unused = []
        for source in packaged:
            for node in ast.walk(ast.parse(source.read_text())):
                if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and not node.name.startswith("_"):
                    mentions = len(re.findall(rf"\b{node.name}\b", corpus))
                    definitions = len(re.findall(rf"\bdef {node.name}\b", corpus))
                    if mentions <= definitions:
                        unused.append(f"{source.name}:{node.name}")
        assert not unused, f"Unreferenced functions: {unused}"


class TestWorkflows:
    """Shipped workflow files load as valid experiment configurations"""

    @pytest.mark.parametrize("workflow", sorted((project_root / "workflows").glob("*.json")),
                             ids=lambda p: p.name)
    def test_workflow_is_valid(self, workflow):
        with open(workflow) as f:
            data = json.load(f)
        assert "description" in data
        config = ExperimentConfig.load(str(workflow))
        assert config.mode in ("synth", "run", "sweep", "noisy", "certify")

    def test_settings_template_is_valid_json(self):
        with open(project_root / "local.settings.template.json") as f:
            values = json.load(f)["Values"]
        assert all(key.startswith("ATOMICLIFT_") for key in values)
