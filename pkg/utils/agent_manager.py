"""
Agent Manager - Experiment Agent Registry

Provides a centralized registry for the experiment agents behind the CLI
subcommands. Supports manual registration and auto-discovery of agents.

Usage:
    from utils.agent_manager import get_manager

    manager = get_manager()
    manager.discover_agents()

    agent = manager.get_agent('sweep')
    summary = agent.perform(config='workflows/fig2.json', jobs=4)
"""

import importlib.util
import logging
import os
import sys
from threading import Lock
from typing import Any, Dict, List, Optional

from utils.environment import PROJECT_ROOT


class AgentManager:
    """
    Centralized registry for experiment agents.

    Features:
    - Manual agent registration
    - Auto-discovery from the agents directory
    - Thread-safe operations
    - Singleton pattern
    """

    _instance = None
    _lock = Lock()

    def __new__(cls):
        """Singleton pattern - only one AgentManager instance"""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self._agents: Dict[str, Any] = {}
        self._agent_metadata: Dict[str, Dict] = {}
        self._registry_lock = Lock()
        self._initialized = True

        logging.debug("AgentManager initialized")

    def register_agent(self, name: str, agent_instance: Any, metadata: Optional[Dict] = None) -> None:
        """
        Register an agent instance.

        Args:
            name: Unique name, which is also the CLI subcommand (e.g. 'sweep')
            agent_instance: The instantiated agent object
            metadata: Optional registry metadata (source file, module)
        """
        with self._registry_lock:
            if name in self._agents:
                logging.warning(f"Agent '{name}' already registered, overwriting")

            self._agents[name] = agent_instance
            self._agent_metadata[name] = metadata or {}
            logging.debug(f"Registered agent: {name}")

    def get_agent(self, name: str) -> Optional[Any]:
        """
        Get an agent instance by name.

        Returns:
            Agent instance or None if not found
        """
        with self._registry_lock:
            return self._agents.get(name)

    def list_agents(self) -> List[str]:
        """Registered agent names, sorted."""
        with self._registry_lock:
            return sorted(self._agents.keys())

    def discover_agents(self, agents_directory: Optional[str] = None) -> int:
        """
        Auto-discover and register agents from a directory.

        Scans the directory for files ending with '_agent.py', imports them and
        registers the agent class each one defines.

        Args:
            agents_directory: Directory to scan (default: agents/ under the project root)

        Returns:
            Number of agents discovered and registered

        Note:
            - basic_agent.py holds base classes and is skipped
            - Classes must end with 'Agent', have a 'perform' method and be
              defined in the scanned module (imported base classes are ignored)
        """
        agents_directory = agents_directory or os.path.join(PROJECT_ROOT, 'agents')
        if not os.path.isabs(agents_directory):
            agents_directory = os.path.join(os.getcwd(), agents_directory)

        if not os.path.exists(agents_directory):
            logging.warning(f"Agents directory not found: {agents_directory}")
            return 0

        logging.debug(f"Discovering agents in: {agents_directory}")
        discovered_count = 0
        for filename in sorted(os.listdir(agents_directory)):
            if not filename.endswith('_agent.py') or filename == 'basic_agent.py':
                continue

            agent_file = os.path.join(agents_directory, filename)
            module_name = f"agents.{filename[:-3]}"
            agent_instance = self._load_agent_from_file(agent_file, module_name)
            if agent_instance is None:
                continue

            agent_name = getattr(agent_instance, 'name', filename[:-9])
            metadata = {
                'source': 'auto_discovery',
                'file': agent_file,
                'module': module_name,
                'agent_metadata': getattr(agent_instance, 'metadata', {}),
            }
            self.register_agent(agent_name, agent_instance, metadata)
            discovered_count += 1

        logging.debug(f"Discovery complete: {discovered_count} agents registered")
        return discovered_count

    def _load_agent_from_file(self, file_path: str, module_name: str) -> Optional[Any]:
        """
        Import an agent file and instantiate the agent class it defines.

        Returns:
            Instantiated agent or None if loading fails
        """
        try:
            parent_dir = os.path.dirname(os.path.dirname(file_path))
            if parent_dir not in sys.path:
                sys.path.insert(0, parent_dir)

            if module_name in sys.modules:
                module = sys.modules[module_name]
            else:
                spec = importlib.util.spec_from_file_location(module_name, file_path)
                if not spec or not spec.loader:
                    return None
                module = importlib.util.module_from_spec(spec)
                sys.modules[module_name] = module
                spec.loader.exec_module(module)

            for name, obj in module.__dict__.items():
                if (isinstance(obj, type) and
                        name.endswith('Agent') and
                        obj.__module__ == module.__name__ and
                        hasattr(obj, 'perform')):
                    logging.debug(f"Loaded agent class: {name} from {file_path}")
                    return obj()

            logging.debug(f"No agent class found in {file_path}")
            return None

        except Exception as e:
            logging.error(f"Error loading agent from {file_path}: {str(e)}")
            return None

    def clear_registry(self) -> None:
        """Clear all registered agents (used by tests)."""
        with self._registry_lock:
            count = len(self._agents)
            self._agents.clear()
            self._agent_metadata.clear()
            logging.debug(f"Cleared {count} agents from registry")

    def get_stats(self) -> Dict[str, Any]:
        with self._registry_lock:
            auto_discovered = sum(
                1 for meta in self._agent_metadata.values()
                if meta.get('source') == 'auto_discovery'
            )
            return {
                'total_agents': len(self._agents),
                'auto_discovered': auto_discovered,
                'manually_registered': len(self._agents) - auto_discovered,
                'agent_names': sorted(self._agents.keys())
            }

    def __repr__(self) -> str:
        stats = self.get_stats()
        return f"AgentManager(total={stats['total_agents']}, auto={stats['auto_discovered']}, manual={stats['manually_registered']})"


def get_manager() -> AgentManager:
    """Get the singleton AgentManager instance."""
    return AgentManager()
