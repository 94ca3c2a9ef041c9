"""
Scenario registry to centralize name-to-handler mapping.
"""

from typing import List, Optional, Type


class ScenarioRegistry:
    """Registry for built-in scenario handlers"""

    def __init__(self):
        self._handlers = {}
        self._initialized = False

    def _ensure_initialized(self):
        """Lazy initialization to avoid circular imports"""
        if self._initialized:
            return

        from .binary import BinaryScenarioHandler
        from .ternary import TernaryScenarioHandler
        from .quad import QuadScenarioHandler
        from .hierarchy import HierarchyScenarioHandler
        from .gaussian import GaussianScenarioHandler

        self._handlers = {
            'binary': BinaryScenarioHandler,
            'ternary': TernaryScenarioHandler,
            'quad': QuadScenarioHandler,
            'hierarchy': HierarchyScenarioHandler,
            'gaussian': GaussianScenarioHandler,
        }
        self._initialized = True

    def get_handler_class(self, name: str) -> Optional[Type]:
        """Get handler class for a built-in scenario"""
        self._ensure_initialized()
        return self._handlers.get(name.lower())

    def list_scenarios(self) -> List[str]:
        self._ensure_initialized()
        return sorted(self._handlers)


# Global registry instance
registry = ScenarioRegistry()
