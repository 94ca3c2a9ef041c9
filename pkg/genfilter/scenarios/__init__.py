"""
Latent scenario handlers
"""

from typing import Any, Dict

from .registry import registry
from ..error_handler import ScenarioError


def create_handler(spec: Dict[str, Any]):
    """Factory for scenario handlers: {'builtin': name, ...overrides} or an inline definition"""
    spec = dict(spec or {})
    name = spec.pop('builtin', None)
    if name is None:
        from .inline import InlineScenarioHandler
        return InlineScenarioHandler(spec)
    handler_class = registry.get_handler_class(str(name))
    if handler_class is None:
        raise ScenarioError(
            f"unknown built-in scenario '{name}', expected one of {', '.join(registry.list_scenarios())}")
    return handler_class(spec)
