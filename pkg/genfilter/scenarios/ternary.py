"""
Three-component scenario with unequal weights
"""

from typing import Any, Dict

from .base import BaseScenarioHandler
from ..diffusion_models import LatentScenario, make_mixture


class TernaryScenarioHandler(BaseScenarioHandler):
    """K = 3 on the real line; used by the filter benchmark"""

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        return {
            'display_name': 'Ternary',
            'description': 'Three components at -1.5, 0.25 and 1.0 with weights 0.3 / 0.5 / 0.2',
            'schedule': {'alpha': 1.0, 'T': 1.0, 'epsilon': 1e-2},
            'observation': 'linear-bridge',
        }

    def build_scenario(self) -> LatentScenario:
        return make_mixture([0.3, 0.5, 0.2], [[-1.5], [0.25], [1.0]],
                            {'side': ['left', 'right', 'right']}, name='ternary')
