"""
Symmetric two-component scenario
"""

from typing import Any, Dict

from .base import BaseScenarioHandler
from ..diffusion_models import LatentScenario, make_mixture


class BinaryScenarioHandler(BaseScenarioHandler):
    """K = 2, v = -1 / +1, N = 1"""

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        return {
            'display_name': 'Binary',
            'description': 'Two equiprobable components at -1 and +1 on the real line',
            'schedule': {'alpha': 0.0, 'T': 1.0, 'epsilon': 1e-3},
            'observation': 'linear-bridge',
            'separation': 1.0,
        }

    def build_scenario(self) -> LatentScenario:
        d = float(self.config['separation'])
        return make_mixture([0.5, 0.5], [[-d], [d]], {'sign': ['neg', 'pos']}, name='binary')
