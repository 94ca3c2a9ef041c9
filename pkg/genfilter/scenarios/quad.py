"""
Four components on the corners of a square
"""

from typing import Any, Dict

from .base import BaseScenarioHandler
from ..diffusion_models import LatentScenario, make_mixture


class QuadScenarioHandler(BaseScenarioHandler):
    """K = 4, N = 2; the horizontal and vertical sides are the two attributes"""

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        return {
            'display_name': 'Quad',
            'description': 'Equiprobable corners of the square [-1, 1]^2',
            'schedule': {'alpha': 0.0, 'T': 1.0, 'epsilon': 1e-3},
            'observation': 'linear-bridge',
        }

    def build_scenario(self) -> LatentScenario:
        corners = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]
        return make_mixture([0.25] * 4, corners,
                            {'horizontal': ['left', 'left', 'right', 'right'],
                             'vertical': ['down', 'up', 'down', 'up']}, name='quad')
