"""
Continuous Gaussian latent
"""

from typing import Any, Dict

from .base import BaseScenarioHandler
from ..diffusion_models import LatentScenario, make_gaussian


class GaussianScenarioHandler(BaseScenarioHandler):
    """V ~ N(mean, variance) in one dimension, observed statically"""

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        return {
            'display_name': 'Gaussian',
            'description': 'Standard normal latent; Kalman-Bucy and Gaussian-channel oracles apply',
            'schedule': {'alpha': 0.0, 'T': 1.001, 'epsilon': 1e-3},
            'observation': 'static',
            'mean': 0.0,
            'variance': 1.0,
        }

    def build_scenario(self) -> LatentScenario:
        return make_gaussian([float(self.config['mean'])], float(self.config['variance']))
