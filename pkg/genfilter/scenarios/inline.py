"""
Scenario described inline in an experiment configuration
"""

from typing import Any, Dict

from .base import BaseScenarioHandler
from ..diffusion_models import LatentScenario, make_gaussian, make_mixture


class InlineScenarioHandler(BaseScenarioHandler):
    """Weights, renderings and attributes (or mean and variance) taken from the config"""

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        return {
            'display_name': 'Inline',
            'description': 'Scenario defined in the experiment configuration',
            'observation': 'linear-bridge',
            'kind': 'finite-mixture',
        }

    def build_scenario(self) -> LatentScenario:
        if self.config.get('kind') == 'gaussian':
            return make_gaussian(self.config.get('mean', [0.0]), float(self.config.get('variance', 1.0)),
                                 name=self.config.get('name', 'inline'))
        return make_mixture(self.config['weights'], self.config['renderings'],
                            self.config.get('attributes'), name=self.config.get('name', 'inline'))
