"""
Two-attribute hierarchy scenario
"""

from typing import Any, Dict

import numpy as np

from .base import BaseScenarioHandler
from ..diffusion_models import LatentScenario, make_mixture


class HierarchyScenarioHandler(BaseScenarioHandler):
    """
    K = 4 components in N = 8 dimensions. The global attribute shifts every
    coordinate by +-shift; the local attribute moves the first coordinate
    by +-detail.
    """

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        return {
            'display_name': 'Hierarchy',
            'description': 'Global attribute shifts all 8 coordinates, local attribute perturbs one',
            'schedule': {'alpha': 2.0, 'T': 2.0, 'epsilon': 1e-3},
            'observation': 'linear-bridge',
            'dim': 8,
            'shift': 1.0,
            'detail': 1.0,
        }

    def build_scenario(self) -> LatentScenario:
        dim = int(self.config['dim'])
        shift = float(self.config['shift'])
        detail = float(self.config['detail'])
        renderings = []
        for global_sign in (-1.0, 1.0):
            for local_sign in (-1.0, 1.0):
                v = np.full(dim, global_sign * shift)
                v[0] += local_sign * detail
                renderings.append(v)
        return make_mixture([0.25] * 4, renderings,
                            {'global': ['neg', 'neg', 'pos', 'pos'],
                             'local': ['neg', 'pos', 'neg', 'pos']}, name='hierarchy')
