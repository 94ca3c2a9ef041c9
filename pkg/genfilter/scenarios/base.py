"""
Base handler for built-in and inline latent scenarios
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from ..diffusion_models import LatentScenario, ObservationModel, Schedule, ScoreModel
from ..error_handler import ScenarioError

DEFAULT_SCHEDULE = {'alpha': 0.0, 'T': 1.0, 'epsilon': 1e-3}


class BaseScenarioHandler(ABC):
    """Base class for scenario handlers"""

    def __init__(self, overrides: Optional[Dict[str, Any]] = None):
        self.config = self.get_default_config()
        for key, value in (overrides or {}).items():
            if isinstance(value, dict) and isinstance(self.config.get(key), dict):
                self.config[key] = {**self.config[key], **value}
            else:
                self.config[key] = value
        self._scenario = None

    @classmethod
    @abstractmethod
    def get_default_config(cls) -> Dict[str, Any]:
        """Display metadata, default schedule and observation model"""

    @abstractmethod
    def build_scenario(self) -> LatentScenario:
        """Construct the latent scenario"""

    def get_scenario_name(self) -> str:
        return self.config.get('display_name', self.__class__.__name__)

    @property
    def scenario(self) -> LatentScenario:
        if self._scenario is None:
            self._scenario = self.build_scenario()
        return self._scenario

    def schedule(self) -> Schedule:
        params = {**DEFAULT_SCHEDULE, **self.config.get('schedule', {})}
        return Schedule(float(params['alpha']), float(params['T']))

    @property
    def epsilon(self) -> float:
        return float({**DEFAULT_SCHEDULE, **self.config.get('schedule', {})}['epsilon'])

    def observation_model(self) -> ObservationModel:
        variant = self.config.get('observation', 'linear-bridge')
        if variant == 'linear-bridge':
            return ObservationModel.linear_bridge(self.schedule(), self.scenario.dim)
        if variant == 'static':
            return ObservationModel.static(self.scenario.dim)
        raise ScenarioError(f"unsupported observation model '{variant}' for a configured scenario")

    def score_model(self) -> ScoreModel:
        return ScoreModel(self.scenario, self.schedule())

    def describe(self) -> Dict[str, Any]:
        scenario = self.scenario
        info = {
            'name': scenario.name,
            'display_name': self.get_scenario_name(),
            'description': self.config.get('description', ''),
            'kind': scenario.kind,
            'dim': scenario.dim,
            'observation': self.config.get('observation', 'linear-bridge'),
            'schedule': {**DEFAULT_SCHEDULE, **self.config.get('schedule', {})},
        }
        if scenario.is_mixture:
            info['components'] = scenario.n_components
            info['attributes'] = list(scenario.attributes)
        return info
