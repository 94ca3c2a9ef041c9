"""
Configuration management: packaged defaults, the user file and command-line
overrides, merged in that order
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .error_handler import ConfigError
from .experiment_configs import ExperimentConfig, validate_config

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = Path(__file__).parent / 'default_config.yaml'


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class ConfigManager:
    """Loads and validates an experiment configuration (YAML or JSON)"""

    def __init__(self, config_file: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        self.config_file = Path(config_file).expanduser() if config_file else None
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.default_config = self._load_yaml(DEFAULT_CONFIG_FILE)
        self.user_config = self._load_yaml(self.config_file) if self.config_file else {}

    @staticmethod
    def _load_yaml(path: Path) -> Dict[str, Any]:
        if not path.exists():
            raise ConfigError(f"configuration file not found: {path}", problems=[f"missing file {path}"])
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}", problems=[str(e)])
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a mapping", problems=["top-level document is not a mapping"])
        return data

    def merged(self) -> Dict[str, Any]:
        """Defaults, then the user file, then command-line overrides"""
        config = _deep_merge(self.default_config, self.user_config)
        return _deep_merge(config, self.overrides)

    def validate(self) -> List[str]:
        """Every problem of the merged configuration; empty when valid"""
        return validate_config(self.merged())

    def get_config(self) -> ExperimentConfig:
        config = ExperimentConfig.from_dict(self.merged())
        logger.info("loaded %s experiment (root seed %d) from %s",
                    config.experiment, config.root_seed, self.config_file or 'defaults')
        return config
