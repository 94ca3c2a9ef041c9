"""
Experiment configuration and run manifest data classes, with exhaustive
schema and semantic validation
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .error_handler import ConfigError, GenFilterError
from .generative import METHODS
from .sde_engine import SPACINGS

SCHEMA_VERSION = 1
EXPERIMENTS = ('filter-bench', 'mi-curve', 'fork', 'bridge-check', 'joint-vs-bridge')
MAX_SEED = (1 << 64) - 1
OBSERVATIONS = ('linear-bridge', 'static')


@dataclass
class ExperimentConfig:
    """Experiment configuration data class"""
    experiment: str
    scenario: Dict[str, Any] = field(default_factory=dict)
    schedule: Dict[str, Any] = field(default_factory=dict)
    grid: Dict[str, Any] = field(default_factory=dict)
    sampler: Dict[str, Any] = field(default_factory=dict)
    mc: Dict[str, Any] = field(default_factory=dict)
    statistic: Optional[str] = None
    times: List[float] = field(default_factory=list)
    root_seed: int = 0
    output_dir: str = 'results'
    threads: int = 1
    plots: bool = True
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        result = {
            'schema_version': self.schema_version,
            'experiment': self.experiment,
            'scenario': dict(self.scenario),
            'schedule': dict(self.schedule),
            'grid': dict(self.grid),
            'sampler': dict(self.sampler),
            'mc': dict(self.mc),
            'times': list(self.times),
            'root_seed': self.root_seed,
            'output_dir': self.output_dir,
            'threads': self.threads,
            'plots': self.plots,
        }
        if self.statistic is not None:
            result['statistic'] = self.statistic
        return result

    def digest_view(self) -> Dict[str, Any]:
        """Fields that determine the results; execution settings are left out"""
        view = self.to_dict()
        for key in ('output_dir', 'threads', 'plots'):
            view.pop(key)
        return view

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        problems = validate_config(data)
        if problems:
            raise ConfigError("configuration failed validation", problems=problems)
        return cls(
            experiment=data['experiment'],
            scenario=normalize_scenario(data.get('scenario') or {}),
            schedule=dict(data.get('schedule') or {}),
            grid=dict(data.get('grid') or {}),
            sampler=dict(data.get('sampler') or {}),
            mc=dict(data.get('mc') or {}),
            statistic=data.get('statistic'),
            times=[float(t) for t in data.get('times') or []],
            root_seed=int(data.get('root_seed', 0)),
            output_dir=str(data.get('output_dir', 'results')),
            threads=int(data.get('threads', 1)),
            plots=bool(data.get('plots', True)),
            schema_version=int(data['schema_version']),
        )


@dataclass
class Manifest:
    """Provenance record written next to the results"""
    experiment: str
    config_digest: str
    tool_version: str
    root_seed: int
    wall_clock_seconds: float
    outputs: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'experiment': self.experiment,
            'config_digest': self.config_digest,
            'tool_version': self.tool_version,
            'root_seed': self.root_seed,
            'wall_clock_seconds': self.wall_clock_seconds,
            'outputs': dict(sorted(self.outputs.items())),
            'summary': self.summary,
        }


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


def _attribute_lists(attributes: Any, k: Optional[int], problems: List[str]) -> Dict[str, list]:
    """
    Attributes are either one label per component, or a mapping
    label -> component indices covering every component once.
    """
    result = {}
    if not isinstance(attributes, dict):
        problems.append("scenario.attributes must be a mapping of attribute name to labels")
        return result
    for name, spec in attributes.items():
        if isinstance(spec, dict):
            labels = [None] * (k or 0)
            for label, members in spec.items():
                for index in members if isinstance(members, list) else [members]:
                    if not _is_int(index) or k is None or not 0 <= index < k:
                        problems.append(
                            f"scenario.attributes.{name}: label '{label}' references unknown component {index!r}")
                    elif labels[index] is not None:
                        problems.append(
                            f"scenario.attributes.{name}: component {index} has two labels")
                    else:
                        labels[index] = label
            missing = [i for i, label in enumerate(labels) if label is None]
            if missing:
                problems.append(f"scenario.attributes.{name}: components {missing} have no label")
            result[name] = labels
        elif isinstance(spec, list):
            if k is not None and len(spec) != k:
                problems.append(f"scenario.attributes.{name} has {len(spec)} labels for {k} components")
            result[name] = list(spec)
        else:
            problems.append(f"scenario.attributes.{name} must be a list or a mapping")
    return result


def _validate_inline_scenario(scenario: Dict[str, Any], problems: List[str]) -> Optional[Dict[str, list]]:
    kind = scenario.get('kind', 'finite-mixture')
    if kind == 'gaussian':
        if 'variance' in scenario and (not _is_number(scenario['variance']) or scenario['variance'] < 0):
            problems.append("scenario.variance must be a non-negative number")
        return {}
    if kind != 'finite-mixture':
        problems.append(f"scenario.kind '{kind}' must be finite-mixture or gaussian")
        return None

    weights = scenario.get('weights')
    renderings = scenario.get('renderings')
    k = None
    if weights is None:
        problems.append("scenario.weights is required for finite-mixture scenarios")
    elif not isinstance(weights, list) or not weights or not all(_is_number(w) for w in weights):
        problems.append("scenario.weights must be a non-empty list of numbers")
    else:
        k = len(weights)
        if any(w <= 0 for w in weights):
            problems.append("scenario.weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            problems.append(f"scenario.weights must sum to 1, got {sum(weights)}")
    if renderings is None:
        problems.append("scenario.renderings is required for finite-mixture scenarios")
    else:
        try:
            array = np.asarray(renderings, dtype=float)
            if array.ndim == 1:
                array = array[:, None]
            if array.ndim != 2:
                raise ValueError
            if k is not None and array.shape[0] != k:
                problems.append(f"scenario.renderings has {array.shape[0]} rows for {k} weights")
            elif len({tuple(row) for row in array}) != array.shape[0]:
                problems.append("scenario.renderings must be pairwise distinct")
            if not np.all(np.isfinite(array)):
                problems.append("scenario.renderings must be finite")
        except (TypeError, ValueError):
            problems.append("scenario.renderings must be a list of equal-length numeric vectors")
    return _attribute_lists(scenario.get('attributes', {}), k, problems)


def validate_config(data: Any) -> List[str]:
    """Collect every schema and semantic problem of a configuration document"""
    problems: List[str] = []
    if not isinstance(data, dict):
        return ["configuration must be a mapping"]

    version = data.get('schema_version')
    if version is None:
        problems.append("schema_version is required")
    elif version != SCHEMA_VERSION:
        problems.append(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")

    experiment = data.get('experiment')
    if experiment not in EXPERIMENTS:
        problems.append(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {experiment!r}")

    handler = None
    before = len(problems)
    scenario = data.get('scenario')
    if not isinstance(scenario, dict) or not scenario:
        problems.append("scenario block is required")
    elif 'builtin' in scenario:
        from .scenarios import registry
        if registry.get_handler_class(str(scenario['builtin'])) is None:
            problems.append(f"scenario.builtin '{scenario['builtin']}' is not one of "
                            f"{', '.join(registry.list_scenarios())}")
    else:
        attributes = _validate_inline_scenario(scenario, problems)
        if attributes is not None and isinstance(scenario.get('attributes'), dict):
            scenario = {**scenario, 'attributes': attributes}
    if len(problems) == before and isinstance(scenario, dict):
        from .scenarios import create_handler
        try:
            handler = create_handler({**scenario, 'schedule': data.get('schedule') or {}})
            handler.scenario  # builds and validates
        except GenFilterError as e:
            problems.append(f"scenario: {e.message}")
            handler = None

    schedule = dict(handler.config.get('schedule', {})) if handler else {}
    schedule.update(data.get('schedule') or {})
    alpha, T, eps = schedule.get('alpha', 0.0), schedule.get('T', 1.0), schedule.get('epsilon', 1e-3)
    if not _is_number(alpha) or alpha < 0:
        problems.append(f"schedule.alpha must be a non-negative number, got {alpha!r}")
    if not _is_number(T) or T <= 0:
        problems.append(f"schedule.T must be positive, got {T!r}")
    if not _is_number(eps) or eps <= 0:
        problems.append(f"schedule.epsilon must be positive, got {eps!r}")
    elif _is_number(T) and eps >= T:
        problems.append(f"schedule.epsilon ({eps}) must be smaller than schedule.T ({T})")

    grid = data.get('grid') or {}
    if not _is_int(grid.get('M', 1000)) or grid.get('M', 1000) < 1:
        problems.append(f"grid.M must be a positive integer, got {grid.get('M')!r}")
    if grid.get('spacing', 'uniform') not in SPACINGS:
        problems.append(f"grid.spacing must be one of {', '.join(SPACINGS)}, got {grid.get('spacing')!r}")
    fraction = grid.get('refine_fraction', 0.5)
    if not _is_number(fraction) or not 0 < fraction < 1:
        problems.append(f"grid.refine_fraction must lie in (0, 1), got {fraction!r}")

    sampler = data.get('sampler') or {}
    if sampler.get('method', 'backward-score') not in METHODS:
        problems.append(f"sampler.method must be one of {', '.join(METHODS)}, got {sampler.get('method')!r}")
    steps = sampler.get('corrector_steps', 1)
    if not _is_int(steps) or steps < 0:
        problems.append(f"sampler.corrector_steps must be a non-negative integer, got {steps!r}")
    snr = sampler.get('snr', 0.06)
    if not _is_number(snr) or snr <= 0:
        problems.append(f"sampler.snr must be positive, got {snr!r}")
    if not isinstance(sampler.get('snap_terminal', False), bool):
        problems.append(f"sampler.snap_terminal must be true or false, got {sampler['snap_terminal']!r}")

    mc = data.get('mc') or {}
    for key in ('n_paths', 'n_particles', 'n_seeds', 'tau_count', 'bins'):
        if key in mc and (not _is_int(mc[key]) or mc[key] < 1):
            problems.append(f"mc.{key} must be a positive integer, got {mc[key]!r}")
    if 'k' in mc and (not _is_int(mc['k']) or mc['k'] < 2):
        problems.append(f"mc.k must be an integer >= 2, got {mc['k']!r}")

    statistic = data.get('statistic')
    if statistic is not None and handler is not None and handler.scenario.is_mixture:
        if statistic not in handler.scenario.statistic_names():
            problems.append(f"statistic '{statistic}' is not an attribute of the scenario "
                            f"(available: {', '.join(handler.scenario.statistic_names())})")
    if handler is not None:
        observation = handler.config.get('observation', 'linear-bridge')
        if not handler.scenario.is_mixture and experiment in ('fork', 'joint-vs-bridge'):
            problems.append(f"experiment '{experiment}' needs a finite-mixture scenario")
        if experiment in ('bridge-check', 'joint-vs-bridge') and observation != 'linear-bridge':
            problems.append(f"experiment '{experiment}' needs scenario.observation 'linear-bridge'")
        if not handler.scenario.is_mixture and observation != 'static' and experiment in ('filter-bench', 'mi-curve'):
            problems.append(f"experiment '{experiment}' supports gaussian latents under static observation only")
        if observation not in OBSERVATIONS:
            problems.append(f"scenario.observation must be one of {', '.join(OBSERVATIONS)}, got {observation!r}")

    times = data.get('times') or []
    if not isinstance(times, list) or not all(_is_number(t) for t in times):
        problems.append("times must be a list of numbers")
    elif _is_number(T) and _is_number(eps):
        for t in times:
            if not 0 <= t <= T - eps:
                problems.append(f"time {t} lies outside [0, T - epsilon] = [0, {T - eps}]")

    seed = data.get('root_seed', 0)
    if not _is_int(seed) or not 0 <= seed <= MAX_SEED:
        problems.append(f"root_seed must be an unsigned 64-bit integer, got {seed!r}")
    threads = data.get('threads', 1)
    if not _is_int(threads) or threads < 1:
        problems.append(f"threads must be a positive integer, got {threads!r}")
    return problems


def normalize_scenario(scenario: Dict[str, Any]) -> Dict[str, Any]:
    """Rewrite mapping-form attributes as one label per component"""
    scenario = dict(scenario)
    attributes = scenario.get('attributes')
    if 'builtin' not in scenario and isinstance(attributes, dict) and scenario.get('weights'):
        problems: List[str] = []
        scenario['attributes'] = _attribute_lists(attributes, len(scenario['weights']), problems)
    return scenario
