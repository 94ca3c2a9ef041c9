"""
Exception hierarchy and diagnostic rendering
"""

from typing import Any, Dict, List, Optional


class GenFilterError(Exception):
    """Base class for every error raised by genfilter"""

    exit_code = 1
    kind = 'generic'

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context


class ConfigError(GenFilterError):
    """Configuration file is unreadable or fails validation"""

    exit_code = 2
    kind = 'config'

    def __init__(self, message: str, problems: Optional[List[str]] = None, **context: Any):
        super().__init__(message, **context)
        self.problems = list(problems or [])


class GridError(GenFilterError, ValueError):
    """Invalid time grid or misaligned trajectories"""

    kind = 'grid'


class ScenarioError(GenFilterError, ValueError):
    """Invalid latent scenario, label or statistic"""

    kind = 'scenario'


class NumericalError(GenFilterError):
    """A simulation or filter produced an unusable value"""

    exit_code = 3
    kind = 'numerical'


class NonFiniteDriftError(NumericalError):
    kind = 'drift'

    def __init__(self, message: str, state: Any = None, time: Optional[float] = None,
                 step: Optional[int] = None):
        super().__init__(message, state=state, time=time, step=step)
        self.state = state
        self.time = time
        self.step = step


class SimplexError(NumericalError):
    kind = 'simplex'


class WeightCollapseError(NumericalError):
    kind = 'collapse'

    def __init__(self, message: str, time: Optional[float] = None, ess: Optional[float] = None):
        super().__init__(message, time=time, ess=ess)
        self.time = time
        self.ess = ess


class QuantizationError(NumericalError):
    kind = 'quantization'


ERROR_TEMPLATES = {
    'config': """Configuration error: {message}

Problems found:
{problems}

Run 'genfilter validate --config <path>' to re-check the file,
or 'genfilter schema_guide' for the list of supported fields.""",

    'drift': """Numerical failure: {message}

Step: {step}
Time: {time}
State: {state}

Hints:
   1. Increase the terminal cutoff epsilon (the bridge drift grows like 1/(T - t))
   2. Use grid spacing 'geometric' to refine the mesh near T
   3. Increase the step count M""",

    'collapse': """Numerical failure: {message}

Time of collapse: {time}
Effective sample size: {ess}

Hints:
   1. Increase n_particles
   2. Shorten the horizon or use a coarser observation model""",

    'numerical': """Numerical failure: {message}

Context:
{context}""",

    'generic': """Error: {message}""",
}


def _render_context(context: Dict[str, Any]) -> str:
    if not context:
        return "   (none)"
    return "\n".join(f"   • {key}: {value}" for key, value in sorted(context.items()))


def format_error(error: BaseException) -> str:
    """Render a multi-line diagnostic for an exception"""
    if not isinstance(error, GenFilterError):
        return ERROR_TEMPLATES['generic'].format(message=str(error))

    kind = error.kind if error.kind in ERROR_TEMPLATES else (
        'numerical' if isinstance(error, NumericalError) else 'generic')

    if kind == 'config':
        problems = getattr(error, 'problems', []) or [error.message]
        return ERROR_TEMPLATES['config'].format(
            message=error.message,
            problems="\n".join(f"   • {p}" for p in problems),
        )
    if kind == 'drift':
        return ERROR_TEMPLATES['drift'].format(
            message=error.message, step=error.step, time=error.time, state=error.state)
    if kind == 'collapse':
        return ERROR_TEMPLATES['collapse'].format(
            message=error.message, time=error.time, ess=error.ess)
    if kind == 'numerical':
        return ERROR_TEMPLATES['numerical'].format(
            message=error.message, context=_render_context(error.context))
    return ERROR_TEMPLATES['generic'].format(message=error.message)


SCHEMA_FIELDS = [
    ('schema_version', 'integer, must be 1'),
    ('experiment', 'filter-bench | mi-curve | fork | bridge-check | joint-vs-bridge'),
    ('scenario.builtin', 'name of a built-in scenario (see "genfilter scenarios list")'),
    ('scenario.kind', 'finite-mixture | gaussian (inline scenarios)'),
    ('scenario.weights', 'component prior weights, positive, summing to 1'),
    ('scenario.renderings', 'one vector per component, pairwise distinct'),
    ('scenario.attributes', 'mapping name -> list of labels, one per component'),
    ('scenario.mean / scenario.variance', 'gaussian scenarios only'),
    ('schedule.alpha / schedule.T / schedule.epsilon', 'alpha >= 0, T > 0, 0 < epsilon < T'),
    ('grid.M / grid.spacing', 'step count >= 1, uniform | geometric'),
    ('sampler.method', 'joint-system | bridge-with-known-latent | backward-score | predictor-corrector'),
    ('sampler.corrector_steps / sampler.snr', 'corrector steps >= 0, snr > 0'),
    ('sampler.snap_terminal', 'true to snap terminal states to the nearest rendering (default false)'),
    ('mc.n_paths / mc.n_particles / mc.k / mc.n_seeds', 'Monte-Carlo sizes >= 1 (k >= 2)'),
    ('statistic', 'attribute name used by mi-curve'),
    ('root_seed', 'unsigned 64-bit integer'),
    ('output_dir', 'directory receiving CSV, SVG and manifest files'),
]


def get_schema_guide() -> str:
    """Describe every supported configuration field"""
    lines = ["genfilter experiment configuration", "=" * 50, ""]
    width = max(len(name) for name, _ in SCHEMA_FIELDS)
    for name, description in SCHEMA_FIELDS:
        lines.append(f"  {name:<{width}}  {description}")
    lines.append("")
    lines.append("YAML and JSON documents are both accepted.")
    return "\n".join(lines)
