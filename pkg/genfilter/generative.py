"""
Generative samplers: the coupled (pi_t, Y_t) system that never sees the
latent, the bridge with a known latent, backward-SDE sampling from the exact
score and predictor-corrector refinement.

Random streams are split per path: the latent draw, the initial-state noise,
the Brownian increments and the corrector noise of path i come from
``stream.child(LATENT, i)``, ``stream.child(INITIAL, i)``,
``stream.child(BROWNIAN, i)`` and ``stream.child(CORRECTOR, i)``. Chunked
simulations of a path range therefore reproduce the full-range run.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .diffusion_models import (SMALL_ALPHA_U, LatentScenario, ObservationModel, ScoreModel,
                               bridge_drift)
from .error_handler import ConfigError, NonFiniteDriftError, ScenarioError
from .filtering import ConditioningSpec, _kushner_update, initial_evidence
from .sde_engine import (RandomStream, SamplePath, TimeGrid, integrate_from,
                         sample_brownian_ensemble)

logger = logging.getLogger(__name__)

LATENT, INITIAL, BROWNIAN, CORRECTOR = range(4)

METHODS = ('joint-system', 'bridge-with-known-latent', 'backward-score', 'predictor-corrector')
DEFAULT_SNR = 0.06
DEFAULT_CORRECTOR_STEPS = 1


@dataclass(frozen=True)
class SamplerConfig:
    method: str = 'backward-score'
    corrector_steps: int = DEFAULT_CORRECTOR_STEPS
    snr: float = DEFAULT_SNR
    snap_terminal: bool = False

    def __post_init__(self):
        problems = []
        if self.method not in METHODS:
            problems.append(f"sampler.method '{self.method}' is not one of {', '.join(METHODS)}")
        if int(self.corrector_steps) != self.corrector_steps or self.corrector_steps < 0:
            problems.append(f"sampler.corrector_steps must be a non-negative integer, got {self.corrector_steps}")
        if not self.snr > 0:
            problems.append(f"sampler.snr must be positive, got {self.snr}")
        if problems:
            raise ConfigError("invalid sampler configuration", problems=problems)

    def to_dict(self) -> dict:
        return {'method': self.method, 'corrector_steps': self.corrector_steps, 'snr': self.snr,
                'snap_terminal': self.snap_terminal}

    @classmethod
    def from_dict(cls, data: dict) -> 'SamplerConfig':
        return cls(method=data.get('method', 'backward-score'),
                   corrector_steps=data.get('corrector_steps', DEFAULT_CORRECTOR_STEPS),
                   snr=data.get('snr', DEFAULT_SNR),
                   snap_terminal=data.get('snap_terminal', False))


@dataclass(frozen=True)
class JointTrajectory:
    """Measurement path and filter state of the coupled system, same grid"""
    y_path: SamplePath
    probs: np.ndarray
    root_seed: int
    stream_index: int
    clip_count: int = 0

    @property
    def grid(self) -> TimeGrid:
        return self.y_path.grid


@dataclass(frozen=True)
class HittingReport:
    """Nearest rendering and distance to it for every terminal state"""
    components: np.ndarray
    distances: np.ndarray

    def frequencies(self, n_components: int) -> np.ndarray:
        return np.bincount(self.components, minlength=n_components) / self.components.size


def _restricted_prior(scenario: LatentScenario, conditioning: Optional[ConditioningSpec]) -> np.ndarray:
    if conditioning is None or conditioning.kind == 'measurements-only':
        return scenario.weights
    if conditioning.kind == 'latent':
        raise ScenarioError("generation under full-latent conditioning is simulate_bridge")
    weights = np.where(scenario.support_mask(conditioning.statistic, conditioning.value),
                       scenario.weights, 0.0)
    return weights / weights.sum()


def draw_latents(scenario: LatentScenario, stream: RandomStream, n_paths: int, start: int = 0,
                 conditioning: Optional[ConditioningSpec] = None) -> Tuple[Optional[np.ndarray], np.ndarray]:
    """Prior draws of (component, rendering) per path; components is None for gaussian latents"""
    if scenario.is_mixture:
        prior = _restricted_prior(scenario, conditioning)
        components = np.array([
            stream.child(LATENT, start + i).generator().choice(scenario.n_components, p=prior)
            for i in range(n_paths)])
        return components, scenario.renderings[components]
    if conditioning is not None and conditioning.kind != 'measurements-only':
        raise ScenarioError("gaussian latents support measurement-only conditioning")
    renderings = np.stack([scenario.sample_latent(stream.child(LATENT, start + i).generator(), 1)[0]
                           for i in range(n_paths)])
    return None, renderings


def initial_states(v: np.ndarray, obs_model: ObservationModel, stream: RandomStream,
                   start: int = 0) -> np.ndarray:
    """
    Y_0 given V = v: the noising process after reversed time T,
    exp(-alpha T) v + sqrt((1 - exp(-2 alpha T)) / (2 alpha)) xi.
    Observation models without a schedule start at 0.
    """
    v = np.atleast_2d(v)
    if obs_model.schedule is None:
        return np.zeros_like(v)
    sched = obs_model.schedule
    scale = float(sched.scale(sched.T))
    std = float(np.sqrt(sched.variance(sched.T)))
    noise = np.stack([stream.child(INITIAL, start + i).generator().standard_normal(v.shape[1])
                      for i in range(v.shape[0])])
    return scale * v + std * noise


def _brownian(grid: TimeGrid, dim: int, stream: RandomStream, n_paths: int, start: int) -> np.ndarray:
    return sample_brownian_ensemble(grid, dim, stream.child(BROWNIAN), n_paths, start)


def _as_path(grid: TimeGrid, values: np.ndarray, single: bool) -> SamplePath:
    return SamplePath(grid, values[:, 0, :] if single else values)


def _finish(score_model: ScoreModel, grid: TimeGrid, values: np.ndarray, single: bool,
            config: Optional[SamplerConfig]) -> SamplePath:
    if config is not None and config.snap_terminal:
        values[-1] = snap_to_nearest(values[-1], score_model.scenario)
    return _as_path(grid, values, single)


def simulate_joint_system(scenario: LatentScenario, obs_model: ObservationModel, grid: TimeGrid,
                          stream: RandomStream, n_paths: Optional[int] = None, start: int = 0,
                          conditioning: Optional[ConditioningSpec] = None) -> JointTrajectory:
    """
    Generate Y from the coupled system dY = <pi, H(Y, ., t)> dt + dW, with pi
    driven by the Kushner-Stratonovich equation. The latent draw is used only
    to sample Y_0 from its marginal; the loop never touches it.

    Each step first forms dY from the current pi, then updates pi with the
    same dY (non-anticipating ordering).
    """
    if not scenario.is_mixture:
        raise ScenarioError("the joint system needs a finite-mixture scenario")
    single = n_paths is None
    count = 1 if single else n_paths
    _, v = draw_latents(scenario, stream, count, start, conditioning)
    y = initial_states(v, obs_model, stream, start)

    with np.errstate(divide='ignore'):
        log_prior = np.log(_restricted_prior(scenario, conditioning))
    evidence = initial_evidence(scenario, obs_model, y)
    if evidence is not None:
        log_prior = log_prior + evidence
    pi = np.exp(log_prior - logsumexp(log_prior, axis=-1, keepdims=True))
    pi = np.broadcast_to(pi, (count, scenario.n_components)).copy()

    dW = _brownian(grid, scenario.dim, stream, count, start)
    values = np.empty((len(grid), count, scenario.dim))
    probs = np.empty((len(grid), count, scenario.n_components))
    values[0], probs[0] = y, pi
    clips = 0
    for i in range(grid.n_steps):
        t = grid.t_points[i]
        dt = grid.t_points[i + 1] - t
        H = obs_model.hypotheses(y, scenario.renderings, t)
        h_bar = np.einsum('pk,pkn->pn', pi, H)
        if not np.all(np.isfinite(h_bar)):
            raise NonFiniteDriftError(f"joint-system drift is not finite at t = {t:.6g}",
                                      state=y.copy(), time=float(t), step=i)
        dY = h_bar * dt + dW[i]
        pi, clipped = _kushner_update(pi, H, dY, dt)
        clips += clipped
        y = y + dY
        values[i + 1], probs[i + 1] = y, pi
    if clips:
        logger.info("joint system clipped %d simplex entries", clips)
    return JointTrajectory(y_path=_as_path(grid, values, single),
                           probs=probs[:, 0, :] if single else probs,
                           root_seed=stream.root_seed, stream_index=stream.stream_index,
                           clip_count=clips)


def simulate_bridge(v, obs_model: ObservationModel, grid: TimeGrid, stream: RandomStream,
                    y0=None, n_paths: Optional[int] = None, start: int = 0,
                    noise_scale: float = 1.0) -> SamplePath:
    """
    Euler-Maruyama of dY = (m_t v - f_t Y) dt + dW, pinned to v at T.

    ``v`` is one rendering (N,) or one per path (P, N). Without ``y0`` the
    start is drawn from law(Y_0 | V = v), which makes the ensemble the
    sample-the-latent-then-bridge system.
    """
    if obs_model.variant != 'linear-bridge':
        raise ScenarioError("simulate_bridge needs a linear-bridge observation model")
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ScenarioError("bridge target must be finite")
    single = n_paths is None
    count = 1 if single else n_paths
    targets = np.broadcast_to(np.atleast_2d(v), (count, v.shape[-1]))
    if y0 is None:
        start_states = initial_states(targets, obs_model, stream, start)
    else:
        start_states = np.broadcast_to(np.asarray(y0, dtype=float), targets.shape).copy()
    sched = obs_model.schedule
    increments = noise_scale * _brownian(grid, targets.shape[1], stream, count, start)
    values = integrate_from(lambda y, t: bridge_drift(y, targets, t, sched), start_states, grid, increments)
    return _as_path(grid, values, single)


def simulate_with_latent(scenario: LatentScenario, obs_model: ObservationModel, grid: TimeGrid,
                         stream: RandomStream, n_paths: int, start: int = 0):
    """
    Draw the latent, then Y with the latent known: the bridge for a
    linear-bridge model, otherwise dY = H(Y, v, t) dt + dW.
    Returns (components, v, ensemble path); components is None for gaussian latents.
    """
    components, v = draw_latents(scenario, stream, n_paths, start)
    if obs_model.variant == 'linear-bridge':
        return components, v, simulate_bridge(v, obs_model, grid, stream, n_paths=n_paths, start=start)
    y0 = initial_states(v, obs_model, stream, start)
    increments = _brownian(grid, scenario.dim, stream, n_paths, start)
    values = integrate_from(lambda y, t: obs_model(y, v, t), y0, grid, increments)
    return components, v, SamplePath(grid, values)


def _backward_drift(score_model: ScoreModel, label):
    if score_model.schedule.alpha < SMALL_ALPHA_U:
        return lambda y, t: score_model.bridge_form_drift(y, t, label)
    return lambda y, t: score_model.songsde_drift(y, t, label)


def _backward_start(score_model: ScoreModel, stream: RandomStream, count: int, start: int,
                    conditioning: Optional[ConditioningSpec]) -> np.ndarray:
    scenario = score_model.scenario
    _, v = draw_latents(scenario, stream, count, start, conditioning)
    obs_model = ObservationModel.linear_bridge(score_model.schedule, scenario.dim)
    return initial_states(v, obs_model, stream, start)


def simulate_backward(score_model: ScoreModel, grid: TimeGrid, stream: RandomStream,
                      config: Optional[SamplerConfig] = None, n_paths: Optional[int] = None,
                      start: int = 0, conditioning: Optional[ConditioningSpec] = None) -> SamplePath:
    """
    Euler-Maruyama of the score-form backward SDE, started from the marginal of Y_0.
    With ``config.snap_terminal`` the state at T - epsilon is replaced by its nearest rendering.
    """
    single = n_paths is None
    count = 1 if single else n_paths
    label = conditioning.as_label() if conditioning is not None else None
    y0 = _backward_start(score_model, stream, count, start, conditioning)
    increments = _brownian(grid, score_model.scenario.dim, stream, count, start)
    values = integrate_from(_backward_drift(score_model, label), y0, grid, increments)
    return _finish(score_model, grid, values, single, config)


def _corrector_noise(grid: TimeGrid, dim: int, stream: RandomStream, n_corr: int,
                     count: int, start: int) -> np.ndarray:
    noise = np.empty((grid.n_steps, n_corr, count, dim))
    for i in range(count):
        rng = stream.child(CORRECTOR, start + i).generator()
        noise[:, :, i, :] = rng.standard_normal((grid.n_steps, n_corr, dim))
    return noise


def backward_continue(score_model: ScoreModel, y_start: np.ndarray, grid: TimeGrid, increments: np.ndarray,
                      start_index: int = 0, config: Optional[SamplerConfig] = None,
                      corrector_noise: Optional[np.ndarray] = None, label=None) -> np.ndarray:
    """
    Integrate the backward SDE from grid point ``start_index`` to T - epsilon.

    Returns states at grid points start_index..end, shape (steps + 1, P, N).
    Under the 'predictor-corrector' method each Euler-Maruyama step is
    followed by ``corrector_steps`` Langevin updates
    y <- y + d score + sqrt(2 d) z at the new time, with the signal-to-noise
    step size d = 2 (r |z| / |score|)^2 taken per path and capped at the
    predictor step. Each path sees only its own score and noise, so a path
    evolves the same in any batch. Paths with zero score norm skip the step.
    """
    drift = _backward_drift(score_model, label)
    if config is None or config.method != 'predictor-corrector':
        return integrate_from(drift, y_start, grid, increments, start_index)

    n_corr = int(config.corrector_steps)
    times = grid.t_points[start_index:]
    y = np.array(y_start, dtype=float)
    values = np.empty((times.size,) + y.shape)
    values[0] = y
    skipped = 0
    for i in range(times.size - 1):
        t = times[i]
        step_drift = np.asarray(drift(y, t), dtype=float)
        if not np.all(np.isfinite(step_drift)):
            raise NonFiniteDriftError(f"drift is not finite at t = {t:.6g}",
                                      state=y.copy(), time=float(t), step=start_index + i)
        y = y + step_drift * (times[i + 1] - t) + increments[i]
        for c in range(n_corr):
            z = corrector_noise[i, c]
            grad = score_model.score(y, times[i + 1], label)
            grad_norm = np.linalg.norm(grad, axis=-1, keepdims=True)
            noise_norm = np.linalg.norm(z, axis=-1, keepdims=True)
            active = grad_norm > 0
            skipped += int(np.count_nonzero(~active))
            ratio = np.divide(config.snr * noise_norm, grad_norm, out=np.zeros_like(grad_norm), where=active)
            delta = np.minimum(2.0 * ratio ** 2, times[i + 1] - t)
            y = y + delta * grad + np.sqrt(2.0 * delta) * z
        values[i + 1] = y
    if skipped:
        logger.info("skipped %d corrector steps with zero score norm", skipped)
    return values


def predictor_corrector(score_model: ScoreModel, grid: TimeGrid, stream: RandomStream,
                        config: Optional[SamplerConfig] = None, n_paths: Optional[int] = None,
                        start: int = 0, conditioning: Optional[ConditioningSpec] = None) -> SamplePath:
    """Backward sampler with Langevin corrector steps after every predictor step"""
    config = config or SamplerConfig(method='predictor-corrector')
    if config.method != 'predictor-corrector':
        config = SamplerConfig('predictor-corrector', config.corrector_steps, config.snr, config.snap_terminal)
    single = n_paths is None
    count = 1 if single else n_paths
    label = conditioning.as_label() if conditioning is not None else None
    dim = score_model.scenario.dim

    y0 = _backward_start(score_model, stream, count, start, conditioning)
    dW = _brownian(grid, dim, stream, count, start)
    n_corr = int(config.corrector_steps)
    noise = _corrector_noise(grid, dim, stream, n_corr, count, start)
    values = backward_continue(score_model, y0, grid, dW, 0, config, noise, label)
    return _finish(score_model, grid, values, single, config)


def sample(method: str, score_model: ScoreModel, grid: TimeGrid, stream: RandomStream,
           config: Optional[SamplerConfig] = None, n_paths: Optional[int] = None,
           start: int = 0, conditioning: Optional[ConditioningSpec] = None) -> SamplePath:
    """Dispatch to one of the four samplers; all share the per-path stream layout"""
    config = config or SamplerConfig(method=method)
    scenario = score_model.scenario
    obs_model = ObservationModel.linear_bridge(score_model.schedule, scenario.dim)
    if method == 'joint-system':
        return simulate_joint_system(scenario, obs_model, grid, stream, n_paths, start, conditioning).y_path
    if method == 'bridge-with-known-latent':
        count = 1 if n_paths is None else n_paths
        _, v = draw_latents(scenario, stream, count, start, conditioning)
        return simulate_bridge(v[0] if n_paths is None else v, obs_model, grid, stream,
                               n_paths=n_paths, start=start)
    if method == 'backward-score':
        return simulate_backward(score_model, grid, stream, config, n_paths, start, conditioning)
    if method == 'predictor-corrector':
        return predictor_corrector(score_model, grid, stream, config, n_paths, start, conditioning)
    raise ConfigError(f"unknown sampler method '{method}'", problems=[f"sampler.method: {method}"])


def terminal_hitting_report(paths, scenario: LatentScenario) -> HittingReport:
    """
    Nearest rendering (lowest index on ties) and Euclidean distance for
    each terminal state at T - epsilon.
    """
    if not scenario.is_mixture:
        raise ScenarioError("terminal hitting needs a finite-mixture scenario")
    terminal = paths.terminal if isinstance(paths, SamplePath) else np.asarray(paths, dtype=float)
    terminal = np.atleast_2d(terminal)
    distances = np.linalg.norm(terminal[:, None, :] - scenario.renderings, axis=-1)
    nearest = np.argmin(distances, axis=1)
    return HittingReport(components=nearest, distances=distances[np.arange(nearest.size), nearest])


def snap_to_nearest(paths, scenario: LatentScenario) -> np.ndarray:
    """Replace terminal states with their nearest rendering; never applied implicitly"""
    return scenario.renderings[terminal_hitting_report(paths, scenario).components]
