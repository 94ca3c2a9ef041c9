"""
A-posteriori measure machinery: Girsanov log-weights, the exact Bayes filter
for finite latents, the Kushner-Stratonovich integrator, a particle filter,
the Kalman-Bucy oracle and the innovation extractor.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Union

import numpy as np
from scipy.special import logsumexp

from .diffusion_models import LatentScenario, ObservationModel, ScoreModel
from .error_handler import GridError, ScenarioError, SimplexError, WeightCollapseError
from .sde_engine import RandomStream, SamplePath, TimeGrid

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12
DEFAULT_RESAMPLE_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConditioningSpec:
    """Which filtration the posterior is computed under"""
    kind: str = 'measurements-only'
    statistic: Optional[str] = None
    value: Any = None
    component: Any = None

    KINDS = ('measurements-only', 'label', 'latent')

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ScenarioError(f"unknown conditioning kind '{self.kind}'")
        if self.kind == 'label' and self.statistic is None:
            raise ScenarioError("label conditioning needs a statistic name")
        if self.kind == 'latent' and self.component is None:
            raise ScenarioError("latent conditioning needs the latent component")

    @classmethod
    def measurements_only(cls) -> 'ConditioningSpec':
        return cls()

    @classmethod
    def label(cls, statistic: str, value: Any) -> 'ConditioningSpec':
        return cls('label', statistic=statistic, value=value)

    @classmethod
    def full_latent(cls, component) -> 'ConditioningSpec':
        return cls('latent', component=component)

    def as_label(self):
        return (self.statistic, self.value) if self.kind == 'label' else None

    def log_prior(self, scenario: LatentScenario, n_paths: Optional[int] = None) -> np.ndarray:
        """Log prior restricted to the conditioning's support; (K,) or (P, K)"""
        log_w = np.log(scenario.weights)
        if self.kind == 'label':
            log_w = np.where(scenario.support_mask(self.statistic, self.value), log_w, -np.inf)
        elif self.kind == 'latent':
            components = np.asarray(self.component)
            k = np.arange(scenario.n_components)
            return np.where(components[..., None] == k, 0.0, -np.inf)
        if n_paths is not None:
            log_w = np.broadcast_to(log_w, (n_paths, log_w.size))
        return log_w


@dataclass(frozen=True)
class PosteriorState:
    """pi_t as a simplex vector or as a weighted particle ensemble"""
    probs: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None
    log_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.probs is not None:
            probs = np.asarray(self.probs, dtype=float)
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > SIMPLEX_TOLERANCE * max(1, probs.size):
                raise SimplexError("posterior is not a probability vector", probs=probs)
            object.__setattr__(self, 'probs', probs)
        elif self.points is not None:
            log_weights = np.asarray(self.log_weights, dtype=float)
            if not np.all(np.isfinite(log_weights)):
                raise SimplexError("particle log-weights must be finite")
            object.__setattr__(self, 'log_weights', log_weights)
            object.__setattr__(self, 'points', np.atleast_2d(np.asarray(self.points, dtype=float)))
        else:
            raise ScenarioError("posterior state needs probabilities or particles")

    @property
    def representation(self) -> str:
        return 'simplex' if self.probs is not None else 'particles'

    def weights(self) -> np.ndarray:
        if self.probs is not None:
            return self.probs
        return np.exp(self.log_weights - logsumexp(self.log_weights))


@dataclass
class PosteriorTrajectory:
    """Filter output on the path's grid"""
    grid: TimeGrid
    probs: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    h_bar: Optional[np.ndarray] = None
    ess: Optional[np.ndarray] = None
    clip_count: int = 0
    resample_count: int = 0
    final: Optional[PosteriorState] = None

    def state(self, index: int) -> PosteriorState:
        if self.probs is None:
            if index in (-1, len(self.grid) - 1) and self.final is not None:
                return self.final
            raise GridError("particle trajectories keep only the final ensemble")
        return PosteriorState(probs=self.probs[index])


@dataclass(frozen=True)
class InnovationPath:
    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        if self.increments.shape[0] != self.grid.n_steps:
            raise GridError("innovation count must equal the number of grid steps")
        if not np.all(np.isfinite(self.increments)):
            raise GridError("innovation increments must be finite")


def total_variation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.abs(np.asarray(p) - np.asarray(q)), axis=-1)


def girsanov_logweight(path: SamplePath, H_values: np.ndarray) -> np.ndarray:
    """
    log psi_t = sum_{i<t} H_i . dY_i - 1/2 sum_{i<t} |H_i|^2 dt_i

    H_values holds H at the left endpoints, shape (M, N), or with extra
    hypothesis axes before the last one, e.g. (M, K, N). Returns the
    trajectory at every grid point, shape (M + 1,) + H_values.shape[1:-1].
    """
    H_values = np.asarray(H_values, dtype=float)
    dY = path.increments()
    if H_values.shape[0] != dY.shape[0] or H_values.shape[-1] != dY.shape[-1]:
        raise GridError(
            f"H values of shape {H_values.shape} do not match path increments {dY.shape}")
    extra = H_values.ndim - dY.ndim
    dY = dY.reshape(dY.shape[:-1] + (1,) * extra + dY.shape[-1:])
    dt = path.grid.dt.reshape((-1,) + (1,) * (H_values.ndim - 2))
    terms = np.sum(H_values * dY, axis=-1) - 0.5 * np.sum(H_values * H_values, axis=-1) * dt
    log_psi = np.zeros((terms.shape[0] + 1,) + terms.shape[1:])
    np.cumsum(terms, axis=0, out=log_psi[1:])
    return log_psi


def _left_hypotheses(path: SamplePath, scenario: LatentScenario, obs_model: ObservationModel) -> np.ndarray:
    grid = path.grid
    return obs_model.hypotheses_along(path.values[:-1], scenario.renderings, grid.t_points[:-1])


def initial_evidence(scenario: LatentScenario, obs_model: ObservationModel, y0) -> Optional[np.ndarray]:
    """log p(Y_0 | k) under a linear-bridge observation model, None when Y_0 carries no information"""
    if obs_model.variant != 'linear-bridge' or not scenario.is_mixture:
        return None
    return ScoreModel(scenario, obs_model.schedule).initial_log_likelihood(y0)


def exact_discrete_filter(path: SamplePath, scenario: LatentScenario, obs_model: ObservationModel,
                          conditioning: Optional[ConditioningSpec] = None,
                          initial_log_likelihood: Optional[np.ndarray] = None) -> PosteriorTrajectory:
    """
    Bayes filter pi_t(k) ~ prior_k psi_t^(k) for a finite-mixture latent.

    Works on single paths and on ensembles (probs then has shape (M+1, P, K)).
    ``initial_log_likelihood`` adds log p(Y_0 | k) when Y_0 is informative.
    """
    if not scenario.is_mixture:
        raise ScenarioError("the exact discrete filter needs a finite-mixture scenario")
    conditioning = conditioning or ConditioningSpec.measurements_only()
    n_paths = path.n_paths if path.is_ensemble else None
    log_prior = conditioning.log_prior(scenario, n_paths)
    if initial_log_likelihood is not None:
        log_prior = log_prior + initial_log_likelihood

    log_psi = girsanov_logweight(path, _left_hypotheses(path, scenario, obs_model))
    log_post = log_psi + log_prior
    norm = logsumexp(log_post, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        bad = int(np.argmax(~np.isfinite(norm).reshape(norm.shape[0], -1).all(axis=1)))
        raise SimplexError("every hypothesis has zero posterior weight",
                           time=float(path.grid.t_points[bad]))
    return PosteriorTrajectory(grid=path.grid, probs=np.exp(log_post - norm))


def _kushner_update(pi: np.ndarray, H_k: np.ndarray, dY: np.ndarray, dt: float):
    """Batched over leading axes: pi (..., K), H_k (..., K, N), dY (..., N)"""
    h_bar = np.einsum('...k,...kn->...n', pi, H_k)
    gain = np.einsum('...kn,...n->...k', H_k - h_bar[..., None, :], dY - h_bar * dt)
    updated = pi + pi * gain
    clipped = int(np.count_nonzero(updated < 0))
    if clipped:
        updated = np.maximum(updated, 0.0)
    total = updated.sum(axis=-1, keepdims=True)
    if not np.all(total > 0):
        raise SimplexError("Kushner step left no positive mass to renormalize", probs=pi)
    return updated / total, clipped


def kushner_step(pi: np.ndarray, H_k: np.ndarray, dY: np.ndarray, dt: float) -> np.ndarray:
    """
    One Euler step of the Kushner-Stratonovich equation on the simplex.

    pi'_k = pi_k + pi_k (H_k - h_bar) . (dY - h_bar dt), h_bar = sum_j pi_j H_j,
    followed by clipping negatives to 0 and renormalizing.
    """
    pi = np.asarray(pi, dtype=float)
    H_k = np.asarray(H_k, dtype=float)
    if H_k.ndim == 1:
        H_k = H_k[:, None]
    dY = np.atleast_1d(np.asarray(dY, dtype=float))
    return _kushner_update(pi, H_k, dY, dt)[0]


def kushner_filter(path: SamplePath, scenario: LatentScenario, obs_model: ObservationModel,
                   conditioning: Optional[ConditioningSpec] = None,
                   initial_log_likelihood: Optional[np.ndarray] = None) -> PosteriorTrajectory:
    """Iterate kushner_step along a single path, counting clip events"""
    if path.is_ensemble:
        raise GridError("kushner_filter runs on a single path")
    conditioning = conditioning or ConditioningSpec.measurements_only()
    log_prior = conditioning.log_prior(scenario)
    if initial_log_likelihood is not None:
        log_prior = log_prior + initial_log_likelihood
    pi = np.exp(log_prior - logsumexp(log_prior))

    H = _left_hypotheses(path, scenario, obs_model)
    dY = path.increments()
    dt = path.grid.dt
    probs = np.empty((len(path.grid), pi.size))
    probs[0] = pi
    clips = 0
    for i in range(path.grid.n_steps):
        pi, clipped = _kushner_update(pi, H[i], dY[i], dt[i])
        clips += clipped
        probs[i + 1] = pi
    if clips:
        logger.info("Kushner integrator clipped %d negative entries back onto the simplex", clips)
    return PosteriorTrajectory(grid=path.grid, probs=probs, clip_count=clips)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic (low-variance) resampling indices"""
    n = weights.size
    positions = (rng.uniform(0.0, 1.0 / n) + np.arange(n) / n)
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.clip(np.searchsorted(cumulative, positions), 0, n - 1)


def particle_filter(path: SamplePath, scenario: LatentScenario, obs_model: ObservationModel,
                    n_particles: int, stream: RandomStream,
                    conditioning: Optional[ConditioningSpec] = None,
                    resample_threshold: float = DEFAULT_RESAMPLE_THRESHOLD,
                    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
                    ) -> PosteriorTrajectory:
    """
    Weighted-particle approximation of pi_t with Zakai log-weight increments
    H . dY - 1/2 |H|^2 dt and systematic resampling when ESS < threshold * n.

    Particles live in rendering space (V = g(X)). For finite mixtures the
    component of every particle is tracked and ``probs`` holds the particle
    estimate of the component posterior.
    """
    if path.is_ensemble:
        raise GridError("particle_filter runs on a single path")
    if n_particles < 1:
        raise ValueError(f"n_particles must be positive, got {n_particles}")
    conditioning = conditioning or ConditioningSpec.measurements_only()
    rng = stream.generator()

    components = None
    if sampler is not None:
        particles = np.atleast_2d(np.asarray(sampler(rng, n_particles), dtype=float))
        particles = particles.reshape(n_particles, -1)
    elif scenario.is_mixture:
        prior = np.exp(conditioning.log_prior(scenario))
        components = rng.choice(scenario.n_components, size=n_particles, p=prior / prior.sum())
        particles = scenario.renderings[components]
    else:
        if conditioning.kind != 'measurements-only':
            raise ScenarioError("gaussian particle filters support measurement-only conditioning")
        particles = scenario.sample_latent(rng, n_particles)

    grid = path.grid
    dY = path.increments()
    dt = grid.dt
    n_points = len(grid)
    dim = particles.shape[1]
    means = np.empty((n_points, dim))
    variances = np.empty((n_points, dim))
    h_bar = np.empty((grid.n_steps, path.dim))
    ess = np.empty(n_points)
    probs = np.empty((n_points, scenario.n_components)) if components is not None else None
    log_w = np.zeros(n_particles)
    resamples = 0

    def record(index: int, weights: np.ndarray):
        means[index] = weights @ particles
        variances[index] = weights @ (particles - means[index]) ** 2
        ess[index] = 1.0 / np.sum(weights * weights)
        if probs is not None:
            probs[index] = np.bincount(components, weights=weights, minlength=scenario.n_components)

    weights = np.full(n_particles, 1.0 / n_particles)
    record(0, weights)
    for i in range(grid.n_steps):
        y = np.broadcast_to(path.values[i], particles.shape)
        H = obs_model(y, particles, grid.t_points[i])
        h_bar[i] = weights @ H
        log_w = log_w + H @ dY[i] - 0.5 * np.sum(H * H, axis=1) * dt[i]
        log_w = log_w - np.max(log_w)
        weights = np.exp(log_w)
        weights /= weights.sum()
        current_ess = 1.0 / np.sum(weights * weights)
        if n_particles >= 2 and current_ess < 2.0:
            raise WeightCollapseError("particle weights collapsed",
                                      time=float(grid.t_points[i + 1]), ess=float(current_ess))
        record(i + 1, weights)
        if current_ess < resample_threshold * n_particles:
            index = systematic_resample(weights, rng)
            particles = particles[index]
            if components is not None:
                components = components[index]
            log_w = np.zeros(n_particles)
            weights = np.full(n_particles, 1.0 / n_particles)
            resamples += 1

    logger.info("particle filter finished with %d resampling events", resamples)
    return PosteriorTrajectory(grid=grid, probs=probs, means=means, variances=variances,
                               h_bar=h_bar, ess=ess, resample_count=resamples,
                               final=PosteriorState(points=particles, log_weights=log_w))


def kalman_bucy(path: SamplePath, prior_mean, prior_variance):
    """
    Kalman-Bucy filter for dY = X dt + dW with a diagonal Gaussian prior on X.
    Runs on single paths and on ensembles (means then has shape (M+1, P, N)).

    P_t = s0^2 / (1 + s0^2 t) per component; the mean follows
    m_{i+1} = m_i + P_{i+1} (dY_i - m_i dt_i). Evaluating the gain at the
    right endpoint makes the recursion equal to the Bayes posterior given
    the discrete observations.
    """
    grid = path.grid
    dim = path.dim
    prior_mean = np.broadcast_to(np.asarray(prior_mean, dtype=float), (dim,))
    prior_variance = np.broadcast_to(np.asarray(prior_variance, dtype=float), (dim,))
    t = grid.t_points[:, None]
    variances = prior_variance / (1.0 + prior_variance * t)
    dY = path.increments()
    dt = grid.dt
    means = np.empty((len(grid),) + dY.shape[1:])
    means[0] = prior_mean
    for i in range(grid.n_steps):
        means[i + 1] = means[i] + variances[i + 1] * (dY[i] - means[i] * dt[i])
    return means, variances


def extract_innovation(path: SamplePath, posterior: PosteriorTrajectory, obs_model: ObservationModel,
                       scenario: Optional[LatentScenario] = None) -> InnovationPath:
    """dW^R_i = dY_i - <pi_i, H(Y_i, ., t_i)> dt_i"""
    grid = path.grid
    if len(posterior.grid) != len(grid) or not np.array_equal(posterior.grid.t_points, grid.t_points):
        raise GridError("posterior trajectory is not aligned with the path grid")
    if posterior.h_bar is not None:
        h_bar = posterior.h_bar
    elif posterior.probs is not None:
        if scenario is None:
            raise ScenarioError("simplex posteriors need the scenario to evaluate H")
        H = _left_hypotheses(path, scenario, obs_model)
        h_bar = np.einsum('...k,...kn->...n', posterior.probs[:-1], H)
    else:
        raise ScenarioError("posterior trajectory carries neither probabilities nor drift estimates")
    dt = grid.dt.reshape((-1,) + (1,) * (h_bar.ndim - 1))
    return InnovationPath(grid, path.increments() - h_bar * dt)


def innovation_statistics(innovation: InnovationPath) -> Dict[str, float]:
    """
    Pooled checks that innovation increments behave like Brownian increments:
    mean and lag-1 autocorrelation of dW / sqrt(dt) with their standard
    errors, and the ratio of the increment variance to dt.
    """
    dt = innovation.grid.dt.reshape((-1,) + (1,) * (innovation.increments.ndim - 1))
    z = innovation.increments / np.sqrt(dt)
    pairs = z[1:] * z[:-1]
    return {
        'mean': float(z.mean()),
        'mean_stderr': float(1.0 / np.sqrt(z.size)),
        'variance_ratio': float(np.mean(z * z)),
        'lag1': float(pairs.mean()),
        'lag1_stderr': float(1.0 / np.sqrt(pairs.size)),
    }


def posterior_project(pi: PosteriorState, statistic: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]):
    """<pi, phi>: the posterior average of a statistic"""
    weights = pi.weights()
    if pi.representation == 'simplex':
        values = np.asarray(statistic, dtype=float)
    else:
        values = np.asarray(statistic(pi.points) if callable(statistic) else statistic, dtype=float)
    if values.shape[0] != weights.size:
        raise ScenarioError(f"statistic has {values.shape[0]} entries for {weights.size} support points")
    return np.tensordot(weights, values, axes=(0, 0))
