"""
Model zoo: latent scenarios, bridge schedules, observation functions and the
closed-form posterior means and scores of mixture and Gaussian latents.

Time conventions: ``t`` is generative time in [0, T); the forward (noising)
process runs in reversed time u = T - t, so Y_t given V = v is Gaussian with
mean exp(-alpha u) v and per-component variance (1 - exp(-2 alpha u)) / (2 alpha).
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .error_handler import GridError, ScenarioError

# Below this value of alpha * (T - t) the alpha -> 0 formulas are used.
SMALL_ALPHA_U = 1e-6
# Above this argument log(sinh(x)) is evaluated as x - log(2).
LOG_SINH_SWITCH = 30.0
QUADRATURE_PANELS = 10_000

COMPONENT = 'component'
KINDS = ('finite-mixture', 'gaussian')

Label = Tuple[str, Any]


def _log_sinh(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    safe = np.minimum(x, LOG_SINH_SWITCH)
    return np.where(x > LOG_SINH_SWITCH, x - np.log(2.0), np.log(np.sinh(safe)))


@dataclass(frozen=True)
class Schedule:
    """Bridge coefficients m_t = alpha / sinh(alpha (T - t)) and f_t = d log m_t / dt"""
    alpha: float
    T: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ScenarioError(f"alpha must be non-negative, got {self.alpha}")
        if self.T <= 0:
            raise ScenarioError(f"horizon T must be positive, got {self.T}")

    def _remaining(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.T):
            raise GridError(f"schedule evaluated at t >= T = {self.T}")
        if np.any(t < 0):
            raise GridError("schedule evaluated at negative time")
        return self.T - t

    def log_m(self, t) -> np.ndarray:
        u = self._remaining(t)
        x = self.alpha * u
        small = x < SMALL_ALPHA_U
        with np.errstate(divide='ignore'):
            regular = np.log(self.alpha) - _log_sinh(np.where(small, 1.0, x))
        return np.where(small, -np.log(u), regular)

    def m(self, t) -> np.ndarray:
        return np.exp(self.log_m(t))

    def f(self, t) -> np.ndarray:
        u = self._remaining(t)
        x = self.alpha * u
        small = x < SMALL_ALPHA_U
        regular = self.alpha / np.tanh(np.where(small, 1.0, x))
        return np.where(small, 1.0 / u, regular)

    def scale(self, u) -> np.ndarray:
        """exp(-alpha u): forward mean factor after reversed time u"""
        return np.exp(-self.alpha * np.asarray(u, dtype=float))

    def variance(self, u) -> np.ndarray:
        """(1 - exp(-2 alpha u)) / (2 alpha), or u when alpha = 0"""
        u = np.asarray(u, dtype=float)
        if self.alpha == 0:
            return u.copy()
        return -np.expm1(-2.0 * self.alpha * u) / (2.0 * self.alpha)

    def sinh_ratio(self, x, y) -> np.ndarray:
        """sinh(alpha x) / sinh(alpha y), with the alpha -> 0 limit x / y"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.alpha * np.max(y) < SMALL_ALPHA_U:
            return x / y
        a = self.alpha
        return np.exp(a * (x - y)) * np.expm1(-2 * a * x) / np.expm1(-2 * a * y)


def schedule_m(t, sched: Schedule):
    """m_t, evaluated in the log domain"""
    value = sched.m(t)
    return float(value) if np.ndim(value) == 0 else value


def schedule_f(t, sched: Schedule):
    """f_t = d log m_t / dt"""
    value = sched.f(t)
    return float(value) if np.ndim(value) == 0 else value


def bridge_drift(y, v, t, sched: Schedule) -> np.ndarray:
    """H(y, x, t) = m_t v - f_t y of the linear-bridge observation model"""
    return sched.m(t) * np.asarray(v, dtype=float) - sched.f(t) * np.asarray(y, dtype=float)


def forward_marginal(v, t, sched: Schedule) -> Tuple[np.ndarray, float]:
    """Mean and per-component std of the noising process after reversed time t"""
    if t < 0:
        raise GridError(f"reversed time must be non-negative, got {t}")
    mean = sched.scale(t) * np.asarray(v, dtype=float)
    return mean, float(np.sqrt(sched.variance(t)))


@dataclass(frozen=True)
class LatentScenario:
    """
    Latent abstraction X with prior, rendering V = g(X) and label statistics.

    For ``finite-mixture`` scenarios X is a component index, ``renderings[k]``
    is g(k) and every attribute maps component indices to labels. For
    ``gaussian`` scenarios V = X ~ N(mean, variance I).
    """
    kind: str
    weights: Optional[np.ndarray] = None
    renderings: Optional[np.ndarray] = None
    attributes: Dict[str, Tuple[Any, ...]] = field(default_factory=dict)
    mean: Optional[np.ndarray] = None
    variance: float = 1.0
    name: str = 'custom'

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown scenario kind '{self.kind}', expected one of {', '.join(KINDS)}")
        if self.kind == 'finite-mixture':
            self._validate_mixture()
        else:
            self._validate_gaussian()

    def _validate_mixture(self):
        if self.weights is None or self.renderings is None:
            raise ScenarioError("finite-mixture scenarios need weights and renderings")
        weights = np.asarray(self.weights, dtype=float).ravel()
        renderings = np.asarray(self.renderings, dtype=float)
        if renderings.ndim == 1:
            renderings = renderings[:, None]
        if renderings.shape[0] != weights.size:
            raise ScenarioError(
                f"{weights.size} weights but {renderings.shape[0]} renderings")
        if np.any(weights <= 0):
            raise ScenarioError("component weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ScenarioError(f"component weights must sum to 1, got {weights.sum()}")
        if not np.all(np.isfinite(renderings)):
            raise ScenarioError("renderings must be finite")
        for i in range(renderings.shape[0]):
            for j in range(i):
                if np.array_equal(renderings[i], renderings[j]):
                    raise ScenarioError(f"renderings of components {j} and {i} coincide")
        attributes = {}
        for name, labels in self.attributes.items():
            labels = tuple(labels)
            if len(labels) != weights.size:
                raise ScenarioError(
                    f"attribute '{name}' has {len(labels)} labels for {weights.size} components")
            attributes[name] = labels
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'renderings', renderings)
        object.__setattr__(self, 'attributes', attributes)

    def _validate_gaussian(self):
        mean = np.atleast_1d(np.asarray(0.0 if self.mean is None else self.mean, dtype=float))
        if self.variance < 0:
            raise ScenarioError(f"variance must be non-negative, got {self.variance}")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'variance', float(self.variance))

    @property
    def is_mixture(self) -> bool:
        return self.kind == 'finite-mixture'

    @property
    def dim(self) -> int:
        return self.renderings.shape[1] if self.is_mixture else self.mean.size

    @property
    def n_components(self) -> int:
        if not self.is_mixture:
            raise ScenarioError("gaussian scenarios have no components")
        return self.weights.size

    def statistic(self, name: str) -> Tuple[Any, ...]:
        """Labels of statistic ``name`` per component; 'component' is always defined"""
        if name == COMPONENT:
            return tuple(range(self.n_components))
        if name not in self.attributes:
            raise ScenarioError(f"unknown statistic '{name}'")
        return self.attributes[name]

    def statistic_names(self) -> Tuple[str, ...]:
        return (COMPONENT,) + tuple(self.attributes)

    def labels(self, name: str) -> Tuple[Any, ...]:
        """Distinct labels of a statistic, in first-appearance order"""
        return tuple(dict.fromkeys(self.statistic(name)))

    def support_mask(self, name: str, value: Any) -> np.ndarray:
        mask = np.array([label == value for label in self.statistic(name)], dtype=bool)
        if not mask.any():
            raise ScenarioError(f"label {value!r} of statistic '{name}' has empty support")
        return mask

    def label_prior(self, name: str) -> Dict[Any, float]:
        prior: Dict[Any, float] = {}
        for weight, label in zip(self.weights, self.statistic(name)):
            prior[label] = prior.get(label, 0.0) + float(weight)
        return prior

    def entropy(self, name: str) -> float:
        """Entropy of the statistic under the prior, in nats"""
        p = np.array(list(self.label_prior(name).values()))
        return float(-np.sum(p * np.log(p)))

    def sample_components(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(self.n_components, size=n, p=self.weights)

    def sample_latent(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n renderings V from the prior, shape (n, N)"""
        if self.is_mixture:
            return self.renderings[self.sample_components(rng, n)]
        return self.mean + np.sqrt(self.variance) * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class ObservationModel:
    """
    Observation function H(y, x, t) of the measurement SDE dY = H dt + dW.

    ``linear-bridge``: m_t g(x) - f_t y; ``static``: g(x); ``custom``: a
    user callback ``callback(y, v, t)`` taking the rendering v = g(x).
    """
    variant: str
    dim: int
    schedule: Optional[Schedule] = None
    callback: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        if self.variant == 'linear-bridge' and self.schedule is None:
            raise ScenarioError("linear-bridge observation model needs a schedule")
        if self.variant == 'custom' and self.callback is None:
            raise ScenarioError("custom observation model needs a callback")
        if self.variant not in ('linear-bridge', 'static', 'custom'):
            raise ScenarioError(f"unknown observation variant '{self.variant}'")

    @classmethod
    def linear_bridge(cls, schedule: Schedule, dim: int) -> 'ObservationModel':
        return cls('linear-bridge', dim, schedule=schedule)

    @classmethod
    def static(cls, dim: int) -> 'ObservationModel':
        return cls('static', dim)

    def __call__(self, y, v, t: float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.variant == 'linear-bridge':
            return bridge_drift(y, v, t, self.schedule)
        if self.variant == 'static':
            return np.broadcast_to(v, np.broadcast_shapes(y.shape, v.shape)).copy()
        return np.asarray(self.callback(y, v, t), dtype=float)

    def hypotheses(self, y, renderings: np.ndarray, t: float) -> np.ndarray:
        """H for every hypothesis: y (..., N), renderings (K, N) -> (..., K, N)"""
        y = np.asarray(y, dtype=float)
        return self(y[..., None, :], renderings, t)

    def hypotheses_along(self, values: np.ndarray, renderings: np.ndarray, times: np.ndarray) -> np.ndarray:
        """
        H at left endpoints for every hypothesis along a path.

        values (M, N) or (M, P, N) at times (M,) -> (M, K, N) or (M, P, K, N)
        """
        values = np.asarray(values, dtype=float)
        times = np.asarray(times, dtype=float)
        y = values[..., None, :]
        if self.variant == 'linear-bridge':
            shape = (times.size,) + (1,) * values.ndim
            m = self.schedule.m(times).reshape(shape)
            f = self.schedule.f(times).reshape(shape)
            return m * renderings - f * y
        if self.variant == 'static':
            return np.broadcast_to(renderings, y.shape[:-2] + renderings.shape).copy()
        return np.stack([self(y[i], renderings, float(t)) for i, t in enumerate(times)])


@dataclass(frozen=True)
class ScoreModel:
    """Exact posterior means and scores of a scenario under a linear schedule"""
    scenario: LatentScenario
    schedule: Schedule

    def _moments(self, t: float) -> Tuple[float, float]:
        u = self.schedule.T - float(t)
        if u <= 0:
            raise GridError(f"score model evaluated at t >= T = {self.schedule.T}")
        return float(self.schedule.scale(u)), float(self.schedule.variance(u))

    def _mask(self, label: Optional[Label]) -> Optional[np.ndarray]:
        if label is None:
            return None
        if not self.scenario.is_mixture:
            raise ScenarioError("label conditioning needs a finite-mixture scenario")
        return self.scenario.support_mask(*label)

    def _component_loglik(self, y, a: float, s2: float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        diff = y[..., None, :] - a * self.scenario.renderings
        n = self.scenario.dim
        return -0.5 * np.sum(diff * diff, axis=-1) / s2 - 0.5 * n * np.log(2 * np.pi * s2)

    def _joint_logp(self, y, t: float, label: Optional[Label]) -> np.ndarray:
        a, s2 = self._moments(t)
        logp = self._component_loglik(y, a, s2) + np.log(self.scenario.weights)
        mask = self._mask(label)
        if mask is not None:
            logp = np.where(mask, logp, -np.inf)
        return logp

    def log_responsibilities(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        """log r_k(y, t), normalized with max subtraction; shape (..., K)"""
        logp = self._joint_logp(y, t, label)
        return logp - logsumexp(logp, axis=-1, keepdims=True)

    def responsibilities(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        return np.exp(self.log_responsibilities(y, t, label))

    def initial_log_likelihood(self, y0) -> np.ndarray:
        """log p(Y_0 = y0 | component k), shape (..., K)"""
        a, s2 = self._moments(0.0)
        return self._component_loglik(y0, a, s2)

    def posterior_mean(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        """E[V | Y_t = y] (restricted to the label's components when given)"""
        y = np.asarray(y, dtype=float)
        if self.scenario.is_mixture:
            return self.responsibilities(y, t, label) @ self.scenario.renderings
        self._mask(label)
        a, s2 = self._moments(t)
        sc = self.scenario
        gain = sc.variance * a / (a * a * sc.variance + s2)
        return sc.mean + gain * (y - a * sc.mean)

    def score(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        """grad_y log p(y, t), conditional on the label when given"""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ScenarioError("score evaluated at a non-finite state")
        a, s2 = self._moments(t)
        return (a * self.posterior_mean(y, t, label) - y) / s2

    def log_density(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        """log p(y, t) (or log p(y, t | label))"""
        y = np.asarray(y, dtype=float)
        if self.scenario.is_mixture:
            logp = self._joint_logp(y, t, label)
            total = logsumexp(logp, axis=-1)
            if label is not None:
                prior = self.scenario.label_prior(label[0])[label[1]]
                total = total - np.log(prior)
            return total
        a, s2 = self._moments(t)
        sc = self.scenario
        var = a * a * sc.variance + s2
        diff = y - a * sc.mean
        return -0.5 * np.sum(diff * diff, axis=-1) / var - 0.5 * sc.dim * np.log(2 * np.pi * var)

    def songsde_drift(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        """alpha y + 2 alpha (e^{-alpha u} E[V|y] - y) / (1 - e^{-2 alpha u}), u = T - t"""
        y = np.asarray(y, dtype=float)
        alpha = self.schedule.alpha
        u = self.schedule.T - float(t)
        mean = self.posterior_mean(y, t, label)
        if alpha == 0:
            return (mean - y) / u
        return alpha * y + 2 * alpha * (np.exp(-alpha * u) * mean - y) / -np.expm1(-2 * alpha * u)

    def bridge_form_drift(self, y, t: float, label: Optional[Label] = None) -> np.ndarray:
        """m_t E[V|y] - f_t y"""
        y = np.asarray(y, dtype=float)
        return bridge_drift(y, self.posterior_mean(y, t, label), t, self.schedule)


def posterior_mean(y, t: float, score_model: ScoreModel, label: Optional[Label] = None) -> np.ndarray:
    return score_model.posterior_mean(y, t, label)


def score(y, t: float, score_model: ScoreModel, conditioning: Optional[Label] = None) -> np.ndarray:
    return score_model.score(y, t, conditioning)


def analytic_bridge_moments(y0, v, t: float, sched: Schedule,
                            panels: int = QUADRATURE_PANELS) -> Tuple[np.ndarray, float]:
    """
    Mean and per-component variance of the pinned bridge started at y0.

    mean = y0 m_0/m_t + v m_0/m_{T-t}; the coefficient ratios are evaluated
    as sinh ratios so that t = 0 (where m_T is infinite) is well defined.
    variance = m_t^-2 int_0^t m_s^2 ds by composite midpoint quadrature.
    """
    if t < 0 or t >= sched.T:
        raise GridError(f"bridge moments need 0 <= t < T, got {t}")
    T = sched.T
    mean = (np.asarray(y0, dtype=float) * sched.sinh_ratio(T - t, T)
            + np.asarray(v, dtype=float) * sched.sinh_ratio(t, T))
    if t == 0:
        return mean, 0.0
    h = t / panels
    mids = (np.arange(panels) + 0.5) * h
    log_m = sched.log_m(mids)
    integral = np.sum(np.exp(2 * (log_m - sched.log_m(t)))) * h
    return mean, float(integral)


def make_mixture(weights: Sequence[float], renderings, attributes: Optional[Dict[str, Sequence[Any]]] = None,
                 name: str = 'custom') -> LatentScenario:
    return LatentScenario('finite-mixture', weights=np.asarray(weights, dtype=float),
                          renderings=np.asarray(renderings, dtype=float),
                          attributes=dict(attributes or {}), name=name)


def make_gaussian(mean, variance: float, name: str = 'gaussian') -> LatentScenario:
    return LatentScenario('gaussian', mean=np.asarray(mean, dtype=float), variance=variance, name=name)
