"""
Mutual-information estimators: the filtration-gap formula, its
linear-bridge specialization, the two score-gap forms and brute-force
quadrature oracles, plus the sufficient-statistic / data-processing battery.

All values are in nats. Curves are cumulative left-point sums on the
simulation grid; the I(Y_0; phi) term is reported separately.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .diffusion_models import COMPONENT, LatentScenario, ObservationModel, Schedule, ScoreModel
from .error_handler import GridError, QuantizationError, ScenarioError
from .filtering import exact_discrete_filter, initial_evidence, kalman_bucy
from .generative import simulate_with_latent
from .sde_engine import RandomStream, SamplePath, TimeGrid

logger = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-4
QUADRATURE_SPAN = 12.0
DEFAULT_CHUNK = 250
DEFAULT_BINS = 20
DEFAULT_BOOTSTRAP = 200
MIN_CELL_OCCUPANCY = 5.0
CUTOFF_WARNING_FRACTION = 0.1
BOOTSTRAP_STREAM = 4

I0_METHODS = ('quadrature', 'closed-form', 'exact', 'omitted')


@dataclass
class MIEstimate:
    """
    Cumulative MI estimate on a grid.

    ``curve`` is the path term E[1/2 sum |delta_i|^2 dt_i] up to each grid
    time and ``integrand`` the per-time E[1/2 |delta|^2]. ``i0`` is
    I(Y_0; phi) when ``i0_method`` is not 'omitted'.
    """
    times: np.ndarray
    integrand: np.ndarray
    curve: np.ndarray
    curve_stderr: np.ndarray
    n_paths: int
    i0: Optional[float] = None
    i0_method: str = 'omitted'
    statistic: Optional[str] = None

    @property
    def value(self) -> float:
        return float(self.curve[-1])

    @property
    def std_error(self) -> float:
        return float(self.curve_stderr[-1])

    @property
    def total_curve(self) -> np.ndarray:
        """I(Y_{0:t}; phi) including I(Y_0; phi) when it is known"""
        return self.curve + (self.i0 if self.i0 is not None else 0.0)

    def at(self, t: float) -> float:
        index = int(np.argmin(np.abs(self.times - t)))
        return float(self.total_curve[index])

    def stderr_at(self, t: float) -> float:
        return float(self.curve_stderr[int(np.argmin(np.abs(self.times - t)))])

    def rows(self) -> List[tuple]:
        """(t, integrand, cumulative_mi, stderr) per grid point"""
        total = self.total_curve
        return [(float(t), float(g), float(c), float(s))
                for t, g, c, s in zip(self.times, self.integrand, total, self.curve_stderr)]


@dataclass
class _Accumulator:
    integrand_sum: np.ndarray
    curve_sum: np.ndarray
    curve_sumsq: np.ndarray
    count: int

    @classmethod
    def from_paths(cls, integrand: np.ndarray, dt: np.ndarray) -> '_Accumulator':
        """integrand: (M + 1, P) per-path values of 1/2 |delta|^2"""
        cumulative = np.zeros_like(integrand)
        np.cumsum(integrand[:-1] * dt[:, None], axis=0, out=cumulative[1:])
        return cls(integrand.sum(axis=1), cumulative.sum(axis=1), (cumulative ** 2).sum(axis=1),
                   integrand.shape[1])

    def merge(self, other: '_Accumulator') -> '_Accumulator':
        return _Accumulator(self.integrand_sum + other.integrand_sum, self.curve_sum + other.curve_sum,
                            self.curve_sumsq + other.curve_sumsq, self.count + other.count)

    def estimate(self, grid: TimeGrid, **extra) -> MIEstimate:
        n = self.count
        mean = self.curve_sum / n
        var = np.maximum(self.curve_sumsq / n - mean ** 2, 0.0)
        stderr = np.sqrt(var / max(n - 1, 1))
        return MIEstimate(times=grid.t_points.copy(), integrand=self.integrand_sum / n, curve=mean,
                          curve_stderr=stderr, n_paths=n, **extra)


def _chunks(n_paths: int, chunk_size: int):
    return [(start, min(chunk_size, n_paths - start)) for start in range(0, n_paths, chunk_size)]


def _reduce(work: Callable[[int, int], _Accumulator], n_paths: int, chunk_size: int,
            threads: int) -> _Accumulator:
    """Run work(start, count) over path chunks and merge in path-index order"""
    if n_paths < 1:
        raise ValueError(f"n_paths must be positive, got {n_paths}")
    chunks = _chunks(n_paths, chunk_size)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(lambda chunk: work(*chunk), chunks))
    else:
        parts = [work(*chunk) for chunk in chunks]
    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    return total


def _label_codes(scenario: LatentScenario, statistic: Optional[str]) -> np.ndarray:
    """Integer code of phi per component; phi = V when statistic is None"""
    name = COMPONENT if statistic is None else statistic
    labels = scenario.statistic(name)
    distinct = scenario.labels(name)
    return np.array([distinct.index(label) for label in labels])


def _filter_pair(scenario: LatentScenario, obs_model: ObservationModel, path: SamplePath,
                 components: np.ndarray, codes: np.ndarray):
    """Measurement-only and measurement-plus-label posteriors on an ensemble"""
    initial = initial_evidence(scenario, obs_model, path.values[0])
    base = 0.0 if initial is None else initial
    measurement = exact_discrete_filter(path, scenario, obs_model, initial_log_likelihood=initial)
    with np.errstate(divide='ignore'):
        label_mask = np.log((codes[None, :] == codes[components][:, None]).astype(float))
    enlarged = exact_discrete_filter(path, scenario, obs_model, initial_log_likelihood=base + label_mask)
    return measurement.probs, enlarged.probs


def _hypotheses(scenario: LatentScenario, obs_model: ObservationModel, path: SamplePath) -> np.ndarray:
    return obs_model.hypotheses_along(path.values, scenario.renderings, path.grid.t_points)


def _i0_term(scenario: LatentScenario, obs_model: ObservationModel, statistic: Optional[str]):
    if obs_model.variant != 'linear-bridge':
        return 0.0, 'exact'
    if scenario.dim > 2:
        return None, 'omitted'
    sched = obs_model.schedule
    a = float(sched.scale(sched.T))
    s2 = float(sched.variance(sched.T))
    return channel_mi(scenario, a, s2, statistic), 'quadrature'


def mi_general(scenario: LatentScenario, obs_model: ObservationModel, grid: TimeGrid,
               statistic: Optional[str], n_paths: int, stream: RandomStream,
               threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> MIEstimate:
    """
    I(Y_{0:t}; phi) from the gap between the measurement-only posterior drift
    and the posterior drift under the filtration enlarged with phi:
    1/2 E sum |<pi^Y_i, H> - <pi^R_i, H>|^2 dt_i along paths simulated with
    the latent known.

    Finite mixtures use two exact discrete filters per path. A gaussian
    latent under static observation uses Kalman-Bucy for the
    measurement-only drift; the enlarged filtration then knows X (phi = V).
    """
    if not scenario.is_mixture:
        return _mi_gaussian_static(scenario, obs_model, grid, statistic, n_paths, stream, threads, chunk_size)
    codes = _label_codes(scenario, statistic)

    def work(start: int, count: int) -> _Accumulator:
        components, _, path = simulate_with_latent(scenario, obs_model, grid, stream, count, start)
        probs_y, probs_r = _filter_pair(scenario, obs_model, path, components, codes)
        H = _hypotheses(scenario, obs_model, path)
        gap = np.einsum('ipk,ipkn->ipn', probs_y - probs_r, H)
        return _Accumulator.from_paths(0.5 * np.sum(gap * gap, axis=-1), grid.dt)

    i0, method = _i0_term(scenario, obs_model, statistic)
    if method == 'omitted':
        logger.warning("I(Y_0; %s) omitted for a %d-dimensional scenario; the curve is a lower bound",
                       statistic or 'V', scenario.dim)
    total = _reduce(work, n_paths, chunk_size, threads)
    return total.estimate(grid, i0=i0, i0_method=method, statistic=statistic)


def _mi_gaussian_static(scenario, obs_model, grid, statistic, n_paths, stream, threads, chunk_size):
    if obs_model.variant != 'static':
        raise ScenarioError("gaussian latents are supported under static observation only")
    if statistic not in (None, 'rendering'):
        raise ScenarioError("gaussian latents support phi = V only")

    def work(start: int, count: int) -> _Accumulator:
        _, v, path = simulate_with_latent(scenario, obs_model, grid, stream, count, start)
        means, _ = kalman_bucy(path, scenario.mean, scenario.variance)
        gap = means - v[None, :, :]
        return _Accumulator.from_paths(0.5 * np.sum(gap * gap, axis=-1), grid.dt)

    total = _reduce(work, n_paths, chunk_size, threads)
    return total.estimate(grid, i0=0.0, i0_method='exact', statistic=statistic)


def mi_linear(score_model: ScoreModel, grid: TimeGrid, statistic: Optional[str], n_paths: int,
              stream: RandomStream, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> MIEstimate:
    """
    Linear-bridge form: 1/2 E sum m(s_i)^2 |E[V | Y_i] - E[V | Y_i, phi]|^2 dt_i
    along bridge paths with the latent known. Uses the same per-path streams
    as mi_general, so both estimators see common random numbers.
    """
    scenario = score_model.scenario
    sched = score_model.schedule
    obs_model = ObservationModel.linear_bridge(sched, scenario.dim)
    m2 = sched.m(grid.t_points) ** 2
    codes = _label_codes(scenario, statistic) if scenario.is_mixture else None
    if not scenario.is_mixture and statistic not in (None, 'rendering'):
        raise ScenarioError("gaussian latents support phi = V only")

    def work(start: int, count: int) -> _Accumulator:
        components, v, path = simulate_with_latent(scenario, obs_model, grid, stream, count, start)
        integrand = np.empty((len(grid), count))
        for i, t in enumerate(grid.t_points):
            y = path.values[i]
            if scenario.is_mixture:
                log_r = score_model.log_responsibilities(y, t)
                r = np.exp(log_r)
                same = codes[None, :] == codes[components][:, None]
                r_label = np.where(same, r, 0.0)
                r_label /= r_label.sum(axis=1, keepdims=True)
                gap = (r - r_label) @ scenario.renderings
            else:
                gap = score_model.posterior_mean(y, t) - v
            integrand[i] = 0.5 * m2[i] * np.sum(gap * gap, axis=-1)
        return _Accumulator.from_paths(integrand, grid.dt)

    i0, method = (_i0_term(scenario, obs_model, statistic) if scenario.is_mixture
                  else (gaussian_channel_mi(scenario, sched, sched.T), 'closed-form'))
    total = _reduce(work, n_paths, chunk_size, threads)
    return total.estimate(grid, i0=i0, i0_method=method, statistic=statistic)


SCORE_GAP_FORMS = ('marginal-vs-conditional', 'bridge-score')


def score_gap_integrands(score_model: ScoreModel, y: np.ndarray, v: np.ndarray, t: float):
    """
    Both score-gap vectors at one time, per path.

    marginal-vs-conditional: grad log p(y_t) - grad log p(y_t | y_T = v)
    bridge-score:            grad_{y_t} log p(y_T = v | y_t)
    The two are negatives of each other.
    """
    a, s2 = score_model._moments(t)
    conditional_score = (a * v - y) / s2
    marginal = score_model.score(y, t) - conditional_score
    bridge = a * (v - score_model.posterior_mean(y, t)) / s2
    return marginal, bridge


def mi_score_gap(score_model: ScoreModel, grid: TimeGrid, n_paths: int, stream: RandomStream,
                 form: str = 'marginal-vs-conditional', threads: int = 1,
                 chunk_size: int = DEFAULT_CHUNK) -> MIEstimate:
    """I(Y_{0:t}; V) as 1/2 E int |score gap|^2 along bridge paths with V known"""
    if form not in SCORE_GAP_FORMS:
        raise ScenarioError(f"unknown score-gap form '{form}', expected one of {', '.join(SCORE_GAP_FORMS)}")
    scenario = score_model.scenario
    sched = score_model.schedule
    obs_model = ObservationModel.linear_bridge(sched, scenario.dim)
    continuous = not scenario.is_mixture and scenario.variance > 0
    if continuous and grid.epsilon < CUTOFF_WARNING_FRACTION * sched.T:
        warnings.warn(
            f"score-gap integrand grows like 1/(T - t) for a continuous latent; "
            f"cutoff epsilon = {grid.epsilon} is close to T = {sched.T}", RuntimeWarning)

    def work(start: int, count: int) -> _Accumulator:
        _, v, path = simulate_with_latent(scenario, obs_model, grid, stream, count, start)
        integrand = np.empty((len(grid), count))
        for i, t in enumerate(grid.t_points):
            marginal, bridge = score_gap_integrands(score_model, path.values[i], v, t)
            gap = marginal if form == 'marginal-vs-conditional' else bridge
            integrand[i] = 0.5 * np.sum(gap * gap, axis=-1)
        return _Accumulator.from_paths(integrand, grid.dt)

    if scenario.is_mixture:
        i0, method = _i0_term(scenario, obs_model, None)
    else:
        i0, method = gaussian_channel_mi(scenario, sched, sched.T), 'closed-form'
    total = _reduce(work, n_paths, chunk_size, threads)
    return total.estimate(grid, i0=i0, i0_method=method, statistic=None)


def gaussian_channel_mi(scenario: LatentScenario, sched: Schedule, u: float) -> float:
    """I(Y; V) for V ~ N(mean, s0^2 I) and Y = exp(-alpha u) V + noise after reversed time u"""
    a = float(sched.scale(u))
    s2 = float(sched.variance(u))
    return 0.5 * scenario.dim * float(np.log1p(a * a * scenario.variance / s2))


def _label_log_densities(points: np.ndarray, scenario: LatentScenario, codes: np.ndarray,
                         a: float, s2: float):
    """log p(y | label) per label and log p(y); points (n, N)"""
    diff = points[:, None, :] - a * scenario.renderings
    log_comp = (-0.5 * np.sum(diff * diff, axis=-1) / s2
                - 0.5 * scenario.dim * np.log(2 * np.pi * s2) + np.log(scenario.weights))
    n_labels = codes.max() + 1
    label_prior = np.bincount(codes, weights=scenario.weights, minlength=n_labels)
    log_label = np.stack([logsumexp(np.where(codes == l, log_comp, -np.inf), axis=1)
                          for l in range(n_labels)], axis=1) - np.log(label_prior)
    return log_label, logsumexp(log_comp, axis=1), label_prior


def channel_mi(scenario: LatentScenario, a: float, s2: float, statistic: Optional[str] = None) -> float:
    """
    I(Y; phi) for Y | k ~ N(a v_k, s2 I) by adaptive quadrature, N <= 2.

    sum_l P(l) int p(y | l) log(p(y | l) / p(y)) dy, absolute tolerance 1e-4.
    """
    if s2 <= 0:
        raise GridError("channel noise variance must be positive")
    codes = _label_codes(scenario, statistic)
    means = a * scenario.renderings
    span = QUADRATURE_SPAN * np.sqrt(s2)
    lo = means.min(axis=0) - span
    hi = means.max(axis=0) + span

    def density_gap(*coords) -> float:
        point = np.array(coords, dtype=float)[None, :]
        log_label, log_total, prior = _label_log_densities(point, scenario, codes, a, s2)
        return float(np.sum(prior * np.exp(log_label[0]) * (log_label[0] - log_total[0])))

    if scenario.dim == 1:
        breaks = np.unique(means[:, 0])
        value, _ = integrate.quad(density_gap, lo[0], hi[0], points=breaks if breaks.size > 1 else None,
                                  epsabs=QUADRATURE_TOLERANCE, limit=400)
    elif scenario.dim == 2:
        value, _ = integrate.dblquad(lambda y2, y1: density_gap(y1, y2), lo[0], hi[0], lo[1], hi[1],
                                     epsabs=QUADRATURE_TOLERANCE)
    else:
        raise ScenarioError(f"quadrature needs a 1- or 2-dimensional scenario, got N = {scenario.dim}")
    return max(float(value), 0.0)


def mi_quadrature_oracle(scenario: LatentScenario, u: float, alpha: float = 0.0,
                         statistic: Optional[str] = None) -> float:
    """I(Y_u; phi) for a 1-D finite mixture after reversed time u of the noising process"""
    if not scenario.is_mixture:
        raise ScenarioError("the quadrature oracle needs a finite-mixture scenario")
    if scenario.dim != 1:
        raise ScenarioError(f"the quadrature oracle is 1-D only, got N = {scenario.dim}")
    if u <= 0:
        raise GridError(f"reversed time must be positive, got {u}")
    sched = Schedule(alpha, max(float(u), 1.0))
    return channel_mi(scenario, float(sched.scale(u)), float(sched.variance(u)), statistic)


@dataclass(frozen=True)
class DPIRow:
    t: float
    i_full: float
    i_full_se: float
    i_pi: float
    i_pi_se: float
    i_projection: float
    i_projection_se: float

    @property
    def sufficiency_margin(self) -> float:
        return self.i_full - self.i_pi

    @property
    def dpi_margin(self) -> float:
        return self.i_full - self.i_projection

    def sufficiency_holds(self, sigmas: float = 3.0) -> bool:
        return abs(self.sufficiency_margin) <= sigmas * np.hypot(self.i_full_se, self.i_pi_se)

    def dpi_holds(self, sigmas: float = 3.0) -> bool:
        return -self.dpi_margin <= sigmas * np.hypot(self.i_full_se, self.i_projection_se)


@dataclass(frozen=True)
class DPIReport:
    rows: Sequence[DPIRow]
    i0_method: str
    bins: int


def _quantize(values: np.ndarray, bins: int) -> np.ndarray:
    """Adaptive (quantile) bins per coordinate, combined into one cell code"""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    codes = np.zeros(values.shape[0], dtype=np.int64)
    for column in values.T:
        edges = np.unique(np.quantile(column, np.linspace(0, 1, bins + 1)[1:-1]))
        codes = codes * (bins + 1) + np.searchsorted(edges, column, side='right')
    return codes


def plugin_mi(cells: np.ndarray, labels: np.ndarray) -> float:
    """Plug-in discrete MI with the Miller-Madow bias correction"""
    n = cells.size
    _, cell_index = np.unique(cells, return_inverse=True)
    _, label_index = np.unique(labels, return_inverse=True)
    joint = np.zeros((cell_index.max() + 1, label_index.max() + 1))
    np.add.at(joint, (cell_index, label_index), 1.0)
    p = joint / n
    pc = p.sum(axis=1, keepdims=True)
    pl = p.sum(axis=0, keepdims=True)
    nz = p > 0
    raw = float(np.sum(p[nz] * np.log(p[nz] / (pc @ pl)[nz])))
    correction = (np.count_nonzero(nz) - np.count_nonzero(pc) - np.count_nonzero(pl) + 1) / (2.0 * n)
    return raw - correction


def _occupancy_check(cells: np.ndarray, what: str, t: float):
    occupied = np.unique(cells).size
    if cells.size / occupied < MIN_CELL_OCCUPANCY:
        raise QuantizationError(
            f"quantized {what} has {occupied} occupied cells for {cells.size} paths at t = {t:.6g}; "
            f"lower the bin count or raise n_paths", cells=occupied, paths=cells.size, time=t)


def _bootstrap(cells: np.ndarray, labels: np.ndarray, rng: np.random.Generator, n_boot: int):
    estimate = plugin_mi(cells, labels)
    draws = [plugin_mi(cells[idx], labels[idx])
             for idx in (rng.integers(0, cells.size, cells.size) for _ in range(n_boot))]
    return estimate, float(np.std(draws, ddof=1))


def dpi_check(scenario: LatentScenario, obs_model: ObservationModel, grid: TimeGrid,
              statistic: Optional[str], n_paths: int, stream: RandomStream,
              times: Sequence[float], bins: int = DEFAULT_BINS, n_boot: int = DEFAULT_BOOTSTRAP,
              threads: int = 1) -> DPIReport:
    """
    Compare I(Y_{0:t}; phi), I(pi_t; phi) and I(<pi_t, H>; phi) at the given
    times. The first comes from mi_general, the other two are plug-in
    estimates over quantized filter outputs of the same paths, with
    bootstrap standard errors.
    """
    if not scenario.is_mixture:
        raise ScenarioError("dpi_check needs a finite-mixture scenario")
    if scenario.n_components > 4:
        raise ScenarioError("dpi_check quantizes the K-simplex and supports K <= 4")
    if bins < 2:
        raise QuantizationError(f"need at least 2 bins per coordinate, got {bins}")
    reference = mi_general(scenario, obs_model, grid, statistic, n_paths, stream, threads=threads)
    codes = _label_codes(scenario, statistic)
    indices = [grid.index_of(t) for t in times]

    components, _, path = simulate_with_latent(scenario, obs_model, grid, stream, n_paths, 0)
    initial = initial_evidence(scenario, obs_model, path.values[0])
    probs = exact_discrete_filter(path, scenario, obs_model, initial_log_likelihood=initial).probs
    labels = codes[components]
    rng = stream.child(BOOTSTRAP_STREAM).generator()

    rows = []
    for index in indices:
        t = float(grid.t_points[index])
        pi_cells = _quantize(probs[index][:, :-1], bins)
        H = obs_model.hypotheses(path.values[index], scenario.renderings, t)
        projection = np.einsum('pk,pkn->pn', probs[index], H)
        h_cells = _quantize(projection, bins)
        _occupancy_check(pi_cells, 'posterior', t)
        _occupancy_check(h_cells, 'posterior drift', t)
        i_pi, i_pi_se = _bootstrap(pi_cells, labels, rng, n_boot)
        i_h, i_h_se = _bootstrap(h_cells, labels, rng, n_boot)
        rows.append(DPIRow(t=t, i_full=reference.at(t), i_full_se=reference.stderr_at(t),
                           i_pi=i_pi, i_pi_se=i_pi_se, i_projection=i_h, i_projection_se=i_h_se))
    return DPIReport(rows=rows, i0_method=reference.i0_method, bins=bins)
