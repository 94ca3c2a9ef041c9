"""
Forking measurement protocol: branch the backward sampler at time tau into
k independent continuations, classify every terminal state with the exact
Bayes classifier and measure how coherent each attribute already is through
the entropy of its label histogram.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .diffusion_models import LatentScenario, ScoreModel
from .error_handler import ScenarioError
from .generative import SamplerConfig, backward_continue, simulate_backward, predictor_corrector
from .sde_engine import RandomStream, TimeGrid

logger = logging.getLogger(__name__)

DEFAULT_FORKS = 100
DEFAULT_SEEDS = 10
DEFAULT_TAU_COUNT = 11
# Stream index of the trunk path below each seed; fork times use 0, 1, ...
TRUNK_STREAM = 1 << 32


@dataclass(frozen=True)
class ForkConfig:
    tau_list: Optional[Tuple[float, ...]] = None
    k: int = DEFAULT_FORKS
    n_seeds: int = DEFAULT_SEEDS
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    attributes: Optional[Tuple[str, ...]] = None
    tau_count: int = DEFAULT_TAU_COUNT

    def __post_init__(self):
        if self.k < 2:
            raise ScenarioError(f"forking needs k >= 2 replicas, got {self.k}")
        if self.n_seeds < 1:
            raise ScenarioError(f"n_seeds must be positive, got {self.n_seeds}")
        if self.tau_count < 2:
            raise ScenarioError(f"tau_count must be at least 2, got {self.tau_count}")

    def fork_indices(self, grid: TimeGrid) -> List[int]:
        """Grid indices of the fork times; the default is tau_count uniform points on [0, T - epsilon]"""
        taus = self.tau_list
        if taus is None:
            taus = np.linspace(0.0, grid.t_points[-1], self.tau_count)
        return [grid.index_of(float(tau)) for tau in taus]


@dataclass(frozen=True)
class ForkRecord:
    seed: int
    tau: float
    attribute: str
    histogram: Dict[object, int]
    entropy: float


@dataclass
class ForkReport:
    taus: List[float]
    attributes: List[str]
    records: List[ForkRecord]
    k: int
    n_seeds: int
    ties: int = 0

    def curve(self, attribute: str) -> Tuple[np.ndarray, np.ndarray]:
        """Mean entropy over seeds and its standard error, per tau"""
        means, errors = [], []
        for tau in self.taus:
            values = np.array([r.entropy for r in self.records if r.tau == tau and r.attribute == attribute])
            means.append(values.mean())
            errors.append(values.std(ddof=1) / np.sqrt(values.size) if values.size > 1 else 0.0)
        return np.array(means), np.array(errors)

    def half_entropy_crossing(self, attribute: str, reference: float) -> Optional[float]:
        """First tau at which the mean entropy falls below reference / 2"""
        means, _ = self.curve(attribute)
        below = np.nonzero(means < 0.5 * reference)[0]
        return float(self.taus[below[0]]) if below.size else None

    def histogram_rows(self) -> List[tuple]:
        """(seed, tau, attribute, label, count)"""
        return [(r.seed, r.tau, r.attribute, label, count)
                for r in self.records for label, count in r.histogram.items()]

    def aggregate_rows(self) -> List[tuple]:
        """(tau, attribute, mean_entropy, stderr)"""
        rows = []
        for attribute in self.attributes:
            means, errors = self.curve(attribute)
            rows.extend((tau, attribute, float(m), float(e)) for tau, m, e in zip(self.taus, means, errors))
        return sorted(rows, key=lambda row: (row[0], self.attributes.index(row[1])))


def entropy(histogram) -> float:
    """-sum p log p of a count histogram, with 0 log 0 = 0"""
    counts = np.asarray(list(histogram.values()) if isinstance(histogram, dict) else histogram, dtype=float)
    if np.any(counts < 0):
        raise ScenarioError("histogram counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ScenarioError("histogram total must be positive")
    p = counts[counts > 0] / total
    return float(max(-np.sum(p * np.log(p)), 0.0))


def bayes_classifier(y, t: float, score_model: ScoreModel):
    """argmax_k r_k(y, t), lowest index on ties; vectorized over leading axes of y"""
    r = score_model.log_responsibilities(y, t)
    winner = np.argmax(r, axis=-1)
    return int(winner) if np.ndim(winner) == 0 else winner


def _count_ties(score_model: ScoreModel, y: np.ndarray, t: float) -> int:
    r = score_model.log_responsibilities(y, t)
    return int(np.count_nonzero(np.sum(r == r.max(axis=-1, keepdims=True), axis=-1) > 1))


def _fork_noise(grid: TimeGrid, start_index: int, dim: int, stream: RandomStream, k: int,
                n_corr: int):
    """Brownian increments (steps, k, N) and corrector noise (steps, n_corr, k, N) per replica"""
    dt = grid.dt[start_index:]
    steps = dt.size
    increments = np.empty((steps, k, dim))
    corrector = np.empty((steps, n_corr, k, dim))
    for fork in range(k):
        rng = stream.child(fork).generator()
        increments[:, fork, :] = rng.standard_normal((steps, dim)) * np.sqrt(dt)[:, None]
        if n_corr:
            corrector[:, :, fork, :] = rng.standard_normal((steps, n_corr, dim))
    return increments, corrector


def run_forking(score_model: ScoreModel, scenario: LatentScenario, config: ForkConfig, grid: TimeGrid,
                stream: RandomStream, threads: int = 1) -> ForkReport:
    """
    For every seed integrate one trunk path, fork k replicas from the trunk
    state at each tau, complete them independently to T - epsilon and
    record the label-histogram entropy of every attribute.

    Replica streams are stream.child(seed, tau_index, fork); the trunk uses
    stream.child(seed, TRUNK_STREAM).
    """
    if not scenario.is_mixture:
        raise ScenarioError("forking needs a finite-mixture scenario")
    attributes = list(config.attributes or scenario.attributes or ('component',))
    for name in attributes:
        scenario.statistic(name)
    indices = config.fork_indices(grid)
    taus = [float(grid.t_points[i]) for i in indices]
    sampler = config.sampler
    n_corr = int(sampler.corrector_steps) if sampler.method == 'predictor-corrector' else 0
    t_end = float(grid.t_points[-1])
    label_sets = {name: scenario.labels(name) for name in attributes}
    statistics = {name: np.array(scenario.statistic(name), dtype=object) for name in attributes}

    def run_seed(seed: int):
        seed_stream = stream.child(seed)
        trunk_stream = seed_stream.child(TRUNK_STREAM)
        if sampler.method == 'predictor-corrector':
            trunk = predictor_corrector(score_model, grid, trunk_stream, sampler)
        else:
            trunk = simulate_backward(score_model, grid, trunk_stream, sampler)
        records, ties = [], 0
        for tau_index, (grid_index, tau) in enumerate(zip(indices, taus)):
            increments, corrector = _fork_noise(grid, grid_index, scenario.dim,
                                                seed_stream.child(tau_index), config.k, n_corr)
            start = np.broadcast_to(trunk.values[grid_index], (config.k, scenario.dim))
            values = backward_continue(score_model, start, grid, increments, grid_index, sampler, corrector)
            terminal = values[-1]
            classes = bayes_classifier(terminal, t_end, score_model)
            ties += _count_ties(score_model, terminal, t_end)
            for name in attributes:
                labels = statistics[name][classes]
                histogram = {label: int(np.sum(labels == label)) for label in label_sets[name]}
                records.append(ForkRecord(seed, tau, name, histogram, entropy(histogram)))
        return records, ties

    if threads > 1 and config.n_seeds > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(run_seed, range(config.n_seeds)))
    else:
        results = [run_seed(seed) for seed in range(config.n_seeds)]

    records = [record for seed_records, _ in results for record in seed_records]
    ties = sum(seed_ties for _, seed_ties in results)
    if ties:
        logger.warning("%d terminal states had tied responsibilities; resolved to the lowest index", ties)
    return ForkReport(taus=taus, attributes=attributes, records=records, k=config.k,
                      n_seeds=config.n_seeds, ties=ties)
