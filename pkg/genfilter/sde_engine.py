"""
Discretization substrate: time grids, reproducible Brownian noise and the
Euler-Maruyama integrator.

Every stochastic sum in the package is a left-endpoint (Ito) sum: the
integrand is evaluated at t_i and multiplied by the increment over
[t_i, t_{i+1}].
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .error_handler import GridError, NonFiniteDriftError

SPACINGS = ('uniform', 'geometric')
DEFAULT_REFINE_FRACTION = 0.5

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """SplitMix64 finalizer, used as a 64-bit avalanche mix"""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time mesh on [0, T - epsilon]"""
    t_points: np.ndarray
    T: float
    epsilon: float
    spacing: str = 'uniform'

    def __post_init__(self):
        points = np.asarray(self.t_points, dtype=float)
        object.__setattr__(self, 't_points', points)
        if points.ndim != 1 or points.size < 2:
            raise GridError("time grid needs at least 2 points")
        if self.epsilon <= 0:
            raise GridError(f"epsilon must be positive, got {self.epsilon}")
        if points[0] != 0.0:
            raise GridError(f"time grid must start at 0, got {points[0]}")
        if not np.isclose(points[-1], self.T - self.epsilon, rtol=0.0, atol=1e-12):
            raise GridError(f"time grid must end at T - epsilon = {self.T - self.epsilon}, got {points[-1]}")
        if np.any(np.diff(points) <= 0):
            raise GridError("time grid must be strictly increasing (no zero-length steps)")

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t_points)

    @property
    def n_steps(self) -> int:
        return self.t_points.size - 1

    def __len__(self) -> int:
        return self.t_points.size

    def index_of(self, t: float) -> int:
        """Index of the grid point nearest to t"""
        if t < -1e-12 or t > self.t_points[-1] + 1e-12:
            raise GridError(f"time {t} lies outside the grid [0, {self.t_points[-1]}]")
        return int(np.argmin(np.abs(self.t_points - t)))

    def subgrid(self, stride: int) -> 'TimeGrid':
        if stride < 1 or self.n_steps % stride != 0:
            raise GridError(f"stride {stride} does not divide {self.n_steps} steps")
        return TimeGrid(self.t_points[::stride], self.T, self.epsilon, self.spacing)


@dataclass(frozen=True)
class SamplePath:
    """
    Discretized trajectory on a TimeGrid.

    ``values`` has shape (len(grid), N) for a single path, or
    (len(grid), P, N) for an ensemble of P paths sharing the grid.
    """
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, 'values', values)
        if values.shape[0] != len(self.grid):
            raise GridError(
                f"path has {values.shape[0]} values but the grid has {len(self.grid)} points")
        if not np.all(np.isfinite(values)):
            raise GridError("path contains non-finite values")

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def n_paths(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[1]

    @property
    def is_ensemble(self) -> bool:
        return self.values.ndim == 3

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def path(self, index: int) -> 'SamplePath':
        if not self.is_ensemble:
            if index != 0:
                raise IndexError(index)
            return self
        return SamplePath(self.grid, self.values[:, index, :])

    def subsample(self, stride: int) -> 'SamplePath':
        """Replay the same trajectory on every stride-th grid point"""
        return SamplePath(self.grid.subgrid(stride), self.values[::stride])


@dataclass(frozen=True)
class RandomStream:
    """Value object naming one reproducible stream of random draws"""
    root_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.stream_index < 0:
            raise ValueError(f"stream_index must be non-negative, got {self.stream_index}")
        object.__setattr__(self, 'root_seed', int(self.root_seed) & _MASK64)

    def seed(self) -> int:
        return splitmix64(self.root_seed ^ splitmix64(self.stream_index))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed()))

    def child(self, *indices: int) -> 'RandomStream':
        """Derive a stream for a nested index, e.g. (seed, tau, fork)"""
        stream = self
        for index in indices:
            stream = RandomStream(stream.seed(), int(index))
        return stream


def make_grid(T: float, M: int, epsilon: float, spacing: str = 'uniform',
              refine_fraction: float = DEFAULT_REFINE_FRACTION) -> TimeGrid:
    """
    Build a grid of M + 1 points covering [0, T - epsilon].

    ``geometric`` spacing hands ``refine_fraction`` of the steps to the last
    decade before the cutoff (where T - t runs from 10*epsilon down to
    epsilon), spaced log-uniformly in T - t; the rest of the interval is
    uniform. If 10*epsilon >= T the whole interval is log-uniform.
    """
    if T <= 0:
        raise GridError(f"horizon T must be positive, got {T}")
    if M is None or int(M) != M or M < 1:
        raise GridError(f"step count M must be a positive integer, got {M}")
    if epsilon <= 0:
        raise GridError(f"epsilon must be positive, got {epsilon}")
    if epsilon >= T:
        raise GridError(f"epsilon must be smaller than T, got epsilon={epsilon}, T={T}")
    if spacing not in SPACINGS:
        raise GridError(f"unknown spacing '{spacing}', expected one of {', '.join(SPACINGS)}")
    M = int(M)
    t_end = T - epsilon

    if spacing == 'uniform' or M == 1:
        points = np.linspace(0.0, t_end, M + 1)
    else:
        if not 0.0 < refine_fraction < 1.0:
            raise GridError(f"refine_fraction must lie in (0, 1), got {refine_fraction}")
        decade = 10.0 * epsilon
        if decade >= T:
            u = T * (epsilon / T) ** (np.arange(M + 1) / M)
            points = T - u
        else:
            n_fine = min(M - 1, max(1, int(round(M * refine_fraction))))
            n_coarse = M - n_fine
            coarse = np.linspace(0.0, T - decade, n_coarse + 1)
            u = decade * 0.1 ** (np.arange(1, n_fine + 1) / n_fine)
            points = np.concatenate([coarse, T - u])
    points[0] = 0.0
    points[-1] = t_end
    return TimeGrid(points, float(T), float(epsilon), spacing)


def sample_brownian_increments(grid: TimeGrid, dim: int, stream: RandomStream) -> np.ndarray:
    """Independent N(0, dt_i I) increments, shape (n_steps, dim)"""
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    draws = stream.generator().standard_normal((grid.n_steps, dim))
    return draws * np.sqrt(grid.dt)[:, None]


def sample_brownian_ensemble(grid: TimeGrid, dim: int, stream: RandomStream,
                             n_paths: int, start: int = 0) -> np.ndarray:
    """
    Increments for paths start..start+n_paths-1, shape (n_steps, n_paths, dim).

    Path i draws from ``stream.child(i)`` so any chunking of the index range
    reproduces the same numbers.
    """
    increments = np.empty((grid.n_steps, n_paths, dim))
    for offset in range(n_paths):
        increments[:, offset, :] = sample_brownian_increments(grid, dim, stream.child(start + offset))
    return increments


def integrate_from(drift: Callable[[np.ndarray, float], np.ndarray], x0: Sequence[float],
                   grid: TimeGrid, increments: np.ndarray, start_index: int = 0) -> np.ndarray:
    """
    Euler-Maruyama from grid point ``start_index`` to the end of the grid.

    ``x0`` may be a single state (N,) or an ensemble (P, N); ``increments``
    then has shape (steps, N) or (steps, P, N). Returns the states at grid
    points start_index..end, shape (steps + 1,) + x0.shape.
    """
    state = np.array(x0, dtype=float)
    if state.ndim == 0:
        state = state[None]
    increments = np.asarray(increments, dtype=float)
    if increments.ndim == 1 and state.ndim == 1:
        increments = increments[:, None]
    n_steps = grid.n_steps - start_index
    if increments.shape[0] != n_steps or increments.shape[1:] != state.shape:
        raise GridError(
            f"increments of shape {increments.shape} do not match {n_steps} steps of state {state.shape}")

    times = grid.t_points[start_index:]
    dt = np.diff(times)
    values = np.empty((n_steps + 1,) + state.shape)
    values[0] = state
    for i in range(n_steps):
        step_drift = np.asarray(drift(state, times[i]), dtype=float)
        if not np.all(np.isfinite(step_drift)):
            raise NonFiniteDriftError(
                f"drift is not finite at t = {times[i]:.6g}",
                state=state.copy(), time=float(times[i]), step=start_index + i)
        state = state + step_drift * dt[i] + increments[i]
        values[i + 1] = state
    return values


def euler_maruyama(drift: Callable[[np.ndarray, float], np.ndarray], x0: Sequence[float],
                   grid: TimeGrid, increments: np.ndarray) -> SamplePath:
    """Integrate dx = drift(x, t) dt + dW over the whole grid"""
    return SamplePath(grid, integrate_from(drift, x0, grid, increments))
