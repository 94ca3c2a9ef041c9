#!/usr/bin/env python3
"""
Tests for the exact, Kushner, particle and Kalman-Bucy filters and the
innovation process
"""

import numpy as np
import pytest

from genfilter.diffusion_models import ObservationModel, Schedule, make_gaussian, make_mixture
from genfilter.error_handler import GridError, SimplexError
from genfilter.filtering import (ConditioningSpec, PosteriorState, PosteriorTrajectory, exact_discrete_filter,
                                 extract_innovation, girsanov_logweight, initial_evidence,
                                 innovation_statistics, kalman_bucy, kushner_filter, kushner_step,
                                 particle_filter, posterior_project, total_variation)
from genfilter.generative import BROWNIAN, simulate_with_latent
from genfilter.sde_engine import (RandomStream, SamplePath, TimeGrid, make_grid, sample_brownian_ensemble)


def binary():
    return make_mixture([0.5, 0.5], [[-1.0], [1.0]], {'sign': ['neg', 'pos']})


def ternary():
    return make_mixture([0.3, 0.5, 0.2], [[-1.5], [0.25], [1.0]], {'side': ['left', 'right', 'right']})


class TestGirsanov:
    def test_hand_example(self):
        grid = TimeGrid(np.array([0.0, 0.5, 1.0]), 1.5, 0.5)
        path = SamplePath(grid, np.array([0.0, 1.0, 1.0]))
        log_psi = girsanov_logweight(path, np.ones((2, 1)))
        np.testing.assert_allclose(log_psi, [0.0, 0.75, 0.5])

    def test_zero_drift_gives_zero(self):
        grid = make_grid(1.0, 10, 1e-3)
        path = SamplePath(grid, np.linspace(0.0, 3.0, 11))
        np.testing.assert_array_equal(girsanov_logweight(path, np.zeros((10, 1))), 0.0)

    def test_exponential_weight_is_a_martingale(self):
        grid = make_grid(1.0, 20, 1e-3)
        n = 10_000
        increments = sample_brownian_ensemble(grid, 1, RandomStream(5), n)
        values = np.concatenate([np.zeros((1, n, 1)), np.cumsum(increments, axis=0)])
        log_psi = girsanov_logweight(SamplePath(grid, values), np.full((20, n, 1), 0.5))
        weights = np.exp(log_psi[-1])
        assert abs(weights.mean() - 1.0) <= 4 * weights.std() / np.sqrt(n)

    def test_shape_mismatch(self):
        grid = make_grid(1.0, 10, 1e-3)
        path = SamplePath(grid, np.zeros(11))
        with pytest.raises(GridError):
            girsanov_logweight(path, np.zeros((9, 1)))


class TestExactFilter:
    def test_starts_at_prior(self):
        scenario = ternary()
        sched = Schedule(1.0, 1.0)
        grid = make_grid(1.0, 50, 1e-2)
        _, _, paths = simulate_with_latent(scenario, ObservationModel.linear_bridge(sched, 1), grid,
                                           RandomStream(1), 3)
        posterior = exact_discrete_filter(paths, scenario, ObservationModel.linear_bridge(sched, 1))
        assert posterior.probs.shape == (51, 3, 3)
        np.testing.assert_allclose(posterior.probs[0], np.tile(scenario.weights, (3, 1)))
        np.testing.assert_allclose(posterior.probs.sum(axis=-1), 1.0)

    def test_uninformative_observations_keep_prior(self):
        scenario = binary()
        obs = ObservationModel('custom', 1,
                               callback=lambda y, v, t: np.zeros(np.broadcast_shapes(y.shape, v.shape)))
        grid = make_grid(1.0, 30, 1e-3)
        path = SamplePath(grid, np.random.default_rng(0).normal(size=31))
        posterior = exact_discrete_filter(path, scenario, obs)
        np.testing.assert_allclose(posterior.probs, 0.5)

    def test_label_conditioning_restricts_support(self):
        scenario = ternary()
        grid = make_grid(1.0, 30, 1e-2)
        path = SamplePath(grid, np.zeros(31))
        posterior = exact_discrete_filter(path, scenario, ObservationModel.static(1),
                                          ConditioningSpec.label('side', 'right'))
        assert np.all(posterior.probs[:, 0] == 0.0)
        np.testing.assert_allclose(posterior.probs[0], [0.0, 5 / 7, 2 / 7])

    def test_posterior_projections_are_martingales(self):
        scenario = ternary()
        obs = ObservationModel.linear_bridge(Schedule(1.0, 1.0), 1)
        grid = make_grid(1.0, 50, 1e-2)
        n = 10_000
        _, _, paths = simulate_with_latent(scenario, obs, grid, RandomStream(44), n)
        evidence = initial_evidence(scenario, obs, paths.values[0])
        probs = exact_discrete_filter(paths, scenario, obs, initial_log_likelihood=evidence).probs
        statistics = [scenario.renderings[:, 0],
                      np.array([label == 'right' for label in scenario.attributes['side']], dtype=float),
                      np.array([1.0, 0.0, 0.0])]
        for phi in statistics:
            expected = scenario.weights @ phi
            for index in (0, 12, 25, 37, 50):
                projected = probs[index] @ phi
                assert abs(projected.mean() - expected) <= 4 * projected.std() / np.sqrt(n) + 1e-12

    def test_empty_support_raises(self):
        grid = make_grid(1.0, 10, 1e-3)
        path = SamplePath(grid, np.zeros(11))
        with pytest.raises(SimplexError):
            exact_discrete_filter(path, binary(), ObservationModel.static(1),
                                  initial_log_likelihood=np.full(2, -np.inf))


class TestKushner:
    def test_step_example(self):
        np.testing.assert_allclose(kushner_step([0.5, 0.5], [1.0, -1.0], 0.1, 0.01), [0.55, 0.45])

    def test_vertex_is_absorbing(self):
        np.testing.assert_array_equal(kushner_step([1.0, 0.0], [1.0, -1.0], 0.3, 0.01), [1.0, 0.0])

    def test_no_information_leaves_pi(self):
        np.testing.assert_allclose(kushner_step([0.2, 0.8], [0.5, 0.5], 0.0, 0.01), [0.2, 0.8])

    def test_large_step_is_clipped_onto_simplex(self):
        pi = kushner_step([0.5, 0.5], [10.0, -10.0], 1.0, 0.01)
        assert np.all(pi >= 0)
        assert pi.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(pi, [1.0, 0.0])

    def test_converges_to_exact_filter(self):
        scenario = ternary()
        obs = ObservationModel.linear_bridge(Schedule(1.0, 1.0), 1)
        grid = make_grid(1.0, 9600, 1e-2)
        _, _, paths = simulate_with_latent(scenario, obs, grid, RandomStream(21), 3)
        tv = {1: [], 4: [], 16: []}
        for p in range(3):
            path = paths.path(p)
            evidence = initial_evidence(scenario, obs, path.values[0])
            reference = exact_discrete_filter(path, scenario, obs, initial_log_likelihood=evidence).probs
            for stride in tv:
                coarse = kushner_filter(path.subsample(stride), scenario, obs, initial_log_likelihood=evidence)
                tv[stride].append(total_variation(coarse.probs, reference[::stride]).mean())
        assert np.mean(tv[1]) <= 0.05
        assert np.mean(tv[1]) < np.mean(tv[16])
        order = np.log(np.mean(tv[4]) / np.mean(tv[1])) / np.log(4.0)
        assert order >= 0.4

    def test_rejects_ensembles(self):
        grid = make_grid(1.0, 10, 1e-3)
        with pytest.raises(GridError):
            kushner_filter(SamplePath(grid, np.zeros((11, 2, 1))), binary(), ObservationModel.static(1))


class TestParticleFilter:
    def test_matches_exact_filter_on_mixture(self):
        scenario = binary()
        obs = ObservationModel.linear_bridge(Schedule(0.0, 1.0), 1)
        grid = make_grid(1.0, 200, 1e-3)
        _, _, paths = simulate_with_latent(scenario, obs, grid, RandomStream(8), 1)
        path = paths.path(0)
        exact = exact_discrete_filter(path, scenario, obs)
        particles = particle_filter(path, scenario, obs, 10_000, RandomStream(9))
        assert np.max(total_variation(particles.probs, exact.probs)) <= 0.05

    def test_matches_kalman_bucy(self):
        scenario = make_gaussian([0.0], 1.0)
        obs = ObservationModel.static(1)
        grid = make_grid(1.001, 100, 1e-3)
        _, _, paths = simulate_with_latent(scenario, obs, grid, RandomStream(3), 1)
        path = paths.path(0)
        means, variances = kalman_bucy(path, 0.0, 1.0)
        particles = particle_filter(path, scenario, obs, 10_000, RandomStream(4))
        np.testing.assert_allclose(particles.variances, variances, rtol=0.05)
        assert np.max(np.abs(particles.means - means)) <= 0.05

    def test_single_particle_is_point_mass(self):
        scenario = make_gaussian([0.0], 1.0)
        grid = make_grid(1.001, 20, 1e-3)
        path = SamplePath(grid, np.linspace(0.0, 1.0, 21))
        result = particle_filter(path, scenario, ObservationModel.static(1), 1, RandomStream(0))
        np.testing.assert_allclose(result.means, result.means[0])
        np.testing.assert_array_equal(result.variances, 0.0)
        assert result.state(-1).points.shape == (1, 1)

    def test_rejects_empty_ensemble(self):
        grid = make_grid(1.0, 10, 1e-3)
        with pytest.raises(ValueError):
            particle_filter(SamplePath(grid, np.zeros(11)), binary(), ObservationModel.static(1), 0,
                            RandomStream(0))


class TestKalmanBucy:
    def test_variance_schedule(self):
        grid = make_grid(1.001, 100, 1e-3)
        means, variances = kalman_bucy(SamplePath(grid, np.zeros(101)), 0.0, 1.0)
        assert variances[0, 0] == pytest.approx(1.0)
        assert variances[-1, 0] == pytest.approx(0.5)
        np.testing.assert_array_equal(means, 0.0)


class TestInnovation:
    def test_zero_drift_innovation_is_the_measurement(self):
        grid = make_grid(1.0, 10, 1e-3)
        path = SamplePath(grid, np.random.default_rng(1).normal(size=11))
        posterior = PosteriorTrajectory(grid=grid, h_bar=np.zeros((10, 1)))
        innovation = extract_innovation(path, posterior, ObservationModel.static(1))
        np.testing.assert_array_equal(innovation.increments, path.increments())

    def test_known_latent_recovers_driving_noise(self):
        scenario = binary()
        obs = ObservationModel.linear_bridge(Schedule(0.0, 1.0), 1)
        grid = make_grid(1.0, 100, 1e-3)
        stream = RandomStream(12)
        components, _, paths = simulate_with_latent(scenario, obs, grid, stream, 1)
        posterior = exact_discrete_filter(paths, scenario, obs, ConditioningSpec.full_latent(components))
        innovation = extract_innovation(paths, posterior, obs, scenario)
        driving = sample_brownian_ensemble(grid, 1, stream.child(BROWNIAN), 1)
        np.testing.assert_allclose(innovation.increments, driving, atol=1e-10)

    def test_measurement_innovation_is_brownian(self):
        scenario = binary()
        obs = ObservationModel.linear_bridge(Schedule(0.0, 1.0), 1)
        grid = make_grid(1.0, 50, 1e-3)
        n = 10_000
        _, _, paths = simulate_with_latent(scenario, obs, grid, RandomStream(33), n)
        evidence = initial_evidence(scenario, obs, paths.values[0])
        posterior = exact_discrete_filter(paths, scenario, obs, initial_log_likelihood=evidence)
        stats = innovation_statistics(extract_innovation(paths, posterior, obs, scenario))
        assert abs(stats['mean']) <= 4 * stats['mean_stderr']
        assert stats['variance_ratio'] == pytest.approx(1.0, abs=0.05)
        assert abs(stats['lag1']) <= 4 * stats['lag1_stderr']

    def test_misaligned_posterior(self):
        grid = make_grid(1.0, 10, 1e-3)
        path = SamplePath(grid, np.zeros(11))
        posterior = PosteriorTrajectory(grid=make_grid(1.0, 5, 1e-3), h_bar=np.zeros((5, 1)))
        with pytest.raises(GridError):
            extract_innovation(path, posterior, ObservationModel.static(1))


class TestPosteriorProject:
    def test_point_mass(self):
        assert posterior_project(PosteriorState(probs=np.array([0.0, 1.0, 0.0])), [1.0, 2.0, 3.0]) == 2.0

    def test_uniform_average(self):
        pi = PosteriorState(probs=np.full(3, 1 / 3))
        assert posterior_project(pi, np.array([1.0, 2.0, 3.0])) == pytest.approx(2.0)

    def test_linear_in_statistic(self):
        pi = PosteriorState(probs=np.array([0.2, 0.3, 0.5]))
        g = np.array([[1.0], [-2.0], [0.5]])
        y, m, f = np.array([0.4]), 1.7, 0.9
        combined = posterior_project(pi, m * g - f * y)
        np.testing.assert_allclose(combined, m * posterior_project(pi, g) - f * y)

    def test_particles(self):
        pi = PosteriorState(points=np.array([[1.0], [3.0]]), log_weights=np.log([0.25, 0.75]))
        assert posterior_project(pi, lambda x: x[:, 0] ** 2) == pytest.approx(0.25 + 6.75)

    def test_invalid_simplex(self):
        with pytest.raises(SimplexError):
            PosteriorState(probs=np.array([0.7, 0.7]))
