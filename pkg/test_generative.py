#!/usr/bin/env python3
"""
Tests for the joint (pi, Y) system, bridges with a known latent and the
score-based samplers
"""

import numpy as np
import pytest

from genfilter.diffusion_models import (ObservationModel, Schedule, ScoreModel, analytic_bridge_moments,
                                        make_gaussian, make_mixture)
from genfilter.error_handler import ConfigError, ScenarioError
from genfilter.filtering import ConditioningSpec
from genfilter.generative import (METHODS, SamplerConfig, predictor_corrector, sample, simulate_backward,
                                  simulate_bridge, simulate_joint_system, snap_to_nearest,
                                  terminal_hitting_report)
from genfilter.scenarios import create_handler
from genfilter.sde_engine import RandomStream, TimeGrid, make_grid


def binary():
    return make_mixture([0.5, 0.5], [[-1.0], [1.0]], {'sign': ['neg', 'pos']})


def ternary():
    return make_mixture([0.3, 0.5, 0.2], [[-1.5], [0.25], [1.0]])


def log_uniform_grid(T, M, epsilon):
    """Grid whose time-to-go T - t shrinks by the same factor every step"""
    points = T - T * (epsilon / T) ** (np.arange(M + 1) / M)
    points[0] = 0.0
    points[-1] = T - epsilon
    return TimeGrid(points, T, epsilon, 'geometric')


def within_binomial_band(frequencies, weights, n, sigmas=4.0):
    weights = np.asarray(weights)
    band = sigmas * np.sqrt(weights * (1 - weights) / n)
    return np.all(np.abs(np.asarray(frequencies) - weights) <= band)


class TestSamplerConfig:
    def test_defaults(self):
        config = SamplerConfig()
        assert config.method == 'backward-score'
        assert config.corrector_steps == 1
        assert config.snr == pytest.approx(0.06)
        assert SamplerConfig.from_dict(config.to_dict()) == config

    def test_collects_problems(self):
        with pytest.raises(ConfigError) as excinfo:
            SamplerConfig(method='euler', corrector_steps=-1, snr=0.0)
        assert len(excinfo.value.problems) == 3


class TestSingleComponent:
    """With K = 1 every sampler reduces to the bridge towards the only rendering"""

    def setup_method(self):
        self.scenario = make_mixture([1.0], [[0.7]])
        self.sched = Schedule(0.0, 1.0)
        self.obs = ObservationModel.linear_bridge(self.sched, 1)
        self.grid = make_grid(1.0, 100, 1e-3)
        self.stream = RandomStream(17)

    def test_joint_system_is_the_bridge(self):
        joint = simulate_joint_system(self.scenario, self.obs, self.grid, self.stream)
        bridge = simulate_bridge([0.7], self.obs, self.grid, self.stream)
        np.testing.assert_allclose(joint.y_path.values, bridge.values, atol=1e-10)
        np.testing.assert_array_equal(joint.probs, 1.0)

    def test_backward_sampler_is_the_bridge(self):
        backward = simulate_backward(ScoreModel(self.scenario, self.sched), self.grid, self.stream)
        bridge = simulate_bridge([0.7], self.obs, self.grid, self.stream)
        np.testing.assert_allclose(backward.values, bridge.values, atol=1e-10)


class TestBridge:
    def test_terminal_pinning(self):
        grid = make_grid(1.0, 200, 1e-3, spacing='geometric')
        for alpha in (0.0, 1.0):
            sched = Schedule(alpha, 1.0)
            obs = ObservationModel.linear_bridge(sched, 1)
            paths = simulate_bridge([1.0], obs, grid, RandomStream(4), y0=[0.0], n_paths=2000)
            mean, var = analytic_bridge_moments([0.0], [1.0], grid.t_points[-1], sched)
            expected = var + (mean[0] - 1.0) ** 2
            observed = np.mean((paths.terminal[:, 0] - 1.0) ** 2)
            assert observed == pytest.approx(expected, rel=0.2)

    def test_mean_trajectory(self):
        sched = Schedule(1.0, 1.0)
        obs = ObservationModel.linear_bridge(sched, 1)
        grid = make_grid(1.0, 200, 1e-3)
        n = 2000
        paths = simulate_bridge([1.5], obs, grid, RandomStream(6), y0=[-0.5], n_paths=n)
        for t in (0.25, 0.5, 0.75):
            index = grid.index_of(t)
            mean, var = analytic_bridge_moments([-0.5], [1.5], grid.t_points[index], sched)
            values = paths.values[index, :, 0]
            assert abs(values.mean() - mean[0]) <= 4 * np.sqrt(var / n)

    def test_zero_noise_brownian_bridge_is_deterministic(self):
        obs = ObservationModel.linear_bridge(Schedule(0.0, 1.0), 1)
        grid = make_grid(1.0, 100, 1e-3)
        first = simulate_bridge([1.0], obs, grid, RandomStream(1), y0=[0.0], noise_scale=0.0)
        second = simulate_bridge([1.0], obs, grid, RandomStream(2), y0=[0.0], noise_scale=0.0)
        np.testing.assert_array_equal(first.values, second.values)
        # each Euler step shrinks the gap to v by (T - t_{i+1}) / (T - t_i)
        assert first.terminal[0] == pytest.approx(1.0 - 1e-3, rel=1e-9)

    def test_zero_noise_gap_shrinks_with_epsilon(self):
        obs = ObservationModel.linear_bridge(Schedule(1.0, 1.0), 1)
        gaps = []
        for epsilon in (1e-2, 1e-3, 1e-4):
            grid = make_grid(1.0, 400, epsilon, spacing='geometric')
            path = simulate_bridge([1.5], obs, grid, RandomStream(0), y0=[-0.5], noise_scale=0.0)
            gaps.append(abs(path.terminal[0] - 1.5))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[-1] < 1e-2

    def test_needs_linear_bridge(self):
        with pytest.raises(ScenarioError):
            simulate_bridge([1.0], ObservationModel.static(1), make_grid(1.0, 10, 1e-3), RandomStream(0))

    def test_rejects_non_finite_target(self):
        obs = ObservationModel.linear_bridge(Schedule(0.0, 1.0), 1)
        with pytest.raises(ScenarioError):
            simulate_bridge([np.inf], obs, make_grid(1.0, 10, 1e-3), RandomStream(0))


class TestTerminalLaw:
    def test_backward_sampler_hits_components_with_prior_weights(self):
        scenario = ternary()
        grid = make_grid(1.0, 400, 1e-2, spacing='geometric')
        n = 10_000
        paths = simulate_backward(ScoreModel(scenario, Schedule(1.0, 1.0)), grid, RandomStream(10), n_paths=n)
        report = terminal_hitting_report(paths, scenario)
        assert within_binomial_band(report.frequencies(3), scenario.weights, n)

    def test_joint_system_matches_bridge_system(self):
        scenario = binary()
        sched = Schedule(0.0, 1.0)
        obs = ObservationModel.linear_bridge(sched, 1)
        grid = make_grid(1.0, 200, 1e-3, spacing='geometric')
        n = 4000
        joint = simulate_joint_system(scenario, obs, grid, RandomStream(2), n_paths=n)
        bridge = sample('bridge-with-known-latent', ScoreModel(scenario, sched), grid, RandomStream(3), n_paths=n)
        joint_terminal = joint.y_path.terminal[:, 0]
        bridge_terminal = bridge.terminal[:, 0]
        assert within_binomial_band(terminal_hitting_report(joint.y_path, scenario).frequencies(2), [0.5, 0.5], n)
        assert abs(joint_terminal.mean() - bridge_terminal.mean()) <= 4 * np.sqrt(2.0 / n)
        assert joint_terminal.var() == pytest.approx(bridge_terminal.var(), rel=0.1)
        np.testing.assert_allclose(joint.probs[-1].sum(axis=-1), 1.0)

    def test_joint_system_hits_four_components_with_prior_weights(self):
        scenario = create_handler({'builtin': 'quad'}).scenario
        obs = ObservationModel.linear_bridge(Schedule(0.0, 1.0), scenario.dim)
        grid = make_grid(1.0, 200, 1e-3, spacing='geometric')
        n = 10_000
        joint = simulate_joint_system(scenario, obs, grid, RandomStream(12), n_paths=n)
        report = terminal_hitting_report(joint.y_path, scenario)
        assert within_binomial_band(report.frequencies(4), scenario.weights, n)

    def test_label_conditioning_selects_components(self):
        scenario = binary()
        grid = make_grid(1.0, 200, 1e-3, spacing='geometric')
        paths = simulate_backward(ScoreModel(scenario, Schedule(0.0, 1.0)), grid, RandomStream(5), n_paths=200,
                                  conditioning=ConditioningSpec.label('sign', 'pos'))
        assert np.all(terminal_hitting_report(paths, scenario).components == 1)

    def test_full_latent_conditioning_is_rejected(self):
        scenario = binary()
        with pytest.raises(ScenarioError):
            simulate_backward(ScoreModel(scenario, Schedule(0.0, 1.0)), make_grid(1.0, 10, 1e-3), RandomStream(0),
                              conditioning=ConditioningSpec.full_latent(0))


class TestPredictorCorrector:
    def test_without_corrector_steps_equals_backward(self):
        model = ScoreModel(ternary(), Schedule(1.0, 1.0))
        grid = make_grid(1.0, 100, 1e-2)
        stream = RandomStream(8)
        corrected = predictor_corrector(model, grid, stream, SamplerConfig('predictor-corrector', 0), n_paths=5)
        plain = simulate_backward(model, grid, stream, n_paths=5)
        np.testing.assert_array_equal(corrected.values, plain.values)

    def test_corrector_preserves_gaussian_marginal(self):
        sched = Schedule(0.0, 1.0)
        model = ScoreModel(make_gaussian([0.0], 1.0), sched)
        grid = make_grid(1.0, 200, 1e-3)
        n = 4000
        paths = predictor_corrector(model, grid, RandomStream(14), SamplerConfig('predictor-corrector'), n_paths=n)
        for t in (0.25, 0.5, 0.75):
            index = grid.index_of(t)
            values = paths.values[index, :, 0]
            variance = 1.0 + (1.0 - grid.t_points[index])
            assert abs(values.mean()) <= 4 * np.sqrt(variance / n)
            assert values.var() == pytest.approx(variance, rel=0.1)

    def test_runs_on_hierarchy_sized_latent(self):
        scenario = make_mixture([0.25] * 4, np.array([[1, 1, 1, 1], [1, 1, -1, -1],
                                                       [-1, -1, 1, 1], [-1, -1, -1, -1]], dtype=float))
        paths = predictor_corrector(ScoreModel(scenario, Schedule(2.0, 2.0)), make_grid(2.0, 100, 1e-3),
                                    RandomStream(1))
        assert paths.values.shape == (101, 4)
        assert np.all(np.isfinite(paths.values))

    def test_chunked_runs_reproduce_full_run(self):
        model = ScoreModel(ternary(), Schedule(1.0, 1.0))
        grid = make_grid(1.0, 50, 1e-2)
        stream = RandomStream(31)
        config = SamplerConfig('predictor-corrector', corrector_steps=2)
        full = predictor_corrector(model, grid, stream, config, n_paths=6)
        parts = [predictor_corrector(model, grid, stream, config, n_paths=3, start=start) for start in (0, 3)]
        np.testing.assert_array_equal(full.values, np.concatenate([p.values for p in parts], axis=1))
        single = predictor_corrector(model, grid, stream, config, n_paths=1, start=4)
        np.testing.assert_array_equal(single.values[:, 0], full.values[:, 4])


class TestDispatch:
    def test_every_method_produces_paths(self):
        scenario = binary()
        model = ScoreModel(scenario, Schedule(0.0, 1.0))
        grid = make_grid(1.0, 50, 1e-3)
        for method in METHODS:
            paths = sample(method, model, grid, RandomStream(0), n_paths=3)
            assert paths.values.shape == (51, 3, 1)

    def test_unknown_method(self):
        model = ScoreModel(binary(), Schedule(0.0, 1.0))
        with pytest.raises(ConfigError):
            sample('heun', model, make_grid(1.0, 10, 1e-3), RandomStream(0), SamplerConfig())

    def test_chunked_runs_reproduce_full_run(self):
        model = ScoreModel(ternary(), Schedule(1.0, 1.0))
        grid = make_grid(1.0, 50, 1e-2)
        stream = RandomStream(99)
        full = simulate_backward(model, grid, stream, n_paths=6)
        parts = [simulate_backward(model, grid, stream, n_paths=3, start=start) for start in (0, 3)]
        np.testing.assert_array_equal(full.values, np.concatenate([p.values for p in parts], axis=1))


class TestHitting:
    def test_nearest_rendering(self):
        scenario = ternary()
        report = terminal_hitting_report(np.array([[0.25]]), scenario)
        assert report.components[0] == 1
        assert report.distances[0] == 0.0

    def test_tie_goes_to_lower_index(self):
        report = terminal_hitting_report(np.array([[0.0]]), binary())
        assert report.components[0] == 0
        assert report.distances[0] == pytest.approx(1.0)

    def test_snap(self):
        np.testing.assert_array_equal(snap_to_nearest(np.array([[0.9], [-3.0]]), binary()), [[1.0], [-1.0]])

    def test_distances_shrink_like_sqrt_epsilon(self):
        model = ScoreModel(binary(), Schedule(0.0, 1.0))
        mean_distance = {}
        for epsilon in (1e-2, 1e-4):
            paths = simulate_backward(model, log_uniform_grid(1.0, 400, epsilon), RandomStream(40), n_paths=4000)
            mean_distance[epsilon] = terminal_hitting_report(paths, binary()).distances.mean()
        assert mean_distance[1e-2] / mean_distance[1e-4] == pytest.approx(10.0, rel=0.15)

    def test_snapping_only_when_configured(self):
        model = ScoreModel(binary(), Schedule(0.0, 1.0))
        grid = make_grid(1.0, 50, 1e-3)
        plain = simulate_backward(model, grid, RandomStream(6), n_paths=20)
        snapped = simulate_backward(model, grid, RandomStream(6), SamplerConfig(snap_terminal=True), n_paths=20)
        np.testing.assert_array_equal(snapped.values[:-1], plain.values[:-1])
        assert set(np.unique(snapped.terminal)) <= {-1.0, 1.0}
        np.testing.assert_array_equal(snapped.terminal, snap_to_nearest(plain.terminal, binary()))

    def test_needs_mixture(self):
        with pytest.raises(ScenarioError):
            terminal_hitting_report(np.zeros((1, 1)), make_gaussian([0.0], 1.0))
