"""
Experiment orchestration: builds the scenario, grid and random streams from a
validated configuration, runs one experiment and writes its CSV files, SVG
plots, the configuration copy and the manifest.

Every experiment draws from its own child of the root stream, so adding an
output to one experiment never shifts the numbers of another.
"""

import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .diffusion_models import COMPONENT, analytic_bridge_moments
from .error_handler import ScenarioError
from .experiment_configs import ExperimentConfig, Manifest
from .filtering import (PosteriorTrajectory, exact_discrete_filter, extract_innovation, initial_evidence,
                        innovation_statistics, kalman_bucy, kushner_filter, particle_filter,
                        total_variation)
from .forking import ForkConfig, run_forking
from .generative import (SamplerConfig, draw_latents, sample, simulate_bridge, simulate_joint_system,
                         simulate_with_latent, terminal_hitting_report)
from .information import dpi_check, mi_general, mi_linear, mi_quadrature_oracle, mi_score_gap
from .scenarios import create_handler
from .sde_engine import DEFAULT_REFINE_FRACTION, RandomStream, make_grid
from .utils import config_digest, ensure_dir, sha256_file, svg_polyline, write_csv, write_json

logger = logging.getLogger(__name__)

BENCH_STREAM = 0
PARTICLE_STREAM = 1
INNOVATION_STREAM = 2
MI_STREAM = 3
FORK_STREAM = 4
BRIDGE_STREAM = 5
JOINT_STREAM = 6
SAMPLER_STREAM = 7

MC_DEFAULTS = {
    'n_paths': 2000,
    'n_particles': 10000,
    'k': 100,
    'n_seeds': 10,
    'tau_count': 11,
    'bins': 20,
}
BENCH_STRIDES = (1, 2, 4, 8, 16, 32)
PARTICLE_PATHS = 5
CHECKPOINTS = 11
ORACLE_POINTS = 5


class ExperimentRunner:
    """Runs one configured experiment into its output directory"""

    EXPERIMENTS = {
        'filter-bench': '_filter_bench',
        'mi-curve': '_mi_curve',
        'fork': '_fork',
        'bridge-check': '_bridge_check',
        'joint-vs-bridge': '_joint_vs_bridge',
    }

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.handler = create_handler({**config.scenario, 'schedule': config.schedule})
        self.scenario = self.handler.scenario
        self.schedule = self.handler.schedule()
        self.obs_model = self.handler.observation_model()
        self.score_model = self.handler.score_model()
        self.grid = make_grid(self.schedule.T, int(config.grid.get('M', 1000)), self.handler.epsilon,
                              config.grid.get('spacing', 'uniform'),
                              float(config.grid.get('refine_fraction', DEFAULT_REFINE_FRACTION)))
        self.stream = RandomStream(config.root_seed)
        self.mc = {**MC_DEFAULTS, **config.mc}
        self.sampler = SamplerConfig.from_dict(config.sampler)
        self.threads = config.threads
        self.output_dir: Optional[Path] = None
        self.outputs: Dict[str, Path] = {}
        self.summary: Dict[str, Any] = {}

    def run(self) -> Manifest:
        """Run the experiment and write every output; returns the manifest"""
        self.output_dir = ensure_dir(self.config.output_dir)
        logger.info("running %s on scenario %s (%d grid steps, root seed %d)", self.config.experiment,
                    self.scenario.name, self.grid.n_steps, self.config.root_seed)
        started = time.perf_counter()
        getattr(self, self.EXPERIMENTS[self.config.experiment])()
        write_json(self._output('config.json'), self.config.to_dict())
        elapsed = time.perf_counter() - started

        manifest = Manifest(
            experiment=self.config.experiment,
            config_digest=config_digest(self.config.digest_view()),
            tool_version=__version__,
            root_seed=self.config.root_seed,
            wall_clock_seconds=round(elapsed, 3),
            outputs={name: sha256_file(path) for name, path in self.outputs.items()},
            summary=self.summary,
        )
        write_json(self.output_dir / 'manifest.json', manifest.to_dict())
        logger.info("wrote %d outputs to %s in %.1fs", len(self.outputs), self.output_dir, elapsed)
        return manifest

    def _output(self, name: str) -> Path:
        path = self.output_dir / name
        self.outputs[name] = path
        return path

    def _csv(self, name: str, header: List[str], rows) -> None:
        write_csv(self._output(name), header, rows)

    def _plot(self, name: str, series, **labels) -> None:
        if self.config.plots:
            svg_polyline(self._output(name), series, **labels)

    def _checkpoints(self) -> List[int]:
        if self.config.times:
            return sorted({self.grid.index_of(t) for t in self.config.times})
        return sorted(set(np.linspace(0, self.grid.n_steps, CHECKPOINTS).round().astype(int).tolist()))

    # filter-bench

    def _filter_bench(self):
        if self.scenario.is_mixture:
            self._kushner_convergence()
            self._particle_vs_exact()
        else:
            self._particle_vs_kalman()
        self._innovation_check()

    def _kushner_convergence(self):
        n_paths = int(self.mc['n_paths'])
        _, _, paths = simulate_with_latent(self.scenario, self.obs_model, self.grid,
                                           self.stream.child(BENCH_STREAM), n_paths)
        evidence = initial_evidence(self.scenario, self.obs_model, paths.values[0])
        reference = exact_discrete_filter(paths, self.scenario, self.obs_model,
                                          initial_log_likelihood=evidence).probs
        strides = [s for s in BENCH_STRIDES if self.grid.n_steps % s == 0 and self.grid.n_steps // s >= 2]

        rows = []
        for stride in strides:
            worst, clips = np.empty(n_paths), 0
            for p in range(n_paths):
                coarse = paths.path(p).subsample(stride)
                kushner = kushner_filter(coarse, self.scenario, self.obs_model,
                                         initial_log_likelihood=None if evidence is None else evidence[p])
                worst[p] = np.max(total_variation(kushner.probs, reference[::stride, p]))
                clips += kushner.clip_count
            if clips:
                logger.warning("Kushner integrator clipped %d simplex entries at stride %d", clips, stride)
            dt = float(np.mean(paths.grid.subgrid(stride).dt))
            rows.append((dt, float(worst.mean()), float(worst.max()), clips))
        self._csv('filter_convergence.csv', ['dt', 'mean_tv', 'max_tv', 'clip_events'], rows)

        dts = np.array([row[0] for row in rows])
        tvs = np.array([row[1] for row in rows])
        self.summary['finest_mean_tv'] = float(tvs[0])
        if len(rows) > 1 and np.all(tvs > 0):
            self.summary['convergence_order'] = float(np.polyfit(np.log(dts), np.log(tvs), 1)[0])
        self._plot('filter_convergence.svg', {'mean TV': (np.log10(dts), np.log10(tvs))},
                   title='Kushner vs exact filter', xlabel='log10 dt', ylabel='log10 mean TV')

    def _particle_vs_exact(self):
        count = min(int(self.mc['n_paths']), PARTICLE_PATHS)
        _, _, paths = simulate_with_latent(self.scenario, self.obs_model, self.grid,
                                           self.stream.child(BENCH_STREAM), count)
        tv = np.empty((len(self.grid), count))
        ess = np.empty((len(self.grid), count))
        for p in range(count):
            path = paths.path(p)
            exact = exact_discrete_filter(path, self.scenario, self.obs_model)
            particles = particle_filter(path, self.scenario, self.obs_model, int(self.mc['n_particles']),
                                        self.stream.child(PARTICLE_STREAM, p))
            tv[:, p] = total_variation(particles.probs, exact.probs)
            ess[:, p] = particles.ess
        rows = [(float(t), float(d), float(e))
                for t, d, e in zip(self.grid.t_points, tv.mean(axis=1), ess.min(axis=1))]
        self._csv('particle_filter.csv', ['t', 'mean_tv', 'min_ess'], rows)
        self.summary['particle_max_tv'] = float(tv.max())

    def _particle_vs_kalman(self):
        _, _, paths = simulate_with_latent(self.scenario, self.obs_model, self.grid,
                                           self.stream.child(BENCH_STREAM), 1)
        path = paths.path(0)
        kb_means, kb_vars = kalman_bucy(path, self.scenario.mean, self.scenario.variance)
        particles = particle_filter(path, self.scenario, self.obs_model, int(self.mc['n_particles']),
                                    self.stream.child(PARTICLE_STREAM))
        rows = [(float(t), float(pm[0]), float(km[0]), float(pv[0]), float(kv[0]))
                for t, pm, km, pv, kv in zip(self.grid.t_points, particles.means, kb_means,
                                             particles.variances, kb_vars)]
        self._csv('particle_vs_kalman.csv', ['t', 'pf_mean', 'kb_mean', 'pf_var', 'kb_var'], rows)
        self.summary['max_mean_error_in_sd'] = float(np.max(np.abs(particles.means - kb_means) / np.sqrt(kb_vars)))
        self.summary['max_variance_rel_error'] = float(np.max(np.abs(particles.variances / kb_vars - 1.0)))
        self._plot('particle_vs_kalman.svg',
                   {'particle mean': (self.grid.t_points, particles.means[:, 0]),
                    'Kalman-Bucy mean': (self.grid.t_points, kb_means[:, 0])},
                   title='Particle filter vs Kalman-Bucy', xlabel='t', ylabel='posterior mean')

    def _innovation_check(self):
        n_paths = int(self.mc['n_paths'])
        _, _, paths = simulate_with_latent(self.scenario, self.obs_model, self.grid,
                                           self.stream.child(INNOVATION_STREAM), n_paths)
        if self.scenario.is_mixture:
            evidence = initial_evidence(self.scenario, self.obs_model, paths.values[0])
            posterior = exact_discrete_filter(paths, self.scenario, self.obs_model,
                                              initial_log_likelihood=evidence)
        else:
            means, _ = kalman_bucy(paths, self.scenario.mean, self.scenario.variance)
            posterior = PosteriorTrajectory(grid=self.grid, h_bar=means[:-1])
        stats = innovation_statistics(extract_innovation(paths, posterior, self.obs_model, self.scenario))
        rows = [
            ('mean', stats['mean'], 4.0 * stats['mean_stderr'], abs(stats['mean']) <= 4.0 * stats['mean_stderr']),
            ('variance_ratio', stats['variance_ratio'], 0.05, abs(stats['variance_ratio'] - 1.0) <= 0.05),
            ('lag1_autocorrelation', stats['lag1'], 4.0 * stats['lag1_stderr'],
             abs(stats['lag1']) <= 4.0 * stats['lag1_stderr']),
        ]
        self._csv('innovation_check.csv', ['check', 'value', 'bound', 'passed'], rows)
        self.summary['innovation_checks_passed'] = all(row[3] for row in rows)

    # mi-curve

    def _statistics(self) -> List[Optional[str]]:
        if self.config.statistic is not None:
            return [self.config.statistic]
        if self.scenario.is_mixture:
            return list(self.scenario.statistic_names())
        return [None]

    def _mi_curve(self):
        stream = self.stream.child(MI_STREAM)
        n_paths = int(self.mc['n_paths'])
        linear = self.obs_model.variant == 'linear-bridge'
        series = {}
        for statistic in self._statistics():
            name = statistic or 'V'
            estimate = mi_general(self.scenario, self.obs_model, self.grid, statistic, n_paths, stream,
                                  threads=self.threads)
            self._csv(f'mi_curve_{name}.csv', ['t', 'integrand', 'cumulative_mi', 'stderr'], estimate.rows())
            series[name] = (estimate.times, estimate.total_curve)
            info = {'value': float(estimate.total_curve[-1]), 'stderr': estimate.std_error,
                    'i0_method': estimate.i0_method}

            if self.scenario.is_mixture:
                cap = self.scenario.entropy(statistic or COMPONENT)
                crossed = np.nonzero(estimate.total_curve >= 0.5 * cap)[0]
                info['entropy'] = cap
                info['half_cap_crossing'] = float(estimate.times[crossed[0]]) if crossed.size else None
            elif self.obs_model.variant == 'static':
                t_end = float(self.grid.t_points[-1])
                info['closed_form'] = 0.5 * self.scenario.dim * float(np.log1p(self.scenario.variance * t_end))

            if linear:
                lin = mi_linear(self.score_model, self.grid, statistic, n_paths, stream, threads=self.threads)
                self._csv(f'mi_linear_{name}.csv', ['t', 'integrand', 'cumulative_mi', 'stderr'], lin.rows())
                info['linear_value'] = float(lin.total_curve[-1])
                info['linear_stderr'] = lin.std_error
                if self.scenario.is_mixture and self.scenario.dim == 1:
                    self._oracle_table(name, statistic, lin)
            if self.scenario.is_mixture and self.config.times and self.scenario.n_components <= 4:
                self._dpi_table(name, statistic, stream)
            self.summary[f'mi_{name}'] = info

        if linear and self._statistics()[0] in (None, COMPONENT):
            gap = mi_score_gap(self.score_model, self.grid, n_paths, stream, threads=self.threads)
            self._csv('mi_score_gap.csv', ['t', 'integrand', 'cumulative_mi', 'stderr'], gap.rows())
            self.summary['mi_score_gap'] = {'value': float(gap.total_curve[-1]), 'stderr': gap.std_error}
        self._plot('mi_curves.svg', series, title='I(Y_[0,t]; phi)', xlabel='t', ylabel='nats')

    def _oracle_table(self, name: str, statistic: Optional[str], estimate):
        times = self.config.times or np.linspace(0.0, self.grid.t_points[-1], ORACLE_POINTS + 1)[1:].tolist()
        rows = []
        for t in times:
            oracle = mi_quadrature_oracle(self.scenario, self.schedule.T - t, self.schedule.alpha, statistic)
            rows.append((float(t), oracle, estimate.at(t), estimate.stderr_at(t)))
        self._csv(f'mi_oracle_{name}.csv', ['t', 'oracle', 'mi_linear', 'stderr'], rows)

    def _dpi_table(self, name: str, statistic: Optional[str], stream: RandomStream):
        report = dpi_check(self.scenario, self.obs_model, self.grid, statistic, int(self.mc['n_paths']),
                           stream, self.config.times, bins=int(self.mc['bins']), threads=self.threads)
        rows = [(r.t, r.i_full, r.i_full_se, r.i_pi, r.i_pi_se, r.i_projection, r.i_projection_se,
                 r.sufficiency_holds(), r.dpi_holds()) for r in report.rows]
        self._csv(f'dpi_check_{name}.csv',
                  ['t', 'i_path', 'i_path_stderr', 'i_posterior', 'i_posterior_stderr',
                   'i_projection', 'i_projection_stderr', 'sufficiency_holds', 'dpi_holds'], rows)

    # fork

    def _fork(self):
        config = ForkConfig(tau_list=tuple(self.config.times) or None, k=int(self.mc['k']),
                            n_seeds=int(self.mc['n_seeds']), sampler=self.sampler,
                            tau_count=int(self.mc['tau_count']))
        report = run_forking(self.score_model, self.scenario, config, self.grid,
                             self.stream.child(FORK_STREAM), threads=self.threads)
        self._csv('fork_histograms.csv', ['seed', 'tau', 'attribute', 'label', 'count'], report.histogram_rows())
        self._csv('fork_entropy.csv', ['tau', 'attribute', 'mean_entropy', 'stderr'], report.aggregate_rows())

        series = {}
        for attribute in report.attributes:
            means, _ = report.curve(attribute)
            series[attribute] = (np.array(report.taus), means)
            self.summary[f'fork_{attribute}'] = {
                'prior_entropy': self.scenario.entropy(attribute),
                'initial_entropy': float(means[0]),
                'final_entropy': float(means[-1]),
                'half_entropy_crossing': report.half_entropy_crossing(attribute, self.scenario.entropy(attribute)),
            }
        self.summary['ties'] = report.ties
        self._plot('fork_entropy.svg', series, title='Forking entropy', xlabel='tau', ylabel='nats')

    # bridge-check

    def _targets(self) -> np.ndarray:
        if self.scenario.is_mixture:
            return self.scenario.renderings
        return self.scenario.mean[None, :]

    def _bridge_check(self):
        if self.obs_model.variant != 'linear-bridge':
            raise ScenarioError("bridge-check needs a linear-bridge observation model")
        n_paths = int(self.mc['n_paths'])
        dim = self.scenario.dim
        y0 = np.zeros(dim)
        checkpoints = self._checkpoints()
        moment_rows, terminal_rows, hit_rows = [], [], []
        series = {}
        worst_ratio = 0.0
        for k, v in enumerate(self._targets()):
            paths = simulate_bridge(v, self.obs_model, self.grid, self.stream.child(BRIDGE_STREAM, k),
                                    y0=y0, n_paths=n_paths)
            for index in checkpoints:
                t = float(self.grid.t_points[index])
                values = paths.values[index]
                mean, var = analytic_bridge_moments(y0, v, t, self.schedule)
                empirical_var = float(np.mean(np.var(values, axis=0, ddof=1)))
                moment_rows.append((k, t, float(values[:, 0].mean()), float(mean[0]),
                                    float(values[:, 0].std(ddof=1) / np.sqrt(n_paths)),
                                    empirical_var, var))
            t_end = float(self.grid.t_points[-1])
            mean, var = analytic_bridge_moments(y0, v, t_end, self.schedule)
            squared = float(np.mean(np.sum((paths.terminal - v) ** 2, axis=-1)))
            analytic = float(np.sum((mean - v) ** 2) + dim * var)
            terminal_rows.append((k, squared, analytic, squared / analytic))
            worst_ratio = max(worst_ratio, abs(squared / analytic - 1.0))
            if self.scenario.is_mixture:
                counts = np.bincount(terminal_hitting_report(paths, self.scenario).components,
                                     minlength=self.scenario.n_components)
                hit_rows.extend((k, j, int(c)) for j, c in enumerate(counts))
            series[f'target {k}'] = (self.grid.t_points, paths.values[:, :, 0].mean(axis=1))

        self._csv('bridge_moments.csv',
                  ['target', 't', 'empirical_mean', 'analytic_mean', 'mean_stderr',
                   'empirical_variance', 'analytic_variance'], moment_rows)
        self._csv('terminal_pinning.csv', ['target', 'mean_sq_error', 'analytic_mean_sq_error', 'ratio'],
                  terminal_rows)
        if hit_rows:
            self._csv('terminal_hitting.csv', ['target', 'component', 'count'], hit_rows)
        self.summary['max_terminal_ratio_deviation'] = worst_ratio
        self._plot('bridge_means.svg', series, title='Bridge mean trajectories', xlabel='t', ylabel='E[Y_t]')

    # joint-vs-bridge

    def _joint_vs_bridge(self):
        n_paths = int(self.mc['n_paths'])
        K = self.scenario.n_components
        joint = simulate_joint_system(self.scenario, self.obs_model, self.grid,
                                      self.stream.child(JOINT_STREAM), n_paths=n_paths)
        bridge_stream = self.stream.child(BRIDGE_STREAM)
        _, v = draw_latents(self.scenario, bridge_stream, n_paths)
        bridge = simulate_bridge(v, self.obs_model, self.grid, bridge_stream, n_paths=n_paths)
        sampled = sample(self.sampler.method, self.score_model, self.grid, self.stream.child(SAMPLER_STREAM),
                         self.sampler, n_paths=n_paths)

        frequencies = {name: terminal_hitting_report(path, self.scenario).frequencies(K)
                       for name, path in (('joint', joint.y_path), ('bridge', bridge), ('sampler', sampled))}
        weights = self.scenario.weights
        binomial_se = np.sqrt(weights * (1.0 - weights) / n_paths)
        rows = [(k, float(weights[k]), float(frequencies['joint'][k]), float(frequencies['bridge'][k]),
                 float(frequencies['sampler'][k]), float(binomial_se[k])) for k in range(K)]
        self._csv('component_frequencies.csv',
                  ['component', 'prior_weight', 'joint_frequency', 'bridge_frequency', 'sampler_frequency',
                   'binomial_stderr'], rows)

        a, b = joint.y_path.terminal, bridge.terminal
        z = (a.mean(axis=0) - b.mean(axis=0)) / np.sqrt((a.var(axis=0, ddof=1) + b.var(axis=0, ddof=1)) / n_paths)
        moment_rows = [(n, float(a[:, n].mean()), float(b[:, n].mean()), float(a[:, n].var(ddof=1)),
                        float(b[:, n].var(ddof=1)), float(z[n])) for n in range(self.scenario.dim)]
        self._csv('terminal_moments.csv',
                  ['coordinate', 'joint_mean', 'bridge_mean', 'joint_variance', 'bridge_variance', 'mean_z'],
                  moment_rows)

        with np.errstate(divide='ignore', invalid='ignore'):
            deviation = np.abs(frequencies['joint'] - weights) / binomial_se
        self.summary['sampler'] = self.sampler.method
        self.summary['max_joint_frequency_z'] = float(np.max(deviation))
        self.summary['max_terminal_mean_z'] = float(np.max(np.abs(z)))
        self.summary['joint_clip_events'] = joint.clip_count
