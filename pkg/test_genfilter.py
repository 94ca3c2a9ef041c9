#!/usr/bin/env python3
"""
genfilter command-line tests
Drive the CLI the way a user does: through a subprocess, with configuration
files written to a temporary directory
"""

import hashlib
import json
import subprocess
import sys
from pathlib import Path
from typing import Any, Dict, List

import yaml

REPO_ROOT = Path(__file__).resolve().parent


def run_cli(args: List[str], timeout: int = 600) -> subprocess.CompletedProcess:
    """Run genfilter with the given arguments"""
    cmd = [sys.executable, '-m', 'genfilter.cli'] + args
    return subprocess.run(cmd, capture_output=True, text=True, timeout=timeout, cwd=REPO_ROOT)


def write_config(directory: Path, data: Dict[str, Any], name: str = 'experiment.yaml') -> str:
    path = directory / name
    path.write_text(yaml.safe_dump(data), encoding='utf-8')
    return str(path)


def bridge_check_config(**extra) -> Dict[str, Any]:
    config = {
        'schema_version': 1,
        'experiment': 'bridge-check',
        'scenario': {'builtin': 'binary'},
        'grid': {'M': 50},
        'mc': {'n_paths': 100},
        'times': [0.25, 0.5],
        'root_seed': 11,
        'plots': False,
    }
    config.update(extra)
    return config


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestScenarios:
    def test_list_contains_builtins(self):
        result = run_cli(['scenarios', 'list'])
        assert result.returncode == 0, result.stderr
        for name in ('binary', 'ternary', 'quad', 'hierarchy', 'gaussian'):
            assert name in result.stdout

    def test_list_as_json(self):
        result = run_cli(['scenarios', 'list', '--format', 'json'])
        assert result.returncode == 0, result.stderr
        assert 'hierarchy' in result.stdout


class TestValidate:
    def test_valid_config(self, tmp_path):
        path = write_config(tmp_path, bridge_check_config())
        result = run_cli(['validate', '--config', path])
        assert result.returncode == 0, result.stderr
        assert 'configuration is valid' in result.stdout

    def test_missing_weights(self, tmp_path):
        scenario = {'renderings': [[-1.0], [1.0]]}
        path = write_config(tmp_path, bridge_check_config(scenario=scenario))
        result = run_cli(['validate', '--config', path])
        assert 'scenario.weights' in result.stdout

    def test_epsilon_not_below_horizon(self, tmp_path):
        path = write_config(tmp_path, bridge_check_config(schedule={'T': 1.0, 'epsilon': 1.0}))
        result = run_cli(['validate', '--config', path])
        assert 'must be smaller than schedule.T' in result.stdout

    def test_attribute_with_unknown_component(self, tmp_path):
        scenario = {
            'weights': [0.5, 0.5],
            'renderings': [[-1.0], [1.0]],
            'attributes': {'side': {'left': [0], 'right': [1, 2]}},
        }
        path = write_config(tmp_path, bridge_check_config(scenario=scenario))
        result = run_cli(['validate', '--config', path])
        assert 'unknown component' in result.stdout

    def test_collects_every_problem(self, tmp_path):
        data = bridge_check_config(experiment='sample-all', grid={'M': 0}, threads=0)
        path = write_config(tmp_path, data)
        result = run_cli(['validate', '--config', path, '--format', 'json'])
        report = json.loads(result.stdout)
        assert report['valid'] is False
        assert len(report['problems']) >= 3

    def test_missing_file(self, tmp_path):
        result = run_cli(['validate', '--config', str(tmp_path / 'absent.yaml')])
        assert 'absent.yaml' in result.stdout


class TestRun:
    def test_invalid_config_exits_with_status_2(self, tmp_path):
        path = write_config(tmp_path, bridge_check_config(schedule={'epsilon': 2.0}))
        result = run_cli(['run', '--config', path, '--out', str(tmp_path / 'out')])
        assert result.returncode == 2
        assert result.stderr

    def test_bridge_check_is_reproducible(self, tmp_path):
        path = write_config(tmp_path, bridge_check_config())
        first, second = tmp_path / 'first', tmp_path / 'second'
        for out in (first, second):
            result = run_cli(['run', '--config', path, '--out', str(out)])
            assert result.returncode == 0, result.stderr

        for name in ('bridge_moments.csv', 'terminal_pinning.csv', 'terminal_hitting.csv'):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert not (first / 'bridge_means.svg').exists()

        manifests = [json.loads((out / 'manifest.json').read_text()) for out in (first, second)]
        assert manifests[0]['config_digest'] == manifests[1]['config_digest']
        assert manifests[0]['root_seed'] == 11
        for name, digest in manifests[0]['outputs'].items():
            assert sha256(first / name) == digest

    def test_seed_flag_changes_the_draws(self, tmp_path):
        path = write_config(tmp_path, bridge_check_config())
        base, reseeded = tmp_path / 'base', tmp_path / 'reseeded'
        assert run_cli(['run', '--config', path, '--out', str(base)]).returncode == 0
        assert run_cli(['run', '--config', path, '--out', str(reseeded), '--seed', '12']).returncode == 0
        manifest = json.loads((reseeded / 'manifest.json').read_text())
        assert manifest['root_seed'] == 12
        assert (base / 'bridge_moments.csv').read_bytes() != (reseeded / 'bridge_moments.csv').read_bytes()

    def test_weight_collapse_exits_with_status_3(self, tmp_path):
        data = {
            'schema_version': 1,
            'experiment': 'filter-bench',
            'scenario': {'builtin': 'gaussian'},
            'grid': {'M': 50},
            'mc': {'n_particles': 2, 'n_paths': 20},
            'plots': False,
        }
        path = write_config(tmp_path, data)
        out = tmp_path / 'collapse'
        result = run_cli(['run', '--config', path, '--out', str(out)])
        assert result.returncode == 3
        assert (out / 'diagnostic.txt').exists()

    def test_json_summary(self, tmp_path):
        path = write_config(tmp_path, bridge_check_config())
        out = tmp_path / 'json'
        result = run_cli(['run', '--config', path, '--out', str(out), '--format', 'json'])
        assert result.returncode == 0, result.stderr
        summary = json.loads(result.stdout)
        assert summary['experiment'] == 'bridge-check'
        assert 'max_terminal_ratio_deviation' in summary['summary']
