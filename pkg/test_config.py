#!/usr/bin/env python3
"""
Tests for configuration loading, validation, digests and the output writers
"""

import json

import pytest
import yaml

from genfilter.config import ConfigManager
from genfilter.error_handler import ConfigError, WeightCollapseError, format_error
from genfilter.experiment_configs import ExperimentConfig, normalize_scenario, validate_config
from genfilter.utils import config_digest, format_number, write_csv


def minimal(**extra):
    data = {'schema_version': 1, 'experiment': 'mi-curve', 'scenario': {'builtin': 'binary'}}
    data.update(extra)
    return data


def write_yaml(tmp_path, data):
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(data), encoding='utf-8')
    return str(path)


class TestConfigManager:
    def test_defaults_then_file_then_overrides(self, tmp_path):
        path = write_yaml(tmp_path, minimal(root_seed=5, grid={'M': 40}))
        merged = ConfigManager(path, {'root_seed': 9, 'threads': None}).merged()
        assert merged['root_seed'] == 9
        assert merged['threads'] == 1
        assert merged['grid'] == {'M': 40, 'spacing': 'uniform', 'refine_fraction': 0.5}

    def test_json_documents_are_accepted(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text(json.dumps(minimal()), encoding='utf-8')
        config = ConfigManager(str(path)).get_config()
        assert config.experiment == 'mi-curve'

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager(str(tmp_path / 'absent.yaml'))

    def test_non_mapping_document(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text('- just\n- a list\n', encoding='utf-8')
        with pytest.raises(ConfigError):
            ConfigManager(str(path))

    def test_invalid_config_lists_problems(self, tmp_path):
        path = write_yaml(tmp_path, minimal(experiment='nope', threads=0))
        with pytest.raises(ConfigError) as excinfo:
            ConfigManager(path).get_config()
        assert len(excinfo.value.problems) == 2


class TestValidateConfig:
    def test_valid(self):
        assert validate_config(minimal()) == []

    def test_unknown_builtin(self):
        problems = validate_config(minimal(scenario={'builtin': 'octagon'}))
        assert any("is not one of" in p for p in problems)

    def test_times_outside_horizon(self):
        problems = validate_config(minimal(times=[0.5, 1.0]))
        assert any('lies outside' in p for p in problems)

    def test_unknown_statistic(self):
        problems = validate_config(minimal(statistic='colour'))
        assert any("statistic 'colour'" in p for p in problems)

    def test_experiment_scenario_mismatch(self):
        problems = validate_config(minimal(experiment='fork', scenario={'builtin': 'gaussian'}))
        assert any('finite-mixture' in p for p in problems)
        problems = validate_config(minimal(experiment='bridge-check', scenario={'builtin': 'gaussian'}))
        assert any("linear-bridge" in p for p in problems)

    def test_seed_range(self):
        assert validate_config(minimal(root_seed=-1))
        assert validate_config(minimal(root_seed=(1 << 64) - 1)) == []

    def test_snap_terminal_must_be_boolean(self):
        assert validate_config(minimal(sampler={'snap_terminal': True})) == []
        problems = validate_config(minimal(sampler={'snap_terminal': 'yes'}))
        assert any('sampler.snap_terminal' in p for p in problems)

    def test_label_mapping_is_normalized(self):
        scenario = {'weights': [0.5, 0.25, 0.25], 'renderings': [[0.0], [1.0], [2.0]],
                    'attributes': {'side': {'left': [0], 'right': [1, 2]}}}
        assert validate_config(minimal(scenario=scenario)) == []
        assert normalize_scenario(scenario)['attributes'] == {'side': ['left', 'right', 'right']}

    def test_component_with_two_labels(self):
        scenario = {'weights': [0.5, 0.5], 'renderings': [[0.0], [1.0]],
                    'attributes': {'side': {'left': [0, 1], 'right': [1]}}}
        problems = validate_config(minimal(scenario=scenario))
        assert any('has two labels' in p for p in problems)


class TestDigest:
    def test_execution_settings_do_not_change_digest(self):
        a = ExperimentConfig.from_dict(minimal(output_dir='a', threads=1, plots=True))
        b = ExperimentConfig.from_dict(minimal(output_dir='b', threads=4, plots=False))
        assert config_digest(a.digest_view()) == config_digest(b.digest_view())

    def test_seed_changes_digest(self):
        a = ExperimentConfig.from_dict(minimal(root_seed=1))
        b = ExperimentConfig.from_dict(minimal(root_seed=2))
        assert config_digest(a.digest_view()) != config_digest(b.digest_view())


class TestWriters:
    def test_number_text(self):
        assert format_number(0.1) == '0.1'
        assert format_number(True) == 'true'
        assert format_number(3) == '3'

    def test_csv_layout(self, tmp_path):
        path = write_csv(tmp_path / 'out.csv', ['t', 'value'], [(0.0, 1.5), (0.5, False)])
        assert path.read_bytes() == b't,value\n0.0,1.5\n0.5,false\n'

    def test_csv_rejects_ragged_rows(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / 'out.csv', ['t', 'value'], [(0.0,)])


class TestErrorFormatting:
    def test_collapse_diagnostic(self):
        text = format_error(WeightCollapseError("particle weights collapsed", time=0.25, ess=1.2))
        assert 'particle weights collapsed' in text
        assert '0.25' in text

    def test_config_diagnostic_lists_problems(self):
        text = format_error(ConfigError("bad", problems=['first problem', 'second problem']))
        assert 'first problem' in text and 'second problem' in text
