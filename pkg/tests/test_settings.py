"""
Settings Tests
Config file loading, merging and environment overrides
"""
import pytest

import settings
from errors import ConfigError
from workers.pool import parallel_map, resolve_threads


class TestMerge:
    """Tests for recursive config merging"""

    def test_nested_override(self):
        merged = settings.merge({'a': {'b': 1, 'c': 2}, 'd': 3}, {'a': {'c': 5}})
        assert merged == {'a': {'b': 1, 'c': 5}, 'd': 3}

    def test_base_untouched(self):
        base = {'a': {'b': 1}}
        settings.merge(base, {'a': {'b': 2}})
        assert base == {'a': {'b': 1}}

    def test_none_override(self):
        assert settings.merge({'a': 1}, None) == {'a': 1}


class TestLoadConfig:
    """Tests for config.yaml and environment overrides"""

    def test_defaults_without_file(self, tmp_path, monkeypatch):
        monkeypatch.delenv('QUASILOCAL_THREADS', raising=False)
        monkeypatch.delenv('QUASILOCAL_OUTPUT_DIR', raising=False)
        config = settings.load_config(str(tmp_path / 'missing.yaml'))
        assert config == settings.DEFAULTS

    def test_file_values_win(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text('solver:\n  dense_limit: 10\n')
        config = settings.load_config(str(path))
        assert config['solver']['dense_limit'] == 10
        assert config['solver']['factor_rtol'] == settings.DEFAULTS['solver']['factor_rtol']

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv('QUASILOCAL_THREADS', '4')
        monkeypatch.setenv('QUASILOCAL_OUTPUT_DIR', str(tmp_path))
        config = settings.load_config(str(tmp_path / 'missing.yaml'))
        assert config['output']['threads'] == 4
        assert config['output']['directory'] == str(tmp_path)

    def test_bad_env_value(self, tmp_path, monkeypatch):
        monkeypatch.setenv('QUASILOCAL_THREADS', 'many')
        with pytest.raises(ConfigError):
            settings.load_config(str(tmp_path / 'missing.yaml'))

    def test_shipped_config_loads(self):
        config = settings.load_config()
        assert config['inversion']['armijo']['c1'] == pytest.approx(1e-4)


class TestReadYaml:
    """Tests for YAML reading errors"""

    def test_malformed(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text('a: [1, 2\n')
        with pytest.raises(ConfigError):
            settings.read_yaml(str(path))

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / 'list.yaml'
        path.write_text('- 1\n- 2\n')
        with pytest.raises(ConfigError):
            settings.read_yaml(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / 'empty.yaml'
        path.write_text('')
        assert settings.read_yaml(str(path)) == {}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            settings.read_yaml(str(tmp_path / 'nope.yaml'))

    def test_json_is_yaml(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text('{"seed": 3, "ells": [1, 2]}')
        assert settings.read_yaml(str(path)) == {'seed': 3, 'ells': [1, 2]}


class TestWorkerPool:
    """Tests for the bounded worker pool"""

    def test_order_kept(self):
        assert parallel_map(lambda x: x * x, range(10), threads=4) == [x * x for x in range(10)]

    def test_serial(self):
        assert parallel_map(str, [1, 2], threads=1) == ['1', '2']

    def test_config_default(self, monkeypatch):
        monkeypatch.setitem(settings.config['output'], 'threads', 2)
        assert resolve_threads() == 2

    @pytest.mark.parametrize('threads', [0, -2])
    def test_invalid_count(self, threads):
        with pytest.raises(ConfigError):
            resolve_threads(threads)
