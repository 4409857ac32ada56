"""
Tests for experiment configuration loading and validation.
"""

from pathlib import Path

import pytest

from lmpc_core.constants import PROPERTY_TOLERANCE
from lmpc_core.exceptions import ConfigError
from periodic_lmpc.config import config_from_mapping, load_config


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConfig:
    def test_minimal_config_gets_defaults(self, temp_dir):
        path = _write(temp_dir / "run.yaml", "scenario: tiny\niterations: 3\nseed: 7\n")

        config = load_config(path)

        assert config.scenario == "tiny"
        assert config.run_dir == Path("runs") / "tiny-seed7"
        assert config.cache_dir is None
        assert config.toggles.check_invariants
        assert config.toggles.shifted_cost_iterations == []
        assert config.tolerances.property == PROPERTY_TOLERANCE

    def test_nested_sections(self, temp_dir):
        path = _write(
            temp_dir / "run.yaml",
            "\n".join(
                [
                    "scenario: spring-mass",
                    "iterations: 20",
                    "seed: 1",
                    "overrides:",
                    "  horizon: 6",
                    "  theta_scale: 0.5",
                    "toggles:",
                    "  shifted_cost_iterations: [1, 10, 20]",
                    "  dump_safe_sets: true",
                    "extensions:",
                    "  initial_offset_bound: [0.05, 0.0]",
                    "  deviation_bound:",
                    "    A: 0.001",
                ]
            ),
        )

        config = load_config(path)
        spec = config.build_scenario()

        assert spec.lmpc.horizon == 6
        assert config.toggles.shifted_cost_iterations == [1, 10, 20]
        assert config.extensions.deviation_bound.A == 0.001
        assert config.extensions.deviation_bound.B == 0.0

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(temp_dir / "absent.yaml")

    def test_malformed_yaml(self, temp_dir):
        path = _write(temp_dir / "bad.yaml", "scenario: [tiny\n")
        with pytest.raises(ConfigError, match="malformed YAML"):
            load_config(path)

    def test_not_a_mapping(self, temp_dir):
        path = _write(temp_dir / "list.yaml", "- tiny\n- 3\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)


class TestValidation:
    @pytest.mark.parametrize(
        "data",
        [
            {"scenario": "pendulum", "iterations": 3, "seed": 1},
            {"scenario": "tiny", "iterations": 0, "seed": 1},
            {"scenario": "tiny", "iterations": 3, "seed": -1},
            {"scenario": "tiny", "iterations": 3, "seed": 1, "colour": "red"},
            {"scenario": "tiny", "iterations": 3, "seed": 1, "overrides": {"alpha_target": 1.5}},
            {
                "scenario": "tiny",
                "iterations": 3,
                "seed": 1,
                "extensions": {"initial_offset_bound": [-0.1]},
            },
        ],
    )
    def test_rejected(self, data):
        with pytest.raises(ConfigError, match="invalid experiment config"):
            config_from_mapping(data)

    def test_fixed_theta_outside_domain(self):
        config = config_from_mapping(
            {"scenario": "tiny", "iterations": 3, "seed": 1, "overrides": {"fixed_theta": [0.9]}}
        )
        with pytest.raises(ConfigError, match="outside the theta domain"):
            config.build_scenario()

    def test_offset_bound_length(self):
        config = config_from_mapping(
            {
                "scenario": "spring-mass",
                "iterations": 3,
                "seed": 1,
                "extensions": {"initial_offset_bound": [0.1]},
            }
        )
        with pytest.raises(ConfigError, match="needs 2 entries"):
            config.build_scenario()


class TestCliOverrides:
    def test_flags_replace_file_values(self, temp_dir):
        config = config_from_mapping({"scenario": "tiny", "iterations": 3, "seed": 1})

        updated = config.with_cli_overrides(output_dir=temp_dir, seed=9, iterations=None)

        assert updated.seed == 9
        assert updated.iterations == 3
        assert updated.run_dir == temp_dir

    def test_echo_resolves_output_dir(self):
        config = config_from_mapping({"scenario": "tiny", "iterations": 3, "seed": 4})

        echo = config.echo()

        assert echo["output_dir"] == str(Path("runs") / "tiny-seed4")
        assert config_from_mapping(echo).seed == 4
