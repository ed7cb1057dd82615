"""Tests for `pushtorch.config` module."""

import pytest
import yaml

from pushtorch import ConfigError
from pushtorch.arm import ArmModel
from pushtorch.config import ExperimentConfig, config_hash, dump_config, load_config


def write(tmp_path, data):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data) if not isinstance(data, str) else data)
    return path


def test_defaults():
    config = load_config()
    assert config.domain == "card"
    assert config.episode.horizon == 32
    assert isinstance(config.arm_model()[0], ArmModel)


def test_roundtrip(tmp_path, tiny_config_file):
    config = load_config(tiny_config_file)
    path = tmp_path / "dumped.yaml"
    dump_config(config, path)
    assert load_config(path) == config
    assert config.policy.hidden_sizes == (16,)
    assert config.ablation_seeds == (0,)


def test_tiny_values(tiny_config_file):
    config = load_config(tiny_config_file)
    assert config.n_envs == 2
    assert config.ppo.minibatch_size == 8
    assert config.ppo.lr == pytest.approx(3e-4)
    assert config.env_kwargs()["episode"].max_steps == 3


@pytest.mark.parametrize(
    "data",
    [
        {"domian": "card"},
        {"ppo": {"learning_rate": 0.1}},
        {"n_envs": "many"},
        {"n_envs": 1.5},
        {"pre_policy": "yes"},
        {"domain": "tray"},
        {"ppo": {"clip_eps": 2.0}},
        {"episode": 3},
        {"arm": [1, 2]},
        {"arm": {"link_lengths": [0.3]}},
    ],
)
def test_invalid_configs(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, data))


def test_unparseable_yaml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "domain: [card"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "- card\n- bump\n"))


def test_exponent_strings(tmp_path):
    config = load_config(write(tmp_path, "ppo:\n  lr: 1e-3\ndistill:\n  lr: 5e-4\n"))
    assert config.ppo.lr == pytest.approx(1e-3)
    assert config.distill.lr == pytest.approx(5e-4)


def test_int_accepted_for_float(tmp_path):
    config = load_config(write(tmp_path, {"reward": {"c2": 500}}))
    assert config.reward.c2 == 500.0
    assert isinstance(config.reward.c2, float)


def test_override():
    config = ExperimentConfig().validate()
    changed = config.override(seed=3, domain="bump", iterations=None)
    assert (changed.seed, changed.domain, changed.iterations) == (3, "bump", config.iterations)
    assert config.seed == 0
    with pytest.raises(ConfigError):
        config.override(colour="red")
    with pytest.raises(ConfigError):
        config.override(domain="tray")


def test_config_hash():
    a = ExperimentConfig().validate()
    assert config_hash(a) == config_hash(ExperimentConfig().validate())
    assert config_hash(a) != config_hash(a.override(seed=1))
    assert len(config_hash(a)) == 64


def test_dump_text_is_yaml():
    text = dump_config(ExperimentConfig().validate())
    assert yaml.safe_load(text)["episode"]["max_steps"] == 300
