import pytest

from dagjoint.config import DecoderKind, GraphSource, ScenarioKind, SyntheticSpec, TrainConfig
from dagjoint.errors import ConfigError
from dagjoint.labeling import Heuristic


def test_defaults():
    config = TrainConfig()
    assert (config.k, config.k_prop, config.eps_i, config.gamma) == (6, 15, 2.5, 5.0)
    assert config.heuristic is Heuristic.SPARSE
    assert config.decoder is DecoderKind.FACTORIZED
    assert config.train_graph is GraphSource.LEARNED


def test_json_round_trip(tmp_path):
    config = TrainConfig(seed=3, decay_epochs=[5, 9], heuristic="dense", train_graph="ground_truth")
    assert config.decay_epochs == (5, 9)
    path = tmp_path / "config.json"
    config.dump(path)
    loaded = TrainConfig.load(path)
    assert loaded == config
    assert loaded.spec_hash() == config.spec_hash()
    assert config.replace(seed=4).spec_hash() != config.spec_hash()


def test_to_dict_uses_plain_values():
    doc = TrainConfig().to_dict()
    assert doc["heuristic"] == "sparse"
    assert doc["alpha"] == [1.0, 2.0, 4.0]
    assert SyntheticSpec(kind=["merge"]).to_dict()["kind"] == ["merge"]


@pytest.mark.parametrize("doc", [
    {"learning_rate_typo": 1.0},
    {"k": 0},
    {"decay_epochs": [10, 5]},
    {"alpha": [1.0, 2.0]},
    {"heuristic": "sometimes"},
    {"batch_size": 0},
    {"grad_clip": -1.0},
    {"gamma": -1.0},
])
def test_invalid_train_config(doc):
    with pytest.raises(ConfigError):
        TrainConfig.from_dict(doc)


def test_invalid_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        TrainConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        TrainConfig.from_json("[1, 2]")
    with pytest.raises(ConfigError):
        TrainConfig.load(tmp_path / "absent.json")


def test_presets():
    interaction = TrainConfig.interaction_preset()
    assert (interaction.eps_i, interaction.t_obs, interaction.alpha) == (2.5, 10, (1.0, 2.0, 4.0))
    argoverse = TrainConfig.argoverse_preset(seed=2)
    assert (argoverse.eps_i, argoverse.t_obs, argoverse.alpha, argoverse.seed) == (6.0, 20, (1.0, 4.0, 4.0), 2)


@pytest.mark.parametrize("doc", [
    {"kind": ["roundabout"]},
    {"kind": []},
    {"min_agents": 4, "max_agents": 2},
    {"t_obs": 1},
    {"position_noise": -0.1},
])
def test_invalid_synthetic_spec(doc):
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict(doc)


def test_synthetic_kind_cycle():
    spec = SyntheticSpec(kind=("merge", "congested"))
    assert [spec.kind_for(i) for i in range(3)] == [ScenarioKind.MERGE, ScenarioKind.CONGESTED, ScenarioKind.MERGE]
