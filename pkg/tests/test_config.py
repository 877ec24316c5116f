from pathlib import Path

import pytest
import yaml

from vflguard.config import ConfigError, RunConfig, from_dict, load_config, set_dotted

SHIPPED = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.yaml"))


def test_defaults():
    cfg = from_dict({})
    assert cfg.seed == 0 and cfg.model.d_emb == 16 and cfg.training.batch_size == 64
    assert cfg.defense.build().is_vanilla
    assert cfg.attack.epochs == 5 and cfg.attack.hidden is None


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.name)
def test_shipped_configs_load(path):
    assert isinstance(load_config(path), RunConfig)


def test_lambda_key():
    assert from_dict({"defense": {"lambda": 0.5, "alpha_r": 0.1}}).defense.lam == 0.5
    with pytest.raises(ConfigError):
        from_dict({"defense": {"lambda": 0.5, "lam": 0.5}})


def test_dump_round_trip():
    cfg = from_dict({"seed": 9, "defense": {"alpha_d": 0.1, "lambda": 2.0}, "sweep": {"grid": {"seed": [1, 2]}}})
    assert from_dict(yaml.safe_load(cfg.dump())) == cfg


@pytest.mark.parametrize("raw, fragment", [
    ({"traning": {}}, "traning"),
    ({"training": {"n_batch": 3}}, "training.n_batch"),
    ({"data": {"synthetic": {"rows": 3}}}, "data.synthetic.rows"),
    ({"data": {"source": "parquet"}}, "data.source"),
    ({"data": {"source": "csv", "csv": {"path": "/nonexistent.csv", "ownership": {"a": "passive"}}}}, "exist"),
    ({"data": {"splits": [0.5, 0.5, 0.5]}}, "splits"),
    ({"training": {"batch_size": 1}}, "training"),
    ({"training": {"transport": "grpc"}}, "transport"),
    ({"optimizer": {"momentum": 1.0}}, "optimizer"),
    ({"defense": {"alpha_r": -1.0}}, "defense"),
    ({"seed": -1}, "seed"),
    ({"seed": None}, "seed"),
    ({"model": "big"}, "model"),
])
def test_invalid(raw, fragment):
    with pytest.raises(ConfigError, match=fragment):
        from_dict(raw)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.yaml")
    (tmp_path / "bad.yaml").write_text("seed: [1,\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(tmp_path / "list.yaml")
    (tmp_path / "empty.yaml").write_text("")
    assert load_config(tmp_path / "empty.yaml") == from_dict({})


def test_replace_and_dotted():
    cfg = from_dict({}).replace(**{"defense.alpha_n": 0.01, "seed": 4})
    assert cfg.defense.alpha_n == 0.01 and cfg.seed == 4
    with pytest.raises(ConfigError):
        set_dotted({"defense": {}}, "defense.alpha_q", 1)
    with pytest.raises(ConfigError):
        set_dotted({}, "nope.alpha_n", 1)
