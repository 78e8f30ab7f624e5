import json

import pytest

from gelfand.config import SCHEMA_VERSION, ConfigError, ExperimentConfig, parse_config


def test_defaults():
    cfg = parse_config(None)
    assert cfg.N == 2 and cfg.p == 1.2 and cfg.domain.kind == "disk"
    assert cfg.rho == [2e-3, 1e-3, 5e-4]
    assert SCHEMA_VERSION == "1.0"


def test_accepts_dict_string_and_path(tmp_path):
    data = {"N": 3, "domain": {"h": 0.03125}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    for src in (data, json.dumps(data), path, str(path)):
        cfg = parse_config(src)
        assert cfg.N == 3 and cfg.domain.h == 0.03125


def test_roundtrip_is_stable():
    cfg = parse_config({"potential": {"kind": "radial", "c2": 2.0}, "seeds": [[0.3, 0.2]]})
    again = ExperimentConfig.model_validate(json.loads(cfg.model_dump_json()))
    assert again == cfg


@pytest.mark.parametrize("bad", [
    {"N": 1},
    {"rho": [0.5]},
    {"rho": []},
    {"p": 1.0},
    {"domain": {"kind": "triangle"}},
    {"unknown": 1},
    {"checks": ["nonsense"]},
    "{not json",
])
def test_rejects_invalid(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.json")
