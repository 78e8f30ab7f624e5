import json

from gelfand.cli import main

COARSE = '{"domain": {"h": 0.03125}}'


def test_degree_exit_zero(capsys):
    assert main(["degree", "--config", COARSE]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["command"] == "degree" and report["status"] == "ok"


def test_bad_config_exits_two(capsys):
    assert main(["degree", "--config", '{"N": 42}']) == 2
    assert "config error" in capsys.readouterr().err


def test_unreadable_config_exits_two(tmp_path):
    assert main(["reduced", "--config", str(tmp_path / "nope.json")]) == 2


def test_semantic_error_exits_two():
    assert main(["solve", "--config", '{"domain": {"h": 0.03125}, "seeds": [[0.0, 0.5]]}']) == 2


def test_out_directory_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["greens", "--config", COARSE, "--out", str(a)]) == 0
    assert main(["greens", "--config", COARSE, "--out", str(b)]) == 0
    capsys.readouterr()
    assert {f.name for f in a.iterdir()} >= {"config.json", "report.json"}
    cfg_a = json.loads((a / "config.json").read_text())
    assert cfg_a["domain"]["h"] == 0.03125
    # identical except for the output path recorded in the config
    ra = (a / "report.json").read_text().replace(str(a), "OUT")
    rb = (b / "report.json").read_text().replace(str(b), "OUT")
    assert ra == rb


def test_p_flag_overrides_config(capsys):
    assert main(["degree", "--config", COARSE, "--p", "1.5"]) == 0
    assert json.loads(capsys.readouterr().out)["config"]["p"] == 1.5
