import json

import pytest

from cylfold.cli import main
from cylfold.config import Config, ConfigError, emit_config, load_config, parse_config, parse_grid


def test_defaults_round_trip():
    cfg = Config()
    assert parse_config(emit_config(cfg)) == cfg


def test_modified_round_trip():
    text = """
[map]
alpha = -0.03   # shallower fold
arcs = 0.05:0.2, 0.3:0.45, 0.55:0.7, 0.8:0.95
[run]
seed = 7
grid = 256x64
[perturbation]
terms = theta:1:0:0.001:0.0, y:0:2:0.0005:1.5
"""
    cfg = parse_config(text)
    assert cfg.map.alpha == -0.03 and cfg.run.seed == 7 and cfg.run.grid == (256, 64)
    assert cfg.perturbation.terms[1] == ("y", 0, 2, 0.0005, 1.5)
    assert parse_config(emit_config(cfg)) == cfg
    assert len(cfg.perturbation_field()) == 2


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[run]\nbogus = 1\n",
    "[run]\nseed = many\n",
    "[map]\nkind = circle\n",
    "[run]\ngrid = 12\n",
    "not an ini",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_parse_grid():
    assert parse_grid("512x128") == (512, 128)
    assert parse_grid("64 X 32") == (64, 32)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_check_pass(tmp_path, capsys):
    code, out, _ = _run(["check", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "PASS"
    assert json.loads((tmp_path / "check.json").read_text()) == doc


def test_cli_check_fail(tmp_path, capsys):
    cfg = tmp_path / "id.ini"
    cfg.write_text("[map]\nkind = identity\n[run]\ncheck_grid = 256x64\n")
    code, out, _ = _run(["check", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 1 and json.loads(out)["status"] == "FAIL"


def test_cli_config_errors(tmp_path, capsys):
    code, _, err = _run(["check", "--config", str(tmp_path / "missing.ini")], capsys)
    assert code == 2 and json.loads(err)["error"] == "config"
    bad = tmp_path / "bad.ini"
    bad.write_text("[map]\na = 0.3\nb = 0.1\n")
    code, out, _ = _run(["check", "--config", str(bad), "--out", str(tmp_path)], capsys)
    doc = json.loads(out)
    assert code == 1 and doc["conditions"][0] == {**doc["conditions"][0], "condition": "parameters", "status": "FAIL"}
    code, _, err = _run(["estimate", "--grid", "12", "--out", str(tmp_path)], capsys)
    assert code == 2 and "grid" in json.loads(err)["message"]


def test_cli_bad_cover_path(tmp_path, capsys):
    code, _, err = _run(["render", "--cover", str(tmp_path / "none.pgm"), "--out", str(tmp_path)], capsys)
    assert code == 2 and json.loads(err)["error"] == "config"


def test_cli_estimate_and_render(tmp_path, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text("[run]\nsamples = 32\nburn_in = 10\niters = 200\n")
    code, out, _ = _run(["estimate", "--config", str(cfg), "--grid", "128x64", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["grid"] == [128, 64] and doc["seed"] == 42
    pgm = (tmp_path / "cover.pgm").read_bytes()
    assert pgm.startswith(b"P5\n128 64\n255\n")
    code, out, _ = _run(["render", "--cover", str(tmp_path / "cover.pgm"), "--out", str(tmp_path)], capsys)
    assert code == 0 and (tmp_path / "render.pgm").read_bytes() == pgm


def test_cli_pullback(tmp_path, capsys):
    code, out, _ = _run(["pullback", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "PASS" and doc["n"] <= 62 and doc["S_cuts_X"]
    assert (tmp_path / "pullback.csv").read_text().splitlines()[0] == "curve,branch,theta,y"


def test_cli_embed_boxcover_demo(tmp_path, capsys):
    cfg = tmp_path / "e.ini"
    cfg.write_text("[embed]\npoints = 500\niters = 50\n")
    code, out, _ = _run(["embed", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["status"] == "PASS"
    code, out, _ = _run(["boxcover", "--out", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["status"] == "PASS"
    code, out, _ = _run(["demo-appendix-a", "--out", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["attractor"] == [0, 2]


def test_cli_witness_from_cover(tmp_path, capsys, d0):
    from cylfold.attractor import estimate_attractor
    cov = estimate_attractor(d0, samples=256, burn_in=1000, iters=20_000)
    cov.write_pgm(tmp_path / "c.pgm")
    code, out, _ = _run(["witness", "--cover", str(tmp_path / "c.pgm"), "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "PASS" and doc["p"] == [0.875, 0.0]
