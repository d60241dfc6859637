import json
from pathlib import Path

import numpy as np
import pytest

from mcflab import cli, flow, functional, output
from mcflab.config import OUTPUT_ROOT_ENV, ConfigError, load_config

FAST = ["--level", "2", "--t-max", "0.05", "--snapshot-every", "5"]


def _write_cfg(path, text):
    path.write_text(text)
    return path


def test_config_file_and_flag_override(tmp_path):
    cfg_path = _write_cfg(tmp_path / "e.toml", 'ambient = "sphere"\ncurvature = 1.0\nradius = 0.8\ncfl = 0.5\noutput = "out"\n')
    cfg = load_config(cfg_path, {"cfl": 0.25})
    assert cfg.ambient == "sphere" and cfg.radius == 0.8 and cfg.cfl == 0.25
    assert cfg.output_dir() == tmp_path / "out"


@pytest.mark.parametrize(
    "text",
    [
        'ambient = "torus"',
        'ambient = "sphere"\ncurvature = -1.0',
        "snapshot_every = 0",
        "cfl = 0",
        'mesh = "missing.off"',
        "log_weights = [[0.5, 1.0]]",
        "q = 1.5",
        "unknown_key = 1",
        "ceilings = []",
    ],
)
def test_config_validation(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write_cfg(tmp_path / "bad.toml", text))


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert load_config(None, {"name": "x"}).output_dir() == tmp_path / "root" / "x"


def test_flow_analyze_roundtrip_is_deterministic(tmp_path, capsys):
    out = tmp_path / "r"
    snapshots = []
    for _ in range(2):
        assert cli.main(["flow", *FAST, "--write-snapshots", "--out", str(out)]) == 0
        assert cli.main(["analyze", str(out)]) == 0
        snapshots.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert len(snapshots[0]) >= 8
    assert snapshots[0] == snapshots[1]


def test_output_files_carry_header_comments(tmp_path):
    out = tmp_path / "r"
    cli.main(["flow", *FAST, "--out", str(out)])
    cli.main(["analyze", str(out)])
    for name in ("series.csv", "ledger.csv"):
        assert (out / name).read_text().startswith("# ")
    for name in ("report.json", "criteria.json"):
        assert "#" in json.loads((out / name).read_text())


def test_float_formatting():
    assert output.fmt(0.1) == "0.10000000000000001"
    assert output.fmt(float("inf")) == "inf"
    text = output.dumps({"b": 1.0, "a": [np.float64(2.5), None, True]}, "c")
    assert text.index('"#"') < text.index('"a"') < text.index('"b"')
    assert json.loads(text)["a"] == [2.5, None, True]


def test_flow_validation_exit_codes(tmp_path, capsys):
    assert cli.main(["flow", "--mesh", str(tmp_path / "none.off")]) == 2
    assert cli.main(["flow", "--snapshot-every", "0"]) == 2
    assert "snapshot_every" in capsys.readouterr().err


def test_flow_numerical_failure_exit_code(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise flow.SolverError("forced")

    monkeypatch.setattr(flow, "step", broken)
    assert cli.main(["flow", *FAST, "--out", str(tmp_path / "f")]) == 1
    rep = output.read_json(tmp_path / "f" / "report.json")
    assert rep["numerical_failure"] and rep["reason"] == "solver_failure"


def test_blowup_run_exits_zero(tmp_path):
    out = tmp_path / "b"
    assert cli.main(["flow", "--level", "2", "--ceiling", "1e3", "--out", str(out)]) == 0
    rep = output.read_json(out / "report.json")
    assert rep["blew_up"] and rep["reason"] == "curvature_ceiling"
    assert abs(rep["T_est"] - 0.25) < 0.02


def test_analyze_rejects_partial_run_dir(tmp_path):
    (tmp_path / "series.csv").write_text("t\n0\n")
    assert cli.main(["analyze", str(tmp_path)]) == 2
    (tmp_path / "report.json").write_text("{not json")
    assert cli.main(["analyze", str(tmp_path)]) == 2


def test_truncated_run_is_all_finite(tmp_path):
    out = tmp_path / "t"
    cli.main(["flow", *FAST, "--out", str(out)])
    cli.main(["analyze", str(out)])
    crit = output.read_json(out / "criteria.json")
    assert all(e["verdict"] == "finite" for e in crit["criteria"].values())


def test_verify_sobolev_default_corpus(tmp_path):
    assert cli.main(["verify-sobolev", "--level", "3", "--out", str(tmp_path)]) == 0
    rep = output.read_json(tmp_path / "sobolev.json")
    assert rep["pass"] and len(rep["entries"]) == 30
    assert rep["constants"]["c_n"] > 0


def test_verify_sobolev_corpus_file(tmp_path):
    corpus = tmp_path / "c.csv"
    functional.write_corpus(corpus, [functional.Bump(0, 0.5, 1.0, 1.5), functional.Bump(2, 0.4, 1.0)])
    assert cli.main(["verify-sobolev", "--level", "2", "--corpus", str(corpus), "--out", str(tmp_path)]) == 1
    rep = output.read_json(tmp_path / "sobolev.json")
    assert rep["errors"] == 1 and "alpha_free" in rep["entries"][0]["error"]
    empty = tmp_path / "e.csv"
    functional.write_corpus(empty, [])
    assert cli.main(["verify-sobolev", "--level", "2", "--corpus", str(empty), "--out", str(tmp_path)]) == 0
    assert output.read_json(tmp_path / "sobolev.json")["warning"] == "empty corpus"


def test_constants_command(capsys):
    assert cli.main(["constants", "--q", "2.5", "--beta", "2", "--C", "0", "--f-norm", "1", "--H-norm", "0"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["moser"]["nu"] == 4
    assert data["moser"]["Lambda"] == 200
    assert abs(data["sobolev_constant"] - 18.42) < 0.01


def test_oracle_command(capsys):
    assert cli.main(["oracle", "--samples", "3", "--t-end", "0.2"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if not ln.startswith("#")]
    assert lines[0].startswith("t,radius")
    last = [float(x) for x in lines[-1].split(",")]
    assert abs(last[5] - 20.2248) < 1e-3
    assert cli.main(["oracle", "--t-end", "1.0"]) == 2


def test_compare_command(tmp_path, capsys):
    out = tmp_path / "c"
    cli.main(["flow", *FAST, "--out", str(out)])
    assert cli.main(["compare", str(out)]) == 0
    rep = output.read_json(out / "compare.json")
    assert rep["radius_max_rel_err"] < 0.05
    dumb = tmp_path / "d"
    (dumb).mkdir()
    cfg = load_config(None, {"generator": "dumbbell"}).as_dict()
    output.write_json(dumb / "report.json", {"config": cfg}, "x")
    output.write_csv(dumb / "series.csv", [], ["t"], [[0.0]])
    assert cli.main(["compare", str(dumb)]) == 2


@pytest.mark.parametrize("name", ["sphere.toml", "s3_geodesic.toml"])
def test_shipped_configs_load(name):
    cfg = load_config(Path(__file__).parent.parent / "configs" / name)
    assert cfg.level == 4
