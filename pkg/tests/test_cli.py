import glob
import json
import math
import os
import shutil
import subprocess

import pytest

from kubo_lattice.cli import main, run, convergence_report
from kubo_lattice.config import (
    ConfigError,
    RunConfig,
    apply_override,
    config_from_dict,
    config_to_dict,
    parse_config,
    serialize_config,
)


def test_empty_document_gives_defaults():
    cfg = parse_config("{}")
    assert cfg == RunConfig()
    assert cfg.model.name == "graphene"
    assert cfg.computation == "conductivity"
    assert cfg.numerics.mesh_n == 600
    assert cfg.output.formats == ("json", "csv")


def test_unknown_key_is_named_in_the_error():
    with pytest.raises(ConfigError, match="'latice'"):
        parse_config('{"latice": {"L": 2}}')
    with pytest.raises(ConfigError, match="'size'"):
        parse_config('{"lattice": {"size": 2}}')


def test_parse_error_reports_line_and_column():
    with pytest.raises(ConfigError, match=r"line 2, column"):
        parse_config('{\n  "model": }')


def test_value_validation():
    cases = [
        ('{"numerics": {"mesh_n": 0}}', "positive integer"),
        ('{"numerics": {"mesh_n": true}}', "positive integer"),
        ('{"numerics": {"beta": -3}}', "beta must be positive"),
        ('{"numerics": {"omegas": [0.1, -0.2]}}', "must be positive"),
        ('{"model": {"name": "graphane"}}', "unknown model preset"),
        ('{"model": {"params": {"t": "strong"}}}', "must be a number"),
        ('{"model": {"params": {"hopping": 2}}}', "bad parameter"),
        ('{"lattice": {"preset": "kagome"}}', "unknown lattice preset"),
        ('{"lattice": {"L": 0}}', "positive integer"),
        ('{"computation": "fft"}', "unknown computation"),
        ('{"output": {"formats": ["yaml"]}}', "unknown output format"),
        ('{"output": {"directory": ""}}', "nonempty"),
    ]
    for text, fragment in cases:
        with pytest.raises(ConfigError, match=fragment):
            parse_config(text)


def test_serialization_round_trip():
    cfg = config_from_dict({
        "model": {"name": "haldane_topological", "params": {"t2": 0.2}},
        "lattice": {"L": 3},
        "computation": "chern",
        "numerics": {"mesh_n": 48, "omegas": [0.1, 0.01], "beta": 8.0},
        "output": {"directory": "out", "formats": ["json"]},
    })
    assert parse_config(serialize_config(cfg)) == cfg
    # canonical form: serializing twice is a fixed point
    assert serialize_config(parse_config(serialize_config(cfg))) == serialize_config(cfg)


def test_overrides():
    cfg = RunConfig()
    cfg = apply_override(cfg, "numerics.mesh_n", "240")
    assert cfg.numerics.mesh_n == 240
    cfg = apply_override(cfg, "model.name", "gapped_graphene")
    assert cfg.model.name == "gapped_graphene"
    # new keys are allowed under model.params only
    cfg = apply_override(cfg, "model.params.m", "0.75")
    assert cfg.model.params == {"m": 0.75}
    with pytest.raises(ConfigError, match="unknown override path"):
        apply_override(cfg, "numerics.meshn", "100")
    with pytest.raises(ConfigError, match="unknown override path"):
        apply_override(cfg, "lattice.size", "3")
    with pytest.raises(ConfigError, match="unknown override path"):
        apply_override(cfg, "mesh_n.deep.path", "1")


def test_run_rejects_unknown_computation():
    with pytest.raises(ConfigError, match="unknown computation"):
        run(RunConfig(computation="bogus"))


def chern_argv(outdir, *extra):
    return ["chern", "--set", "model.name=haldane_topological",
            "--set", "numerics.mesh_n=12", "--outdir", str(outdir), *extra]


def test_chern_end_to_end(tmp_path, capsys):
    assert main(chern_argv(tmp_path)) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    path = tmp_path / "chern.json"
    assert printed == [str(path)]
    payload = json.loads(path.read_text())
    assert set(payload) == {"data", "provenance"}
    assert payload["data"]["chern"] == 1
    assert payload["data"]["per_band"] == [1, -1]
    assert payload["data"]["config"]["model"]["name"] == "haldane_topological"
    assert "artifact_version" in payload["provenance"]
    assert not glob.glob(str(tmp_path / ".tmp-*"))


def test_rerun_data_payload_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert main(chern_argv(tmp_path / sub)) == 0
    payloads = [json.loads((tmp_path / sub / "chern.json").read_text())
                for sub in ("a", "b")]
    blobs = [json.dumps(p["data"], sort_keys=True).encode() for p in payloads]
    assert blobs[0] == blobs[1]


def test_outdir_precedence(tmp_path, monkeypatch):
    cfg_dir = tmp_path / "from_config"
    env_dir = tmp_path / "from_env"
    flag_dir = tmp_path / "from_flag"
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({
        "model": {"name": "haldane_topological"},
        "numerics": {"mesh_n": 12},
        "output": {"directory": str(cfg_dir)},
    }))
    base = ["chern", "--config", str(config_path)]

    monkeypatch.delenv("KUBO_LATTICE_OUTDIR", raising=False)
    assert main(base) == 0
    assert (cfg_dir / "chern.json").exists()

    monkeypatch.setenv("KUBO_LATTICE_OUTDIR", str(env_dir))
    assert main(base) == 0
    assert (env_dir / "chern.json").exists()

    assert main(base + ["--outdir", str(flag_dir)]) == 0
    assert (flag_dir / "chern.json").exists()


def test_ward_check_csv_shape(tmp_path):
    # L = 2: on the one-cell torus the first bond wraps a site onto itself,
    # so its divergence term vanishes and the flip control would be vacuous
    argv = ["ward-check", "--set", "model.name=haldane_topological",
            "--set", "lattice.L=2", "--set", "numerics.u_list=[0.0,0.2]",
            "--outdir", str(tmp_path)]
    assert main(argv) == 0
    lines = (tmp_path / "ward-check_ward.csv").read_text().strip().splitlines()
    assert lines[0] == "U,residual,flipped_residual"
    assert len(lines) == 3
    for line in lines[1:]:
        u, residual, flipped = line.split(",")
        assert float(residual) < 1e-12
        assert float(flipped) > 0.1
    payload = json.loads((tmp_path / "ward-check.json").read_text())
    assert payload["data"]["max_residual"] < 1e-12


def test_units_flag_scales_by_two_pi(tmp_path):
    argv = ["ed-ustability", "--set", "model.name=haldane_topological",
            "--set", "lattice.L=1", "--set", "numerics.u_list=[0.05]"]
    assert main(argv + ["--outdir", str(tmp_path / "nat")]) == 0
    assert main(argv + ["--units", "e2h", "--outdir", str(tmp_path / "e2h")]) == 0
    nat = json.loads((tmp_path / "nat" / "ed-ustability.json").read_text())
    e2h = json.loads((tmp_path / "e2h" / "ed-ustability.json").read_text())
    s_nat = nat["data"]["rows"][0]["sigma12"]
    s_e2h = e2h["data"]["rows"][0]["sigma12"]
    assert abs(s_nat) > 0.01
    assert s_e2h == pytest.approx(2.0 * math.pi * s_nat, rel=1e-12)


def test_config_error_exit_code(tmp_path, capsys):
    code = main(["chern", "--set", "numerics.mesh_n=0",
                 "--outdir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["kind"] == "config"
    assert err["error"]["exit_code"] == 2


def test_computation_error_exit_code(tmp_path, capsys):
    # the scan needs a spinless model; default graphene is spinful
    code = main(["ed-ustability", "--outdir", str(tmp_path)])
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["kind"] == "computation"
    assert "spinless" in err["error"]["message"]


def test_io_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("plain file")
    code = main(chern_argv(blocker / "nested"))
    assert code == 4
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "io"


def test_convergence_sweep(tmp_path):
    argv = ["convergence", "--parameter", "mesh_n", "--values", "[12,18]",
            "--set", "computation=chern",
            "--set", "model.name=haldane_topological",
            "--outdir", str(tmp_path)]
    assert main(argv) == 0
    payload = json.loads((tmp_path / "convergence_mesh_n.json").read_text())
    rows = payload["data"]["rows"]
    assert [r["mesh_n"] for r in rows] == [12, 18]
    assert [r["chern"] for r in rows] == [1, 1]
    assert rows[0]["diff_chern"] is None
    assert rows[1]["diff_chern"] == 0
    lines = (tmp_path / "convergence_mesh_n_convergence.csv").read_text().strip().splitlines()
    assert lines[0].startswith("mesh_n,chern,")
    assert len(lines) == 3


def test_convergence_validation():
    cfg = config_from_dict({"computation": "chern",
                            "model": {"name": "haldane_topological"}})
    with pytest.raises(ConfigError, match="unknown convergence parameter"):
        convergence_report(cfg, "granularity", [1, 2])
    with pytest.raises(ConfigError, match="nonempty"):
        convergence_report(cfg, "mesh_n", [])


def test_convergence_values_must_be_json_list(tmp_path, capsys):
    code = main(["convergence", "--parameter", "mesh_n", "--values", "12",
                 "--set", "computation=chern", "--outdir", str(tmp_path)])
    assert code == 2
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "config"


def test_console_script_is_installed(tmp_path):
    exe = shutil.which("kubo-lattice")
    assert exe, "console script not on PATH"
    proc = subprocess.run(
        [exe, "chern", "--set", "model.name=haldane_topological",
         "--set", "numerics.mesh_n=12", "--outdir", str(tmp_path)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "chern.json").exists()
