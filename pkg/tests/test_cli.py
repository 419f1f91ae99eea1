import json

import pytest

from hellgan.cli import cli_main
from hellgan.experiments import TRACE_HEADER

TINY = dict(n=400, batch_size=100, epochs=3, replications=1, epsilon_grid=[0.0],
            loss_grid=["approx_hd"], bandwidth_grid=[0.5], kde_nodes=4)


def write_cfg(path, **kw):
    path.write_text(json.dumps({**TINY, **kw}))
    return str(path)


def test_train_twice_identical(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    outs = []
    for name in ("a", "b"):
        argv = ["train", "--config", cfg, "--loss", "approx_hd", "--epsilon", "0", "--seed", "7",
                "--out", str(tmp_path / name)]
        assert cli_main(argv) == 0
        outs.append((tmp_path / name / "trace.csv").read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().split("\r\n")
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len([ln for ln in lines if ln]) == 1 + TINY["epochs"]


def test_experiment_creates_files_and_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", loss_grid=["gan", "hd_kde"])
    files = ("replications.csv", "summary.csv", "manifest.json")
    runs = []
    for _ in range(2):
        assert cli_main(["experiment", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        runs.append([(tmp_path / "o" / f).read_bytes() for f in files])
    assert runs[0] == runs[1]


def test_experiment_threads_match_serial(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", replications=2, epsilon_grid=[0.0, 0.1])
    assert cli_main(["experiment", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert cli_main(["experiment", "--config", cfg, "--threads", "2",
                     "--out", str(tmp_path / "p")]) == 0
    for f in ("replications.csv", "summary.csv"):
        assert (tmp_path / "s" / f).read_bytes() == (tmp_path / "p" / f).read_bytes()


def test_covariance_command(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", loss_grid=["hd"], epochs=2)
    codes = [cli_main(["covariance", "--config", cfg, "--out", str(tmp_path / n)])
             for n in ("a", "b")]
    assert codes[0] == codes[1] and codes[0] in (0, 2)
    if codes[0] == 0:
        a = (tmp_path / "a" / "covariance.json").read_bytes()
        assert a == (tmp_path / "b" / "covariance.json").read_bytes()
        assert len(json.loads(a)["Sigma"]) == 18


def test_covariance_rejects_other_losses(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", loss_grid=["gan"])
    assert cli_main(["covariance", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_oracle_is_deterministic(tmp_path):
    argv = ["oracle", "--epsilon", "0.05", "--seed", "3"]
    codes = [cli_main(argv + ["--out", str(tmp_path / n)]) for n in ("a", "b")]
    assert codes[0] == codes[1] and codes[0] in (0, 2)
    a = (tmp_path / "a" / "oracle.json").read_bytes()
    assert a == (tmp_path / "b" / "oracle.json").read_bytes()
    assert json.loads(a)["path"][0]["epsilon"] == 0.05


def test_missing_config_for_experiment(capsys):
    assert cli_main(["experiment"]) == 1
    assert "usage" in capsys.readouterr().err


def test_config_file_that_does_not_exist(tmp_path, capsys):
    assert cli_main(["train", "--config", str(tmp_path / "nope.json")]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_unknown_subcommand_and_flag(capsys):
    assert cli_main(["plot"]) == 1
    assert "usage" in capsys.readouterr().err
    assert cli_main(["train", "--verbose"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 10, "lr": 1}))
    assert cli_main(["experiment", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [["--loss", "mmd"], ["--epsilon", "2"]])
def test_bad_flag_values(tmp_path, bad):
    cfg = write_cfg(tmp_path / "c.json")
    assert cli_main(["train", "--config", cfg, "--out", str(tmp_path)] + bad) == 1
