"""Command-line entry points, config files, output files."""

import datetime as dt

import numpy as np
import pytest

from dynvol.cli import (_apply_overrides, _dump_config, _read_config_file,
                        main)
from dynvol.harness import study_preset
from dynvol.sde import RngStream, simulate_gbm

SIM_ARGS = ["simulate", "--model", "cir", "--reps", "2", "--series-len", "300",
            "--in-sample", "260", "--seed", "777", "--quiet"]


def test_config_dump_is_parseable(tmp_path, capsys):
    assert main(["config", "--dump", "--model", "sv"]) == 0
    out = capsys.readouterr().out
    assert "lambda = 0.94" in out
    assert "window = 12" in out
    assert "param_kappa = 3.0" in out
    cfg_file = tmp_path / "sv.cfg"
    cfg_file.write_text(out)
    parsed = _read_config_file(cfg_file)
    base = study_preset("sv")
    rebuilt = _apply_overrides(base, parsed)
    assert rebuilt == base  # dump of the defaults is a fixed point


def test_config_file_overrides_and_comments(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("lambda = 0.97  # decay\nwindow = 26\n\nrefit_every = 4\n"
                 "estimators = RiskM,Integ\n")
    cfg = _apply_overrides(study_preset("cir"), _read_config_file(f))
    assert cfg.es.lam == 0.97
    assert cfg.es.n == 26
    assert cfg.hist_window == 26  # window override keeps both in sync
    assert cfg.state_refit_every == 4
    assert cfg.estimators == ("RiskM", "Integ")
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign here\n")
    with pytest.raises(Exception):
        _read_config_file(bad)


def test_dump_config_covers_model_params():
    text = _dump_config(study_preset("gbm"))
    assert "param_mu = 0.03" in text
    assert "param_sigma = 0.26" in text


def test_simulate_end_to_end(tmp_path):
    out = tmp_path / "res"
    assert main(SIM_ARGS + ["--out", str(out)]) == 0
    for name in ("report.csv", "report.txt", "per_rep.csv", "fig2_curve.csv"):
        assert (out / name).is_file()
    per = (out / "per_rep.csv").read_text().strip().splitlines()
    assert len(per) == 1 + 2 * 5  # 2 reps x 5 estimators


def test_simulate_estimator_subset_and_trim(tmp_path):
    out = tmp_path / "res"
    rc = main(SIM_ARGS + ["--estimators", "Hist,RiskM,Integ", "--trim", "0.05",
                          "--out", str(out)])
    assert rc == 0
    report = (out / "report.csv").read_text()
    assert "SemiProxy" not in report
    assert "trimmed_mean" in report


def test_simulate_cli_flags_override_config_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("seed = 1\nn_reps = 5\n")
    out = tmp_path / "res"
    rc = main(SIM_ARGS + ["--config", str(f), "--out", str(out)])
    assert rc == 0
    per = (out / "per_rep.csv").read_text().strip().splitlines()
    # --reps 2 from the command line wins over n_reps in the file
    assert len(per) == 1 + 2 * 5


def test_simulate_rejects_unknown_estimator(tmp_path, capsys):
    rc = main(SIM_ARGS + ["--estimators", "Hist,Nope", "--out",
                          str(tmp_path / "r")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_cli_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(SIM_ARGS + ["--out", str(a)]) == 0
    assert main(SIM_ARGS + ["--out", str(b)]) == 0
    for name in ("report.csv", "per_rep.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.fixture(scope="module")
def levels_csv(tmp_path_factory):
    path = simulate_gbm(study_preset("gbm").params(), 1.0 / 52.0, 340,
                        RngStream(7, 1))
    d0 = dt.date(2016, 1, 8)
    rows = ["date,value"]
    for i, v in enumerate(path.values):
        rows.append(f"{(d0 + dt.timedelta(days=7 * i)).isoformat()},{float(v)!r}")
    p = tmp_path_factory.mktemp("cli_bt") / "levels.csv"
    p.write_text("\n".join(rows) + "\n")
    return p


def test_backtest_end_to_end(tmp_path, levels_csv, capsys):
    f = tmp_path / "bt.cfg"
    f.write_text("er_window = 60\n")
    out = tmp_path / "res"
    rc = main(["backtest", "--data", str(levels_csv), "--frequency", "weekly",
               "--in-sample-end", "220", "--config", str(f),
               "--out", str(out)])
    assert rc == 0
    for name in ("report.csv", "report.txt", "per_rep.csv"):
        assert (out / name).is_file()
    assert "outputs in" in capsys.readouterr().out


def test_backtest_missing_file_is_clean_error(tmp_path, capsys):
    rc = main(["backtest", "--data", str(tmp_path / "nope.csv"),
               "--out", str(tmp_path / "r")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_backtest_date_split(tmp_path, levels_csv):
    f = tmp_path / "bt.cfg"
    f.write_text("er_window = 60\n")
    out = tmp_path / "res"
    split_date = (dt.date(2016, 1, 8) + dt.timedelta(days=7 * 219)).isoformat()
    rc = main(["backtest", "--data", str(levels_csv), "--in-sample-end",
               split_date, "--config", str(f), "--out", str(out)])
    assert rc == 0
