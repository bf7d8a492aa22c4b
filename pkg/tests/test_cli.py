import csv
import json

import numpy as np
import pytest

from pgpeis import cli, io as pio
from pgpeis.models import invwishart as iw

QUICK = ["--iterations", "12", "--burn-in", "2", "--N", "6"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(argv):
    return cli.main([str(a) for a in argv])


def test_run_smoke_writes_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["run", "--model", "sv", "--simulate", "T=40", "--output", out, *QUICK]) == 0
    rep = out / "rep000"
    for f in ("draws.csv", "update_rates.csv", "summary.csv", "summary.txt", "timing.csv", "chain.json"):
        assert (rep / f).is_file()
    header, X = pio.read_table(rep / "draws.csv")
    assert header[:3] == ["beta", "delta", "nu"] and header[3:] == ["x_1", "x_20", "x_40"]
    assert X.shape == (10, 6)
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["files"]) >= {"data.csv", "states_true.csv", "rep000/draws.csv"}
    assert "rep000/timing.csv" in man["nondeterministic"]
    for name, digest in man["files"].items():
        assert pio.sha256(out / name) == digest


def test_replications_write_averaged_summary(tmp_path):
    out = tmp_path / "o"
    assert run(["run", "--model", "cev", "--simulate", "T=30", "--replications", "2",
                "--output", out, *QUICK]) == 0
    rows = [read_csv(out / f"rep{r:03d}" / "summary.csv") for r in range(2)]
    avg_text = (out / "summary.txt").read_text()
    assert "averages over 2 replications" in avg_text
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["replication_seeds"]) == 2 and len(set(man["replication_seeds"])) == 2
    assert rows[0][0] == rows[1][0] == ["name", "mean", "sd", "ess"]
    avg = read_csv(out / "summary.csv")
    for j in range(1, len(avg)):
        mean = (float(rows[0][j][1]) + float(rows[1][j][1])) / 2
        assert float(avg[j][1]) == pytest.approx(mean, rel=1e-12)


def test_config_file_errors_name_the_line(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nmodel = sv\n\n[eis]\nR = fifteen\n")
    assert run(["run", "--config", cfg, "--simulate", "T=20"]) == 2
    assert f"{cfg}:5" in capsys.readouterr().err
    cfg.write_text("[run]\nmodel = sv\nflavour = mint\n")
    assert run(["run", "--config", cfg, "--simulate", "T=20"]) == 2
    assert f"{cfg}:3" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nmodel = cev\nN = 7\nsampler = pg\n[simulate]\nT = 25\n")
    args = cli.build_parser().parse_args(["run", "--config", str(cfg), "--N", "9"])
    rc = cli.resolve_config(args)
    assert (rc.model, rc.N, rc.sampler, rc.simulate_T) == ("cev", 9, "pg", 25)


def test_bad_data_row_reported(tmp_path, capsys):
    data = tmp_path / "y.csv"
    data.write_text("0.1\n0.2\nabc\n0.4\n")
    assert run(["run", "--model", "sv", "--data", data, "--output", tmp_path / "o", *QUICK]) == 2
    assert "row 3" in capsys.readouterr().err


def test_ingest_univariate_and_ragged(tmp_path):
    p = tmp_path / "y.csv"
    p.write_text("1.5\n\n-2.0\n3\n")
    assert np.array_equal(pio.ingest(p, "sv"), [1.5, -2.0, 3.0])
    p.write_text("1,2\n3\n")
    with pytest.raises(pio.DataError, match="row 2"):
        pio.ingest(p, "invwishart")


def test_ingest_matrix_rows(tmp_path):
    rng = np.random.default_rng(0)
    Y = []
    for _ in range(4):
        A = rng.standard_normal((5, 5))
        Y.append(A @ A.T + np.eye(5))
    p = tmp_path / "Y.csv"
    pio.write_observations(p, np.array(Y))
    back = pio.ingest(p, "invwishart")
    assert back.shape == (4, 5, 5) and np.array_equal(back, np.array(Y))
    assert len(p.read_text().splitlines()[0].split(",")) == 15
    bad = np.array(Y)
    bad[2] = -np.eye(5)
    pio.write_observations(p, bad)
    with pytest.raises(pio.DataError, match="row 3"):
        pio.ingest(p, "invwishart")


def test_simulate_round_trip(tmp_path):
    out = tmp_path / "s"
    assert run(["simulate", "--model", "invwishart", "--simulate", "T=15,q=3,seed=4",
                "--output", out]) == 0
    Y = pio.ingest(out / "data.csv", "invwishart")
    header, theta = pio.read_table(out / "theta_true.csv")
    assert Y.shape == (15, 3, 3) and header[0] == "nu"
    P = cli.default_params("invwishart", 3)
    _, Y_ref = iw.simulate(P, 15, 4)
    assert np.array_equal(Y, Y_ref)
    _, states = pio.read_table(out / "states_true.csv")
    assert states.shape == (15, 3)


def test_theta_override_and_validation():
    shape = cli._shape_model("sv", 3)
    p = cli.parse_params(shape, "beta=2.0", cli.default_params("sv"))
    assert p.beta == 2.0 and p.delta == cli.default_params("sv").delta
    with pytest.raises(cli.ConfigError):
        cli.parse_params(shape, "gamma=1", cli.default_params("sv"))
    with pytest.raises(cli.ConfigError):
        cli.parse_params(shape, "1,2", cli.default_params("sv"))
    with pytest.raises(cli.ConfigError):
        cli.parse_params(shape, "delta=1.5", cli.default_params("sv"))


def test_diagnose_reads_draws(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["run", "--model", "sv", "--simulate", "T=30", "--output", out, *QUICK]) == 0
    capsys.readouterr()
    assert run(["diagnose", out / "rep000" / "draws.csv", "--output", tmp_path / "d.csv"]) == 0
    assert "beta" in capsys.readouterr().out
    table = read_csv(tmp_path / "d.csv")
    assert table[0] == ["name", "mean", "sd", "ess", "update_rate"] and len(table) == 7


def _digests(out):
    man = json.loads((out / "manifest.json").read_text())
    return {k: v for k, v in man["files"].items() if k.rsplit("/", 1)[-1] not in cli.NONDETERMINISTIC}


def test_worker_count_does_not_change_draws(tmp_path, monkeypatch):
    argv = ["run", "--model", "sv", "--simulate", "T=30", "--replications", "2", *QUICK]
    monkeypatch.setenv(cli.WORKERS_ENV, "1")
    assert run([*argv, "--output", tmp_path / "a"]) == 0
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    assert run([*argv, "--output", tmp_path / "b"]) == 0
    assert _digests(tmp_path / "a") == _digests(tmp_path / "b")


def test_failure_keeps_partial_outputs(tmp_path, monkeypatch):
    real = cli._one_replication
    calls = []

    def flaky(job):
        calls.append(job)
        if len(calls) == 2:
            raise FloatingPointError("boom")
        return real(job)

    monkeypatch.setattr(cli, "_one_replication", flaky)
    out = tmp_path / "o"
    assert run(["run", "--model", "sv", "--simulate", "T=20", "--replications", "3",
                "--output", out, *QUICK]) == 3
    assert "boom" in (out / "failure.txt").read_text()
    assert (out / "rep000" / "draws.csv").is_file()
    assert json.loads((out / "manifest.json").read_text())["failed"] is True


def test_schedule_parsing():
    assert str(cli.parse_schedule("stride 10")) == str(cli.parse_schedule("stride:10"))
    with pytest.raises(cli.ConfigError):
        cli.parse_schedule("sometimes")
