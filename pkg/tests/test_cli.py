import pytest

from dcmom.cli import main

CFG = "T = 10\nd = 2\nseeds = 2\nestimator = [none, mvr]\n"


def test_run_plot_and_output(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CFG)
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 0
    assert "wrote 2 run CSVs" in capsys.readouterr().out
    csvs = sorted((tmp_path / "out" / "runs").glob("*.csv"))
    assert main(["plot", *map(str, csvs), "-o", str(tmp_path / "p.svg")]) == 0
    assert (tmp_path / "p.svg").exists()


def test_invalid_config_exits_2_with_line(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("T = 10\nsigma = oops\n")
    assert main(["run", str(cfg)]) == 2
    assert f"{cfg}:2:" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2


def test_numeric_failure_exits_3(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem.a = 12\ngamma = 1\nsigma = 0\nT = 2000\nd = 1\nseeds = 1\n")
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_bad_thread_env_exits_2(tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CFG)
    monkeypatch.setenv("DCM_THREADS", "zero")
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 2


def test_verify_lb(tmp_path, capsys):
    cfg = tmp_path / "lb.cfg"
    cfg.write_text("gamma = 0.1\neta1 = 0.1\nsigma = 1\nT = 10\nd = 1\nseeds = 500\n")
    assert main(["verify-lb", str(cfg)]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    cfg.write_text("gamma = 0.1\nseeds = 5\n")
    assert main(["verify-lb", str(cfg)]) == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
