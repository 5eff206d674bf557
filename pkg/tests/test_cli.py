import json

import numpy as np
import pytest

from sik import cli
from sik.errors import DivergenceError
from sik.files import read_image_csv, read_pgm, write_image_csv
from sik.solvers import IterationTrace, TraceRecord


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, dict(line.split("=", 1) for line in out.splitlines() if "=" in line), err


@pytest.fixture
def phantom(tmp_path, capsys):
    prefix = tmp_path / "p32"
    assert run(capsys, "phantom", "--size", 32, "--out", prefix)[0] == 0
    return prefix


def test_phantom_outputs(tmp_path, capsys):
    prefix = tmp_path / "p64"
    code, kv, _ = run(capsys, "phantom", "--size", 64, "--out", prefix)
    assert code == 0
    rows = (tmp_path / "p64.csv").read_text().split("\n")
    assert rows[-1] == "" and len(rows) == 65
    assert all(len(r.split(",")) == 64 for r in rows[:-1])
    assert (tmp_path / "p64.pgm").read_bytes().startswith(b"P5\n64 64\n255\n")
    manifest = json.loads((tmp_path / "p64.manifest.json").read_text())
    assert manifest["command"] == "phantom" and manifest["config"]["size"] == 64
    assert manifest["pgm_scaling"]["p64.pgm"] == {"min": 0.0, "max": 1.0}
    first = (tmp_path / "p64.csv").read_bytes()
    assert run(capsys, "phantom", "--size", 64, "--out", prefix)[0] == 0
    assert (tmp_path / "p64.csv").read_bytes() == first


def test_phantom_too_small(tmp_path, capsys):
    code, _, err = run(capsys, "phantom", "--size", 8, "--out", tmp_path / "x")
    assert code == 2 and "16" in err


def test_csv_round_trip(tmp_path):
    img = np.random.default_rng(0).standard_normal((5, 7)) * 1e-3
    img[0, 0] = 0.1 + 0.2
    write_image_csv(tmp_path / "a.csv", img)
    np.testing.assert_array_equal(read_image_csv(tmp_path / "a.csv"), img)


def test_pgm_preview_is_lossy_but_scaled(tmp_path, phantom):
    img = read_pgm(phantom.with_name("p32.pgm"))
    truth = read_image_csv(phantom.with_name("p32.csv"))
    assert np.max(np.abs(img - truth)) <= 0.5 / 255 + 1e-12


def test_degrade_identity(tmp_path, capsys, phantom):
    out = tmp_path / "d"
    code, _, _ = run(capsys, "degrade", "--in", f"{phantom}.csv", "--sigma", 0, "--kernel", 1, "--out", out)
    assert code == 0
    assert (tmp_path / "d.csv").read_text() == (tmp_path / "p32.csv").read_text()


def test_degrade_deterministic(tmp_path, capsys, phantom):
    for name in ("a", "b"):
        assert run(capsys, "degrade", "--in", f"{phantom}.csv", "--sigma", 1e-2, "--kernel", 5,
                   "--seed", 7, "--out", tmp_path / name)[0] == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())
    assert manifest["seeds"] == {"noise": 7}


def test_degrade_reads_pgm(tmp_path, capsys, phantom):
    assert run(capsys, "degrade", "--in", f"{phantom}.pgm", "--sigma", 0, "--out", tmp_path / "g")[0] == 0


def test_degrade_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "degrade", "--in", tmp_path / "nope.csv", "--out", tmp_path / "x")
    assert code == 1 and "error" in err


def test_degrade_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,0.2\n0.3,abc\n")
    code, _, err = run(capsys, "degrade", "--in", bad, "--out", tmp_path / "x")
    assert code == 1
    assert "line 2, column 2" in err


def test_restore_eriwsta(tmp_path, capsys, phantom):
    run(capsys, "degrade", "--in", f"{phantom}.csv", "--sigma", 1e-2, "--out", tmp_path / "d")
    code, kv, _ = run(capsys, "restore", "--in", tmp_path / "d.csv", "--truth", f"{phantom}.csv",
                      "--strategy", "eriwsta", "--beta", 1e2, "--gamma", 1e-2, "--iters", 30,
                      "--out", tmp_path / "r")
    assert code == 0
    assert {"cost", "fidelity", "mae", "iterations"} <= kv.keys()
    trace = (tmp_path / "r.trace.csv").read_text().splitlines()
    assert trace[0] == "iter,cost,fidelity,mae,wall_ms" and len(trace) == 31
    assert float(trace[-1].split(",")[1]) == pytest.approx(float(kv["cost"]))
    assert float(trace[-1].split(",")[3]) == pytest.approx(float(kv["mae"]))
    prof = (tmp_path / "r.profiles.csv").read_text().splitlines()
    assert prof[0] == "index,restored_row,restored_col,truth_row,truth_col" and len(prof) == 33
    assert read_image_csv(tmp_path / "r.csv").shape == (32, 32)
    assert json.loads((tmp_path / "r.manifest.json").read_text())["status"] == "ok"


def test_restore_zero_iterations(tmp_path, capsys, phantom):
    code, kv, _ = run(capsys, "restore", "--in", f"{phantom}.csv", "--truth", f"{phantom}.csv",
                      "--strategy", "ista", "--beta", 1e-3, "--iters", 0, "--out", tmp_path / "r")
    assert code == 0
    truth = read_image_csv(f"{phantom}.csv")
    assert float(kv["mae"]) == pytest.approx(np.mean(np.abs(truth)))
    assert np.all(read_image_csv(tmp_path / "r.csv") == 0)


@pytest.mark.parametrize(
    "extra",
    [
        ["--strategy", "ista", "--gamma", "1"],
        ["--strategy", "eriwsta"],
        ["--strategy", "irl1"],
        ["--strategy", "ista", "--delta", "1"],
        ["--strategy", "wlp", "--delta", "1e-3", "--p", "1.5"],
    ],
)
def test_restore_usage_errors(tmp_path, capsys, phantom, extra):
    code, _, _ = run(capsys, "restore", "--in", f"{phantom}.csv", "--beta", 1, "--out", tmp_path / "r", *extra)
    assert code == 2


def test_restore_divergence_exit_code(tmp_path, capsys, phantom, monkeypatch):
    trace = IterationTrace()
    trace.append(TraceRecord(1, 1.0, 1.0, None, 0.0))

    def boom(*args, **kwargs):
        raise DivergenceError("non-finite iterate at iteration 2", trace, None)

    monkeypatch.setattr(cli, "solve", boom)
    code, kv, _ = run(capsys, "restore", "--in", f"{phantom}.csv", "--strategy", "ista", "--beta", 1,
                      "--out", tmp_path / "r")
    assert code == 3 and kv["status"] == "diverged"
    assert len((tmp_path / "r.trace.csv").read_text().splitlines()) == 2
    assert json.loads((tmp_path / "r.manifest.json").read_text())["status"] == "diverged"


SMALL_SWEEP = """\
size = 32
sigma = 1e-2
seed = 3
iters = 4
strategies = ista, eriwsta, irl1
beta = 1e-2, 1e1
gamma = 1e-2..1e-1
delta = 1e-3
record_timing = false
"""


def test_sweep(tmp_path, capsys):
    cfg = tmp_path / "s.conf"
    cfg.write_text(SMALL_SWEEP)
    code, kv, _ = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "o1", "--workers", 2)
    assert code == 0
    rows = (tmp_path / "o1" / "results.csv").read_text().splitlines()
    assert rows[0] == "strategy,beta,gamma,delta,final_mae,diverged,wall_ms"
    assert len(rows) == 1 + 2 + 4 + 2
    assert {"best.ista.final_mae", "best.eriwsta.gamma", "best.irl1.delta"} <= kv.keys()
    assert len(list((tmp_path / "o1" / "traces").glob("*.csv"))) == 8
    manifest = json.loads((tmp_path / "o1" / "manifest.json").read_text())
    assert manifest["config"]["beta"] == [1e-2, 1e1]
    assert run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "o2")[0] == 0
    assert (tmp_path / "o1" / "results.csv").read_bytes() == (tmp_path / "o2" / "results.csv").read_bytes()


@pytest.mark.parametrize(
    "text,needle",
    [("beta =\n", "beta"), ("colour = red\n", "colour"), ("beta = 1e-2..abc\n", "beta"),
     ("size = 4\n", "size"), ("strategies = ista, fista\n", "fista")],
)
def test_sweep_config_errors(tmp_path, capsys, text, needle):
    cfg = tmp_path / "bad.conf"
    cfg.write_text(text)
    code, _, err = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "o")
    assert code == 2 and needle in err


def test_sweep_missing_config(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--config", tmp_path / "none.conf", "--out", tmp_path / "o")
    assert code == 1


def test_compare(tmp_path, capsys, phantom):
    run(capsys, "degrade", "--in", f"{phantom}.csv", "--sigma", 1e-2, "--out", tmp_path / "d")
    code, kv, _ = run(capsys, "compare", "--in", tmp_path / "d.csv", "--truth", f"{phantom}.csv",
                      "--iters", 5, "--param", "eriwsta.beta=10", "--out", tmp_path / "cmp")
    assert code == 0
    assert {f"{s}.final_mae" for s in ("ista", "eriwsta", "irl1", "wlp", "nw4")} <= kv.keys()
    header = (tmp_path / "cmp" / "profiles_row.csv").read_text().splitlines()[0]
    assert header == "index,truth_row,ista_row,eriwsta_row,irl1_row,wlp_row,nw4_row"
    summary = (tmp_path / "cmp" / "summary.csv").read_text().splitlines()
    assert summary[2].startswith("eriwsta,10.0,0.01,,")


def test_desk_preset_parses():
    from sik.config import DESK_PRESET, parse_config

    cfg = parse_config(DESK_PRESET)
    assert cfg.beta == [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]
    assert len(cfg.gamma) == len(cfg.delta) == 7
    assert (cfg.size, cfg.kernel, cfg.sigma, cfg.iters) == (64, 5, 1e-2, 30)
