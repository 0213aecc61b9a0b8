import csv
import json
import subprocess
import sys

import pytest

from dioph.cli import EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_exponent_golden_ratio(tmp_path, capsys):
    code, _, _ = _run(capsys, "exponent", "--point", "surd:(-1+1*sqrt5)/2", "--qmax", "100000",
                      "--out-dir", str(tmp_path), "--records", "rec.csv")
    assert code == EXIT_OK
    (row,) = _rows(tmp_path / "exponent.csv")
    assert row["kind"] == "SimOrdinary" and row["rational_flag"] in ("false", "False", "0")
    assert 0.9 < float(row["tail_sup"]) < 1.2
    recs = _rows(tmp_path / "rec.csv")
    assert [int(r["q"]) for r in recs[:6]] == [1, 2, 3, 5, 8, 13]
    assert (tmp_path / "exponent.manifest.json").exists()


def test_malformed_point_exit_two_names_token(tmp_path, capsys):
    code, _, err = _run(capsys, "exponent", "--point", "surd:(1+sqrtx)/2", "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["exit_code"] == 2 and "sqrtx" in rec["token"]


def test_fault_injection_exit_three(tmp_path, capsys):
    code, _, err = _run(capsys, "cover", "--curve", "veronese:n=2", "--eps", "0.4", "--tmin", "4", "--tmax", "4",
                        "--out-dir", str(tmp_path), "--inject-fault", "lemma1")
    assert code == EXIT_INVARIANT
    assert json.loads(err.strip().splitlines()[-1])["error"] == "LemmaAuditError"


def test_cover_outputs(tmp_path, capsys):
    code, _, _ = _run(capsys, "cover", "--curve", "veronese:n=2", "--shift", "0.3,0.7", "--eps", "0.4",
                      "--tmin", "4", "--tmax", "6", "--out-dir", str(tmp_path), "--dichotomy", "d.csv",
                      "--plot", "decay.txt")
    assert code == EXIT_OK
    balls = _rows(tmp_path / "cover.csv")
    assert {r["tag"] for r in balls} == {"disjoint", "non-disjoint"}
    assert all(float(r["trace_measure"]) <= float(r["lemma1_upper"]) * (1 + 1e-8) for r in balls)
    summary = _rows(tmp_path / "cover_summary.csv")
    assert [r["t"] for r in summary[:3]] == ["4", "5", "6"]
    assert (tmp_path / "decay.svg").exists()


def test_cover_threshold_is_usage_error(tmp_path, capsys):
    code, _, _ = _run(capsys, "cover", "--curve", "veronese:n=2", "--eps", "0.4", "--tmin", "1", "--tmax", "4",
                      "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE


def test_missing_command(capsys):
    assert _run(capsys)[0] == EXIT_USAGE
    assert _run(capsys, "frobnicate")[0] == EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# measure run\ncurve = veronese:n=2\neps = 0.2\nqmax = 300\nsamples = 100\nsgrid = 1,10\n")
    code, _, _ = _run(capsys, "measure", "--config", str(cfgfile), "--samples", "50", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    manifest = json.loads((tmp_path / "measure.manifest.json").read_text())
    assert manifest["config"]["samples"] == 50 and manifest["config"]["qmax"] == 300
    rows = _rows(tmp_path / "measure.csv")
    assert [r["s"] for r in rows] == ["1", "10"]
    assert set(rows[0]) == {"s", "qmax", "fraction", "stderr_estimate", "n_members"}


def test_unknown_config_key(tmp_path, capsys):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("curve = veronese:n=2\nbogus = 1\n")
    code, _, err = _run(capsys, "measure", "--config", str(cfgfile), "--eps", "0.2", "--qmax", "10",
                        "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE and "bogus" in err


def test_global_flags_after_command(tmp_path, capsys):
    code, _, _ = _run(capsys, "transfer", "--point", "surd:sqrt2-1,surd:sqrt3-1", "--qmax", "60",
                      "--out-dir", str(tmp_path), "--precision", "128")
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "transfer.json").read_text())
    assert rep["verdict"] in ("AllPass", "SoftViolations")


@pytest.mark.parametrize(
    "argv",
    [
        ["exponent", "--point", "surd:sqrt2-1,rat:1/3", "--qmax", "500", "--records", "r.csv"],
        ["exponent", "--kind", "dual", "--uniform", "--point", "surd:sqrt2-1,surd:sqrt3-1", "--qmax", "32"],
        ["transfer", "--point", "surd:sqrt2-1,surd:sqrt3-1", "--shift", "dec:0.3,dec:0.7", "--qmax", "50"],
        ["cover", "--curve", "veronese:n=2", "--eps", "0.4", "--tmin", "4", "--tmax", "5", "--plot", "p.txt"],
        ["measure", "--curve", "veronese:n=2", "--shift", "0.3,0.7", "--eps", "0.2", "--qmax", "200",
         "--samples", "80", "--seed", "9", "--sgrid", "1,10,100", "--plot", "m.txt"],
        ["slice", "--surface", "surface:(x,y,x^2):U=[0,1]x[0,1]", "--count", "4", "--summary", "s.csv"],
    ],
)
def test_replay_is_byte_identical(tmp_path, capsys, argv):
    first = tmp_path / "a"
    assert _run(capsys, *argv, "--out-dir", str(first))[0] == EXIT_OK
    before = {p.name: p.read_bytes() for p in first.iterdir()}
    code, out, _ = _run(capsys, "replay", str(first / f"{argv[0]}.manifest.json"), "--out-dir", str(tmp_path / "b"))
    assert code == EXIT_OK and "identical" in out
    after = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir()}
    for name, data in after.items():
        assert before[name] == data


def test_replay_detects_tampering(tmp_path, capsys):
    assert _run(capsys, "slice", "--surface", "surface:(x,y,x^2):U=[0,1]x[0,1]", "--out-dir", str(tmp_path))[0] == 0
    mpath = tmp_path / "slice.manifest.json"
    m = json.loads(mpath.read_text())
    m["outputs"]["slice.csv"] = "0" * 64
    mpath.write_text(json.dumps(m))
    assert _run(capsys, "replay", str(mpath))[0] == EXIT_INVARIANT


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dioph.cli", "exponent", "--point", "rat:0", "--qmax", "20", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    (row,) = _rows(tmp_path / "exponent.csv")
    assert row["tail_sup"] == "inf" or row["rational_flag"].lower() in ("true", "1")
