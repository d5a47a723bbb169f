import json
import subprocess
import sys

import pytest

from faultflow.cli import main
from faultflow.pipeline import fit_artifacts


@pytest.fixture(scope="module")
def art_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("art")
    fit_artifacts(1e-3, n_ref=1500, seed=2).save(path)
    return path


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_upscale_and_fit(tmp_path, capsys):
    assert main(["upscale", "--kclay", "1e-4", "--n-ref", "200", "--out", str(tmp_path / "u")]) == 0
    assert (tmp_path / "u" / "ensemble.csv").exists()
    summary = json.loads((tmp_path / "u" / "ensemble_summary.json").read_text())
    assert summary["n_ref"] == 200 and summary["k_clay"] == 1e-4
    assert main(["fit", "--n-ref", "800", "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "artifacts.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_simulate(tmp_path, art_dir, capsys):
    assert main(["simulate", "--artifacts", str(art_dir), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "simulation.csv").exists()
    assert "leaked" in capsys.readouterr().out


@pytest.mark.parametrize("method", ["smc", "adss"])
def test_study_is_identical_across_thread_counts(tmp_path, art_dir, monkeypatch, method):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("FAULTFLOW_THREADS", threads)
        out = tmp_path / f"t{threads}"
        main(["study", "--case", "II", "--method", method, "--budget", "100", "--seed", "4",
              "--artifacts", str(art_dir), "--out", str(out)])
        outs.append(_files(out))
    assert outs[0] == outs[1]
    assert {"summary.json", "samples.csv", "histogram.csv"} <= set(outs[0])


def test_speedup_and_report(tmp_path, art_dir, capsys):
    src = tmp_path / "sp"
    main(["speedup", "--budget", "100", "--repeats", "20", "--artifacts", str(art_dir), "--out", str(src)])
    assert "speedup" in json.loads((src / "summary.json").read_text())
    assert main(["report", str(src), "--out", str(tmp_path / "rep")]) == 0
    rep = json.loads((tmp_path / "rep" / "report.json").read_text())
    summary = json.loads((src / "summary.json").read_text())
    assert rep["p50"] == summary["p50"] and rep["speedup"] == summary["speedup"]["speedup"]


def test_bad_arguments(tmp_path, art_dir):
    with pytest.raises(SystemExit):
        main(["study", "--kclay", "-1", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["study", "--case", "IX", "--out", str(tmp_path)])
    with pytest.raises(SystemExit, match="fitted for"):
        main(["study", "--kclay", "1", "--artifacts", str(art_dir), "--out", str(tmp_path)])


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "faultflow.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("upscale", "fit", "simulate", "study", "speedup", "report"):
        assert cmd in out.stdout
