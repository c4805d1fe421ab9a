import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sdirecon.cli import load_system, main
from sdirecon.cube import load_cube


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--kind", "phase", "--height", "16", "--width", "16", "--bands", "3",
                 "--seed", "2", "--out", str(d)]) == 0
    assert main(["simulate", "--scene", str(d / "scene.hsic"), "--system", str(d),
                 "--sigma", "0.0", "--out", str(d)]) == 0
    return d


class TestGen:
    def test_files(self, workdir):
        for name in ("scene.hsic", "psf.hsic", "filters.hsic", "system.json", "scene_band0.pgm"):
            assert (workdir / name).is_file()
        system = load_system(workdir)
        assert system.psfs.data.shape == (3, 15, 15)
        assert system.filters.data.shape == (3, 3, 16, 16)

    def test_bitwise_deterministic(self, tmp_path):
        args = ["gen", "--kind", "scatter", "--height", "12", "--width", "12", "--bands", "2", "--seed", "5"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_reconstruct_improves_on_init(workdir, tmp_path):
    assert main(["reconstruct", "--measurement", str(workdir / "measurement.hsic"), "--system", str(workdir),
                 "--scene", str(workdir / "scene.hsic"), "--out", str(tmp_path)]) == 0
    state = json.loads((tmp_path / "state.json").read_text())
    assert len(state["energy"]) == state["params"]["stages"] + 1
    assert state["metrics"]["final"]["psnr"] > state["metrics"]["initial"]["psnr"]
    assert load_cube(tmp_path / "reconstruction.hsic").shape == (3, 16, 16)


def test_reconstruct_with_config(workdir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stages": 3, "denoiser": {"kind": "identity"}}))
    assert main(["reconstruct", "--measurement", str(workdir / "measurement.hsic"), "--system", str(workdir),
                 "--config", str(cfg), "--out", str(tmp_path)]) == 0
    state = json.loads((tmp_path / "state.json").read_text())
    assert state["params"]["stages"] == 3 and state["denoiser"]["kind"] == "identity"


def test_verify(capsys):
    assert main(["verify"]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1] == "100/100 pass"


@pytest.mark.parametrize("model", ["sdi", "cassi", "ape"])
def test_hessian_report(tmp_path, model, capsys):
    assert main(["hessian-report", "--model", model, "--height", "4", "--width", "4", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "hessian.json").read_text())
    assert report == json.loads(capsys.readouterr().out)
    assert report["conditionNumber"] >= 1 and set(report) >= {"offDiagRatioFreq", "offPixelEnergy", "dims"}


def test_noise_sweep(workdir, tmp_path):
    assert main(["noise-sweep", "--scene", str(workdir / "scene.hsic"), "--system", str(workdir),
                 "--sigmas", "0,0.05", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "noise_sweep.csv")
    assert [float(r["sigma"]) for r in rows] == [0.0, 0.05]
    assert float(rows[1]["psnr"]) < float(rows[0]["psnr"])


@pytest.mark.parametrize("axis, labels", [
    ("stages", ["2stg", "3stg", "4stg", "5stg", "6stg"]),
    ("conversion", ["real", "amplitude", "imag"]),
    ("fs-branch", ["without-fs", "with-fs"]),
])
def test_ablate(workdir, tmp_path, axis, labels):
    assert main(["ablate", "--axis", axis, "--scene", str(workdir / "scene.hsic"), "--system", str(workdir),
                 "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / f"ablate_{axis}.csv")
    assert [r["method"] for r in rows] == labels
    assert all(np.isfinite(float(r["psnr"])) for r in rows)


@pytest.mark.parametrize("argv, needle", [
    (["gen", "--kind", "fresnel"], "invalid choice"),
    (["gen", "--height", "0"], "must be >= 1"),
    (["simulate", "--scene", "/nonexistent.hsic", "--system", "/nonexistent"], "nonexistent"),
    (["noise-sweep", "--scene", "x", "--system", "y", "--sigmas", "-1"], "sigmas"),
    (["frobnicate"], "invalid choice"),
])
def test_errors_single_line(argv, needle, capsys):
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith("sdirecon: error:") and needle in err


def test_bad_config_names_field(workdir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stages": 2, "gamma": [1.0, -1.0]}))
    code = main(["reconstruct", "--measurement", str(workdir / "measurement.hsic"), "--system", str(workdir),
                 "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    assert "gamma[1]" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sdirecon", "verify", "--trials", "3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip() == "3/3 pass"
