import json
import subprocess
import sys

import numpy as np
import pytest

from ctdistill.cli import main
from ctdistill.fileio import read_sinogram, read_volume


def _config(tmp_path, **over):
    raw = {
        "source": {"phantom": {"kind": "lung", "n": 48}, "cases": 2},
        "degradations": [{"kind": "sparse_view", "k": 4}, {"kind": "conventional"}],
        "enhancers": [{"kind": "identity"}, {"kind": "tv", "tv_iters": 10}],
        "seed": 3,
        "geometry": {"n_angles": 64},
        "output_dir": str(tmp_path / "out"),
    }
    raw.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


def test_phantom_degrade_enhance_chain(tmp_path):
    vol, lab = tmp_path / "vol.ctk", tmp_path / "lab.ctk"
    assert main(["phantom", "--kind", "lung", "--n", "64", "--seed", "7", "--out", str(vol), "--labels", str(lab)]) == 0
    assert read_volume(lab).ids() == [0, 1, 2, 3, 4]
    xd = tmp_path / "xd.ctk"
    assert main(["degrade", "--kind", "low_dose", "--alpha", "50", "--mode", "paper", "--seed", "3",
                 "--in", str(vol), "--out", str(xd), "--angles", "90"]) == 0
    xe = tmp_path / "xe.ctk"
    assert main(["enhance", "--kind", "nlm", "--in", str(xd), "--out", str(xe)]) == 0
    assert read_volume(xe).dims == (64, 64, 1)
    again = tmp_path / "xd2.ctk"
    main(["degrade", "--kind", "low_dose", "--alpha", "50", "--seed", "3", "--in", str(vol), "--out", str(again),
          "--angles", "90"])
    assert again.read_bytes() == xd.read_bytes()


def test_project_and_fbp(tmp_path):
    sl, sino, rec = tmp_path / "sl.ctk", tmp_path / "s.ctk", tmp_path / "r.ctk"
    assert main(["phantom", "--kind", "shepp_logan", "--n", "64", "--out", str(sl)]) == 0
    assert main(["project", "--in", str(sl), "--out", str(sino), "--angles", "120"]) == 0
    s = read_sinogram(sino)
    assert s.data.shape == (120, 91)
    assert main(["fbp", "--in", str(sino), "--out", str(rec), "--n", "64", "--filter", "hann"]) == 0
    truth, out = read_volume(sl).data, read_volume(rec).data
    assert np.corrcoef(truth.ravel(), out.ravel())[0, 1] > 0.9


def test_sirt_from_measured_sinogram(tmp_path):
    sl, sino, rec = tmp_path / "sl.ctk", tmp_path / "s.ctk", tmp_path / "r.ctk"
    main(["phantom", "--kind", "shepp_logan", "--n", "32", "--out", str(sl)])
    main(["project", "--in", str(sl), "--out", str(sino), "--angles", "40"])
    assert main(["enhance", "--kind", "sirt", "--sinogram", str(sino), "--sirt-iters", "5",
                 "--in", str(sl), "--out", str(rec)]) == 0


def test_pipeline_and_hist(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["pipeline", "--config", str(cfg)]) == 0
    assert "identity" in capsys.readouterr().out
    report = tmp_path / "out" / "report.json"
    assert main(["hist", "--report", str(report), "--metric", "ssim", "--bins", "20"]) == 0
    assert (tmp_path / "out" / "hist_ssim.svg").exists()


def test_ablate_command(tmp_path):
    cfg = _config(tmp_path, enhancers=[{"kind": "identity"}])
    assert main(["ablate", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "ablation.csv").exists()


def test_config_error_exit_code(tmp_path):
    assert main(["pipeline", "--config", str(_config(tmp_path, bogus=1))]) == 2
    assert main(["pipeline", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["degrade", "--kind", "nope", "--in", "a", "--out", "b"]) == 2


def test_partial_failure_exit_code(tmp_path):
    broken = {"name": "broken", "kind": "external", "command": f"{sys.executable} -c \"raise SystemExit(1)\""}
    cfg = _config(tmp_path, enhancers=[{"kind": "identity"}, broken])
    assert main(["pipeline", "--config", str(cfg)]) == 3


def test_bad_file_exit_code(tmp_path):
    bad = tmp_path / "bad.ctk"
    bad.write_bytes(b"XXXX")
    assert main(["enhance", "--kind", "tv", "--in", str(bad), "--out", str(tmp_path / "o.ctk")]) == 1


@pytest.mark.parametrize("args", [["--help"], ["phantom", "--help"]])
def test_help_exits_zero(args):
    assert main(args) == 0


def test_console_script_installed(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ctdistill.cli", "phantom", "--n", "16", "--out",
                          str(tmp_path / "p.ctk")], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
