import csv

import numpy as np
import pytest

from mdcoherence.cli import main
from mdcoherence.tensorfile import read_tensor

TINY = """seed = 1
synth.n_per_class = 8
synth.duration_s = 1.6
arch.channels = 4,8,8,8
arch.latent_dim = 16
arch.hidden = 8
pretrain.epochs = 2
classifier.epochs = 2
eval.noise_realizations = 2
eval.snr_grid = 5,-5
paths.data = data
paths.pretrained = pre/checkpoint.mdt
paths.model = cls/checkpoint.mdt
paths.model_a = cls/checkpoint.mdt
paths.model_b = cls/checkpoint.mdt
paths.sample = data/samples/sample_00000.mdt
paths.runs = pre,sweep
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "run.cfg").write_text(TINY)
    return tmp_path


def run(workdir, *args):
    return main([args[0], "--config", str(workdir / "run.cfg"), *args[1:]])


def test_synth_counts_and_determinism(workdir):
    assert run(workdir, "synth", "--out", str(workdir / "data")) == 0
    rows = list(csv.DictReader((workdir / "data" / "manifest.csv").open()))
    assert len(rows) == 24 and set(rows[0]) == {"path", "label", "split"}
    assert len(list((workdir / "data" / "samples").glob("*.mdt"))) == 24
    first = (workdir / "data" / "manifest.csv").read_bytes()
    assert run(workdir, "synth", "--out", str(workdir / "again")) == 0
    assert (workdir / "again" / "manifest.csv").read_bytes() == first


def test_unwritable_out_dir(workdir, capsys):
    blocker = workdir / "file"
    blocker.write_text("x")
    code = run(workdir, "synth", "--out", str(blocker / "sub"))
    err = capsys.readouterr().err.strip().splitlines()
    assert code != 0 and len(err) == 1
    assert err[0].startswith("error: IoError:") and str(blocker) in err[0]


def test_missing_seed_is_config_error(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("loss.beta = 4\n")
    code = main(["gradcheck", "--config", str(tmp_path / "c.cfg")])
    err = capsys.readouterr().err.strip()
    assert code == 2 and err.startswith("error: ConfigError:") and "seed" in err


def test_missing_path_key_names_it(workdir, capsys):
    (workdir / "c.cfg").write_text("seed = 0\n")
    assert main(["pretrain", "--config", str(workdir / "c.cfg"), "--out", str(workdir / "o")]) == 2
    assert "paths.data" in capsys.readouterr().err


def test_gradcheck_default_config(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "gradcheck.csv").open()))
    assert len(rows) == 50
    assert max(float(r["max_rel_total"]) for r in rows) < 1e-4


def test_full_pipeline_reproducible(workdir):
    w = str(workdir)
    assert run(workdir, "synth", "--out", w + "/data") == 0
    assert run(workdir, "pretrain", "--out", w + "/pre") == 0
    assert run(workdir, "train-cls", "--out", w + "/cls") == 0
    assert run(workdir, "eval-snr", "--out", w + "/sweep", "--threads", "2") == 0
    assert run(workdir, "confusion", "--out", w + "/conf") == 0
    assert run(workdir, "cadence", "--out", w + "/cad") == 0
    assert run(workdir, "report", "--out", w + "/rep") == 0
    assert abs(read_tensor(workdir / "cad" / "cadence.mdt").sum() - 1.0) < 1e-9
    assert (workdir / "pre" / "metrics.csv").read_text().startswith("step,mse,mud,total,ce,val_loss,acc\n")
    assert (workdir / "sweep" / "sweep.csv").read_text().startswith("snr_db,model,acc_mean,acc_std\n")
    for svg in ("pre/loss_curves.svg", "cls/val_curve.svg", "sweep/sweep.svg", "rep/mse_curves.svg"):
        assert (workdir / svg).read_text().startswith("<svg")
    # same config, different thread count and output dirs
    assert run(workdir, "pretrain", "--out", w + "/pre2") == 0
    assert run(workdir, "eval-snr", "--out", w + "/sweep2", "--threads", "1") == 0
    assert (workdir / "pre" / "metrics.csv").read_bytes() == (workdir / "pre2" / "metrics.csv").read_bytes()
    assert (workdir / "sweep" / "sweep.csv").read_bytes() == (workdir / "sweep2" / "sweep.csv").read_bytes()


def test_seed_flag_overrides(workdir):
    w = str(workdir)
    assert run(workdir, "synth", "--out", w + "/a", "--seed", "5") == 0
    assert run(workdir, "synth", "--out", w + "/b", "--seed", "6") == 0
    a = read_tensor(workdir / "a" / "samples" / "sample_00000.mdt")
    b = read_tensor(workdir / "b" / "samples" / "sample_00000.mdt")
    assert not np.array_equal(a, b)
    assert "seed = 5" in (workdir / "a" / "config.cfg").read_text()


def test_bad_threads(workdir, capsys):
    assert run(workdir, "synth", "--out", str(workdir / "d"), "--threads", "0") == 2
    assert capsys.readouterr().err.startswith("error: ConfigError:")
