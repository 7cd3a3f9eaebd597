import csv
import json

import numpy as np
import pytest

from sparseadv.cli import main
from sparseadv.formats import read_tensor, write_png, write_tensor
from sparseadv.projections import project_l0_box
from sparseadv.sigma import compute_sigma_map


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert main(["gen-data", "--classes", "2", "--per-class", "30", "--test-per-class", "10",
                 "--shape", "5x5x1", "--seed", "1", "--out", str(root / "data")]) == 0
    config = {
        "data": {"images": "data/test-images.spt", "labels": "data/test-labels.spt"},
        "train_data": {"images": "data/train-images.spt", "labels": "data/train-labels.spt"},
        "model": "train/model.json",
        "out": "train",
        "hidden": [8],
        "epochs": 15,
        "n": 20,
        "niter": 20,
        "kmax": 5,
        "iters": 5,
        "restarts": 2,
    }
    (root / "run.json").write_text(json.dumps(config))
    assert main(["train", "--config", str(root / "run.json")]) == 0
    return root


def test_gen_data_outputs(workspace):
    meta = json.loads((workspace / "data" / "meta.json").read_text())
    assert meta["n_classes"] == 2
    assert meta["splits"]["train"]["size"] == 60 and meta["splits"]["test"]["size"] == 20
    assert read_tensor(workspace / "data" / "train-images.spt").shape == (60, 5, 5, 1)


def test_train_outputs(workspace):
    rows = list(csv.reader(open(workspace / "train" / "metrics.csv")))
    assert rows[0] == ["epoch", "clean_accuracy", "loss"] and len(rows) == 16
    assert (workspace / "train" / "training.png").stat().st_size > 0


@pytest.mark.parametrize("method", ["cornersearch", "pgd0", "sigma-pgd", "sigma-cornersearch", "l0linf-cornersearch"])
def test_attack(workspace, method, capsys):
    out = workspace / f"attack-{method}"
    assert main(["attack", "--config", str(workspace / "run.json"), "--method", method,
                 "--k", "3", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "results.csv")))
    assert rows[0] == ["index", "clean_label", "pred_label", "correct", "success", "pixels_changed", "queries"]
    assert len(rows) == 21
    summary = json.loads((out / "summary.json").read_text())
    assert summary["method"] == method and summary["n_points"] == 20
    n_adv = len(list(out.glob("adv_*.png")))
    assert n_adv == summary["n_success"] == len(list(out.glob("perturbation_*.spt")))
    # the example grid is only drawn when something succeeded
    assert (out / "examples.png").exists() == (n_adv > 0)
    assert (out / "pixels_hist.png").exists()
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1]) == summary


def test_eval_curve(workspace):
    out = workspace / "curve"
    assert main(["eval", "--config", str(workspace / "run.json"), "--curve", "1,2,4", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "robust_accuracy.csv")))
    assert rows[0] == ["k", "robust_accuracy"] and [r[0] for r in rows[1:]] == ["1", "2", "4"]
    values = [float(r[1]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert (out / "robust_accuracy.png").exists()


def test_eval_bad_curve(workspace):
    assert main(["eval", "--config", str(workspace / "run.json"), "--curve", "4,2"]) == 1
    assert main(["eval", "--config", str(workspace / "run.json"), "--curve", "a,b"]) == 1


def test_sigma_map_and_project(tmp_path, rng):
    x = rng.random((4, 4, 3))
    write_tensor(tmp_path / "x.spt", x)
    assert main(["sigma-map", "--image", str(tmp_path / "x.spt"), "--out", str(tmp_path / "s.spt")]) == 0
    np.testing.assert_allclose(read_tensor(tmp_path / "s.spt"), compute_sigma_map(x.astype(np.float32)), atol=1e-6)
    assert main(["sigma-map", "--image", str(tmp_path / "x.spt"), "--out", str(tmp_path / "s.png")]) == 0
    assert main(["sigma-map", "--image", str(tmp_path / "x.spt"), "--out", str(tmp_path / "s.txt")]) == 1

    y = rng.uniform(-0.5, 1.5, x.shape)
    write_tensor(tmp_path / "y.spt", y)
    assert main(["project", "--mode", "l0", "--x", str(tmp_path / "x.spt"), "--y", str(tmp_path / "y.spt"),
                 "--k", "3", "--out", str(tmp_path / "z.spt")]) == 0
    x32 = read_tensor(tmp_path / "x.spt").astype(np.float64)
    y32 = read_tensor(tmp_path / "y.spt").astype(np.float64)
    expected = project_l0_box(y32, x32, 3, 0.0, 1.0).astype(np.float32)
    assert np.array_equal(read_tensor(tmp_path / "z.spt"), expected)
    for mode, extra in (("l0linf", ["--eps", "0.1"]), ("sigma", ["--kappa", "0.4"])):
        assert main(["project", "--mode", mode, "--x", str(tmp_path / "x.spt"), "--y", str(tmp_path / "y.spt"),
                     "--k", "2", "--out", str(tmp_path / "z.spt"), *extra]) == 0
    # missing eps is a usage error
    assert main(["project", "--mode", "l0linf", "--x", str(tmp_path / "x.spt"), "--y", str(tmp_path / "y.spt"),
                 "--k", "2", "--out", str(tmp_path / "z.spt")]) == 1


def test_png_input(tmp_path, rng):
    write_png(tmp_path / "x.png", rng.random((3, 3, 1)))
    assert main(["sigma-map", "--image", str(tmp_path / "x.png"), "--out", str(tmp_path / "s.spt")]) == 0


def test_exit_codes(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--classes", "2"])
    assert exc.value.code == 1
    assert main(["gen-data", "--classes", "2", "--per-class", "1", "--shape", "8x8", "--out", str(tmp_path)]) == 1
    assert main(["attack", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text('{"nonsense": 1}')
    assert main(["attack", "--config", str(tmp_path / "bad.json")]) == 2
    (tmp_path / "nodata.json").write_text('{"data": {"images": "a.spt", "labels": "b.spt"}}')
    assert main(["attack", "--config", str(tmp_path / "nodata.json")]) == 2
    (tmp_path / "x.spt").write_bytes(b"JUNKJUNK")
    assert main(["sigma-map", "--image", str(tmp_path / "x.spt"), "--out", str(tmp_path / "s.spt")]) == 2


def test_flags_override_config(workspace):
    out = workspace / "override"
    assert main(["attack", "--config", str(workspace / "run.json"), "--method", "pgd0", "--k", "1",
                 "--limit", "5", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["budget"] == 1 and summary["n_points"] == 5
