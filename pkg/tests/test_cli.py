import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cumprobit.cli import main
from cumprobit.ep import fit_ep
from cumprobit.model import GaussianPrior, Thresholds, read_dataset_csv
from cumprobit.numkern import norm_cdf
from cumprobit.predict import classify, predict_gaussian


def _csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def ep_fit(tmp_path_factory):
    path = tmp_path_factory.mktemp("fit") / "ep.json"
    assert main(["fit", "--data", "example", "--method", "ep", "--out", str(path)]) == 0
    return path


def test_fit_example_converges(ep_fit):
    doc = json.loads(ep_fit.read_text())
    assert doc["schema_version"] == 1 and doc["method"] == "ep"
    assert doc["converged"] is True and doc["thresholds_estimated"] is True
    assert doc["covariates"] == ["x1", "x2", "x3"]
    assert len(doc["thresholds"]) == 3


def test_fit_all_methods(tmp_path):
    out = tmp_path / "all.json"
    assert main(["fit", "--data", "example", "--method", "all", "--out", str(out)]) == 0
    fits = json.loads(out.read_text())["fits"]
    assert [f["method"] for f in fits] == ["mfvb", "pmf", "ep"]
    assert "pmf" in fits[1]


def test_missing_outcome_column(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    _csv(path, ["x1", "x2"], [[0.1, 0.2], [0.3, 0.4]])
    assert main(["fit", "--data", str(path)]) == 1
    assert "'y'" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "nope.csv")]) == 2


def test_predict_zero_row(ep_fit, tmp_path):
    new = tmp_path / "new.csv"
    _csv(new, ["x1", "x2", "x3"], [[0, 0, 0], [1.0, -0.5, 0.2]])
    out = tmp_path / "pred.csv"
    assert main(["predict", "--fit", str(ep_fit), "--data", str(new), "--out", str(out)]) == 0
    rows = _read(out)
    cut = np.array(json.loads(ep_fit.read_text())["thresholds"])
    F = np.array([float(rows[0][f"F{k}"]) for k in (1, 2, 3)])
    assert np.allclose(F, norm_cdf(cut), rtol=1e-15)
    for r in rows:
        probs = [float(r[f"p{k}"]) for k in range(1, 5)]
        assert abs(sum(probs) - 1.0) <= 1e-15
        assert int(r["class"]) == classify(np.array(probs))


def test_predict_covariate_mismatch(ep_fit, tmp_path):
    new = tmp_path / "new.csv"
    _csv(new, ["a", "b", "c"], [[0, 0, 0]])
    assert main(["predict", "--fit", str(ep_fit), "--data", str(new)]) == 1


def test_pmf_predict_reproducible(tmp_path):
    fit = tmp_path / "pmf.json"
    assert main(["fit", "--data", "example", "--method", "pmf", "--out", str(fit)]) == 0
    new = tmp_path / "new.csv"
    _csv(new, ["x1", "x2", "x3"], [[0.2, 0.1, -0.3]])
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        assert main(["predict", "--fit", str(fit), "--data", str(new), "--draws", "200",
                     "--seed", "3", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_round_trip_matches_library(ep_fit, tmp_path):
    # predictions through the JSON file equal predictions from an in-memory fit
    from importlib import resources

    dataset, _ = read_dataset_csv(resources.files("cumprobit") / "data" / "example.csv", K=None)
    doc = json.loads(ep_fit.read_text())
    thr = Thresholds(doc["thresholds"])
    post = fit_ep(dataset, GaussianPrior.isotropic(3, var=2.0), thr).posterior
    expected = predict_gaussian(post, thr, dataset.X[:25])
    new = tmp_path / "rows.csv"
    _csv(new, ["x1", "x2", "x3"], dataset.X[:25].tolist())
    out = tmp_path / "pred.csv"
    assert main(["predict", "--fit", str(ep_fit), "--data", str(new), "--out", str(out)]) == 0
    rows = _read(out)
    got = np.array([[float(r[f"p{k}"]) for k in range(1, 5)] for r in rows])
    assert np.allclose(got, expected.probs, atol=1e-6)
    assert [int(r["class"]) for r in rows] == classify(expected).tolist()


def test_fit_output_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert main(["fit", "--data", "example", "--method", "all", "--omit-timing", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_and_fixed_thresholds(tmp_path):
    data, truth = tmp_path / "sim.csv", tmp_path / "truth.json"
    assert main(["simulate", "--n", "80", "--p", "2", "--K", "3", "--seed", "1",
                 "--out", str(data), "--truth", str(truth)]) == 0
    thr = tmp_path / "thr.csv"
    thr.write_text(",".join(map(repr, json.loads(truth.read_text())["thresholds"])) + "\n")
    out = tmp_path / "fit.json"
    assert main(["fit", "--data", str(data), "--method", "mfvb", "--thresholds", str(thr), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["thresholds_estimated"] is False


def test_benchmark_deterministic(tmp_path):
    args = ["benchmark", "--n", "80", "--p", "2", "--K", "3", "--reps", "2", "--iterations", "200",
            "--burn-in", "20", "--seed", "5"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for name in ("results.csv", "results.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "timing.csv").exists()


def test_benchmark_rejects_zero_reps(tmp_path, capsys):
    assert main(["benchmark", "--reps", "0", "--out-dir", str(tmp_path)]) == 1
    assert "reps must be positive" in capsys.readouterr().err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cumprobit.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "benchmark" in proc.stdout
