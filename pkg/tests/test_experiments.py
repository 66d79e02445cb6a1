import json

import numpy as np
import pytest

from pbceit.config import resolve
from pbceit.errors import ValidationError
from pbceit.experiments import (EXPERIMENTS, _folds, cluster_separation, compute_metrics,
                                run_experiment, run_health, run_location)
from pbceit.phantom import LabeledDataset


def test_confusion_matrix():
    cm = compute_metrics(["a", "b", "b", "c"], ["a", "b", "c", "c"], "classification",
                         classes=["a", "b", "c"], split="test")
    assert cm.counts.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 1]]
    assert cm.accuracy == 0.75
    assert cm.to_dict()["n"] == 4


def test_regression_and_angle_metrics():
    r = compute_metrics([1.0, 3.0], [0.0, 0.0], "regression")
    assert r == {"n": 2, "rmse": pytest.approx(np.sqrt(5)), "mae": 2.0, "max": 3.0}
    a = compute_metrics([350.0, 20.0], [10.0, 10.0], "angle")
    assert a["mae"] == pytest.approx(15.0)
    assert a["max"] == pytest.approx(20.0)


def test_metric_errors():
    with pytest.raises(ValidationError):
        compute_metrics([1], [1, 2], "regression")
    with pytest.raises(ValidationError):
        compute_metrics(["x"], ["a"], "classification", classes=["a"])
    with pytest.raises(ValidationError):
        compute_metrics([1], [1], "ranking")


def test_cluster_separation():
    pts = np.array([[0, 0], [0.1, 0], [10, 0], [10.1, 0], [10.5, 0], [30, 30]], dtype=float)
    out = cluster_separation(pts, np.array(["a", "a", "b", "b", "b", "c"]))
    assert all(v["passes"] for v in out.values())
    assert out["a"]["spread"] == pytest.approx(0.05)
    close = cluster_separation(np.array([[0, 0], [1, 0], [0.5, 0], [1.5, 0]], float),
                               np.array(["a", "a", "b", "b"]))
    assert not any(v["passes"] for v in close.values())


def test_folds_are_stratified_and_seeded():
    labels = np.repeat(["a", "b", "c"], [10, 15, 20])
    f = _folds(labels.size, 5, labels, seed=1)
    for c in "abc":
        counts = np.bincount(f[labels == c], minlength=5)
        assert counts.max() - counts.min() <= 1
    np.testing.assert_array_equal(f, _folds(labels.size, 5, labels, seed=1))


def test_unknown_experiment():
    with pytest.raises(ValidationError):
        run_experiment("bone", resolve())


def test_default_artifacts(default_reports):
    reports, _, out = default_reports
    assert set(reports) == set(EXPERIMENTS)
    for name, rep in reports.items():
        d = out / name
        on_disk = json.loads((d / "report.json").read_text())
        assert on_disk["experiment"] == name
        for entry in rep["artifacts"].values():
            for rel in entry if isinstance(entry, list) else [entry]:
                assert (d / rel).is_file(), rel
        assert any(p.suffix == ".svg" for p in (d / "heatmaps").iterdir())
        # configuration echoed next to the metrics
        assert resolve(d / "config.txt") == resolve(overrides={"out": str(out)})


def test_report_has_no_timings(default_reports):
    text = (default_reports[2] / "loc" / "report.json").read_text().lower()
    assert "time" not in text and "second" not in text


def test_pca_is_fitted_on_training_rows_only(loc_dataset, tmp_path):
    cfg = resolve(overrides={"out": str(tmp_path), "heatmaps": 0})
    a = run_location(cfg, tmp_path / "a", dataset=loc_dataset)
    X = loc_dataset.X.copy()
    test = loc_dataset.mask("test")
    X[test] += np.random.default_rng(0).normal(0, 1e-2, X[test].shape)
    altered = LabeledDataset(X=X, baseline=loc_dataset.baseline, meta=loc_dataset.meta)
    b = run_location(cfg, tmp_path / "b", dataset=altered)
    assert a["pca"] == b["pca"]
    assert a["radial"]["mlp"]["training"] == b["radial"]["mlp"]["training"]


def test_health_holds_out_the_last_specimen(tmp_path, health_dataset):
    rep = run_health(resolve(overrides={"out": str(tmp_path), "heatmaps": 0}), tmp_path,
                     dataset=health_dataset)
    # 4 conditions x 20 loads per specimen; the rest splits 80/20
    assert rep["rows"] == {"train": 128, "validation": 32, "test": 80}
    assert rep["pca"]["first4_below_first7"]


def test_jobs_do_not_change_metrics(tmp_path):
    base = {"out": str(tmp_path), "heatmaps": 0, "angle_step": 90.0}
    one = run_location(resolve(overrides={**base, "jobs": 1}), tmp_path / "one")
    two = run_location(resolve(overrides={**base, "jobs": 2}), tmp_path / "two")
    for rep in (one, two):
        rep.pop("config")
    assert one == two
