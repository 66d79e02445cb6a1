import json
import os
import subprocess
import sys

import pytest

from pbceit.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for cmd in ("mesh", "dataset", "reconstruct", "pca", "train", "eval", "experiment", "plot"):
        assert cmd in text


def test_mesh_writes_json_and_snapshot(tmp_path):
    assert run("mesh", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "mesh.json").read_text())
    assert len(doc["elements"]) == 2432
    assert (tmp_path / "mesh_config.txt").is_file()


def test_validation_errors_exit_1(tmp_path, capsys):
    assert run("mesh", "--out", tmp_path, "--refinement", "0") == 1
    assert run("reconstruct", "--out", tmp_path, "--dataset", tmp_path / "none.csv",
               "--frame", 0) == 1
    assert run("mesh", "--config", tmp_path / "missing.txt") == 1
    with pytest.raises(SystemExit) as exc:
        main(["mesh", "--no-such-flag"])
    assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


@pytest.fixture(scope="module")
def loc_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert run("dataset", "loc", "--out", out, "--noise", "0", "--sigma-jitter", "0",
               "--position-jitter", "0", "--angle-jitter", "0") == 0
    return out


def test_dataset_then_reconstruct(loc_csv, capsys):
    assert (loc_csv / "dataset.csv").is_file()
    assert (loc_csv / "dataset_baseline.csv").is_file()
    assert run("reconstruct", "--out", loc_csv, "--frame", 5, "--frame", 6) == 0
    for i in (5, 6):
        assert (loc_csv / "recon" / f"frame_{i:03d}.svg").is_file()
        assert (loc_csv / "recon" / f"frame_{i:03d}_dsigma.csv").is_file()
    assert "blob centroid" in capsys.readouterr().out
    assert run("reconstruct", "--out", loc_csv, "--frame", 10_000) == 1


def test_singular_reconstruction_exits_2(loc_csv, capsys):
    assert run("reconstruct", "--out", loc_csv, "--frame", 1, "--recon-lambda", 0) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_plot_round_trip(loc_csv):
    src = loc_csv / "recon" / "frame_005_dsigma.csv"
    if not src.is_file():
        assert run("reconstruct", "--out", loc_csv, "--frame", 5) == 0
    assert run("plot", src, "--out", loc_csv, "--svg", loc_csv / "p.svg") == 0
    assert (loc_csv / "p.svg").read_text().startswith("<svg")


def test_pca_threshold(loc_csv, capsys):
    assert run("pca", "--out", loc_csv, "--threshold", 0.95) == 0
    assert json.loads((loc_csv / "pca.json").read_text())["k"] >= 1
    assert "cumulative explained ratio" in capsys.readouterr().out


@pytest.mark.parametrize("learner,task", [("mlp", "radial"), ("knn", "radial"),
                                          ("svm", "radial"), ("mlp", "angle"),
                                          ("gpr", "angle")])
def test_train_and_eval(loc_csv, learner, task):
    assert run("train", learner, "--task", task, "--out", loc_csv) == 0
    model = loc_csv / f"{learner}_{task}.json"
    assert run("eval", "--model", model, "--out", loc_csv) == 0
    result = json.loads((loc_csv / f"eval_{model.stem}.json").read_text())
    assert set(result["splits"]) >= {"train", "test"}


def test_incompatible_learner_and_task(loc_csv):
    assert run("train", "knn", "--task", "angle", "--out", loc_csv) == 1
    assert run("train", "gpr", "--task", "radial", "--out", loc_csv) == 1


def test_out_env_variable(tmp_path):
    env = dict(os.environ, PBCEIT_OUT=str(tmp_path / "env_out"))
    subprocess.run([sys.executable, "-m", "pbceit", "mesh"], env=env, check=True,
                   capture_output=True)
    assert (tmp_path / "env_out" / "mesh.json").is_file()


def test_experiment_all_is_reproducible(tmp_path):
    args = ["experiment", "all", "--out", tmp_path, "--heatmaps", 1]
    assert run(*args) == 0
    first = {n: (tmp_path / n / "report.json").read_bytes() for n in ("loc", "crack", "health")}
    assert run(*args) == 0
    for n, text in first.items():
        assert (tmp_path / n / "report.json").read_bytes() == text
        assert (tmp_path / n / "config.txt").is_file()
    assert (tmp_path / "experiment_config.txt").is_file()
