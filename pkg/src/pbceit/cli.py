"""Command-line entry point: ``pbceit <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input or configuration and 2 for
numerical failures (singular systems, non-finite training loss, failed
factorisations).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import FIELDS, RunConfig, help_lines, resolve
from .errors import NumericalError, ValidationError
from .experiments import EXPERIMENTS, compute_metrics, run_experiment
from .features import PcaModel, fit_pca, project
from .forward import adjacent_protocol
from .learners import (GprModel, LinearSvm, MlpModel, decode, encode, knn, predict_gpr,
                       predict_mlp, train_gpr, train_linear_svm, train_mlp)
from .mesh import Mesh, build_mesh
from .phantom import SPLITS, LabeledDataset, generate_dataset
from .recon import ReconConfig, blob_centroid, build_reconstructor, render_heatmap

PROG = "pbceit"
OUT_ENV = "PBCEIT_OUT"
TASKS = {
    "radial": ("r_cm", "classification"),
    "angle": ("theta_deg", "angle"),
    "crack": ("crack_deg", "angle"),
    "condition": ("condition", "classification"),
}
LEARNERS = ("mlp", "knn", "svm", "gpr")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: one line on stderr, exit status 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config_parent() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("run configuration (flags override --config, which overrides defaults)")
    g.add_argument("--config", metavar="FILE", help="flat 'key = value' configuration file")
    for name, f in FIELDS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, metavar="V", default=None,
                       help=f"{f.metadata['help']} (default: {f.default})")
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = _Parser(
        prog=PROG,
        description="Synthetic EIT pipeline for piezoresistive bone cement.",
        epilog="configuration keys and defaults:\n" + "\n".join(help_lines()),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("mesh", parents=[parent], help="build the tank mesh and write mesh.json")

    p = sub.add_parser("dataset", parents=[parent], help="simulate a labelled dataset")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--name", default="dataset.csv", help="output file name under --out")

    p = sub.add_parser("reconstruct", parents=[parent],
                       help="difference image of dataset frames (Δσ CSV and SVG)")
    p.add_argument("--dataset", help="dataset CSV (default: <out>/dataset.csv)")
    p.add_argument("--frame", type=int, action="append", required=True,
                   help="row index; repeat for several frames")

    p = sub.add_parser("pca", parents=[parent], help="fit PCA on training rows, write scores")
    p.add_argument("--dataset", help="dataset CSV (default: <out>/dataset.csv)")
    p.add_argument("--threshold", type=float, default=None,
                   help="explained-variance target instead of a fixed pca_k")

    p = sub.add_parser("train", parents=[parent], help="train one learner on PCA scores")
    p.add_argument("learner", choices=LEARNERS)
    p.add_argument("--task", choices=sorted(TASKS), required=True)
    p.add_argument("--dataset", help="dataset CSV (default: <out>/dataset.csv)")
    p.add_argument("--hidden", type=int, default=5, help="hidden units for mlp")
    p.add_argument("--model", default=None, help="output model file (default: <out>/<learner>_<task>.json)")

    p = sub.add_parser("eval", parents=[parent], help="score a trained model per split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", help="dataset CSV (default: <out>/dataset.csv)")

    p = sub.add_parser("experiment", parents=[parent], help="run full experiments")
    p.add_argument("which", choices=EXPERIMENTS + ("all",))

    p = sub.add_parser("plot", parents=[parent], help="render a Δσ CSV as an SVG heatmap")
    p.add_argument("dsigma", help="CSV with one Δσ value per element (column 'dsigma')")
    p.add_argument("--svg", default=None, help="output file (default: <out>/<csv stem>.svg)")
    return parser


def _resolve(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in FIELDS if getattr(args, k, None) is not None}
    if "out" not in overrides and os.environ.get(OUT_ENV):
        overrides["out"] = os.environ[OUT_ENV]
    return resolve(args.config, overrides)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _snapshot(cfg: RunConfig, out: Path, command: str) -> None:
    cfg.save(out / f"{command}_config.txt")


def _mesh(cfg: RunConfig) -> Mesh:
    return build_mesh(cfg.tank_radius, cfg.refinement, cfg.electrode_coverage)


def _dataset_path(args, out: Path) -> Path:
    path = Path(args.dataset) if args.dataset else out / "dataset.csv"
    if not path.is_file():
        raise ValidationError(f"dataset not found: {path}")
    return path


def cmd_mesh(args, cfg, out):
    mesh = _mesh(cfg)
    mesh.save(out / "mesh.json")
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements -> {out / 'mesh.json'}")


def cmd_dataset(args, cfg, out):
    ds = generate_dataset(cfg.dataset_config(args.experiment.upper()), jobs=cfg.jobs)
    path = out / args.name
    ds.to_csv(path)
    counts = {s: int(ds.mask(s).sum()) for s in SPLITS}
    print(f"dataset {args.experiment}: {len(ds)} frames {counts} -> {path}")


def cmd_reconstruct(args, cfg, out):
    ds = LabeledDataset.from_csv(_dataset_path(args, out))
    mesh = _mesh(cfg)
    rc = ReconConfig(lam=cfg.recon_lambda, prior=cfg.recon_prior,
                     reference_sigma=cfg.sigma_water, contact_impedance=cfg.contact_impedance)
    rec = build_reconstructor(mesh, adjacent_protocol(cfg.current_amplitude), rc)
    rdir = out / "recon"
    rdir.mkdir(exist_ok=True)
    for i in args.frame:
        if not 0 <= i < len(ds):
            raise ValidationError(f"frame {i} out of range (dataset has {len(ds)} rows)")
        ds_map = rec(ds.X[i])
        _write_dsigma(rdir / f"frame_{i:03d}_dsigma.csv", mesh, ds_map)
        (rdir / f"frame_{i:03d}.svg").write_text(render_heatmap(mesh, ds_map))
        cx, cy = blob_centroid(mesh, ds_map)
        print(f"frame {i}: blob centroid ({cx * 100:.2f}, {cy * 100:.2f}) cm -> "
              f"{rdir / f'frame_{i:03d}.svg'}")


def _write_dsigma(path, mesh, values):
    c = mesh.geometry.centroid
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["element", "cx", "cy", "dsigma"])
        for k, v in enumerate(values):
            w.writerow([k, repr(float(c[k, 0])), repr(float(c[k, 1])), repr(float(v))])


def _fit_features(ds: LabeledDataset, cfg: RunConfig, threshold=None) -> PcaModel:
    tr = ds.mask("train")
    if threshold is not None:
        return fit_pca(ds.X[tr], k=None, threshold=threshold, standardize=cfg.pca_standardize)
    return fit_pca(ds.X[tr], k=cfg.pca_k, standardize=cfg.pca_standardize)


def cmd_pca(args, cfg, out):
    ds = LabeledDataset.from_csv(_dataset_path(args, out))
    model = _fit_features(ds, cfg, args.threshold)
    (out / "pca.json").write_text(model.to_json())
    scores = project(model, ds.X)
    with (out / "pca_scores.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "split"] + [f"pc{j + 1}" for j in range(model.k)])
        for i, row in enumerate(scores):
            w.writerow([i, ds.meta[i]["split"]] + [repr(float(x)) for x in row])
    print(f"pca: k={model.k}, cumulative explained ratio {model.cumulative_ratio(model.k):.4f}")


def _task_rows(ds: LabeledDataset, task: str):
    col, kind = TASKS[task]
    y = ds.column(col)
    rows = np.ones(len(ds), dtype=bool)
    if task == "angle":
        rows = ds.column("r_cm") > 0
    if task == "radial":
        y = np.rint(y).astype(int)
    return y, kind, rows


def cmd_train(args, cfg, out):
    ds = LabeledDataset.from_csv(_dataset_path(args, out))
    pca = _fit_features(ds, cfg)
    S = project(pca, ds.X)
    y, kind, rows = _task_rows(ds, args.task)
    tr = ds.mask("train") & rows
    va = ds.mask("validation") & rows
    if not tr.any():
        raise ValidationError(f"no training rows for task {args.task}")
    L = args.learner
    if kind == "angle" and L in ("knn", "svm"):
        raise ValidationError(f"{L} is a classifier; task {args.task} is an angle regression")
    if kind == "classification" and L == "gpr":
        raise ValidationError("gpr is a regressor; choose mlp, knn or svm for classification")
    if L == "mlp":
        if kind == "angle":
            model, rep = train_mlp(S[tr], encode(y[tr]), args.hidden, seed=cfg.seed,
                                   X_val=S[va], Y_val=encode(y[va]), max_iter=cfg.max_iter)
        else:
            model, rep = train_mlp(S[tr], y[tr], args.hidden, seed=cfg.seed,
                                   task="classification", X_val=S[va], Y_val=y[va],
                                   max_iter=cfg.max_iter)
        payload = {"model": model.to_dict(), "training": rep.to_dict()}
    elif L == "knn":
        payload = {"model": {"k": cfg.knn_k, "X": S[tr].tolist(),
                             "labels": [_plain(v) for v in y[tr]]}}
    elif L == "svm":
        payload = {"model": train_linear_svm(S[tr], y[tr], C=cfg.svm_c, epochs=cfg.svm_epochs,
                                             seed=cfg.seed).to_dict()}
    else:
        payload = {"model": train_gpr(S[tr], encode(y[tr])).to_dict()}
    payload.update(learner=L, task=args.task, seed=cfg.seed,
                   pca=json.loads(pca.to_json()))
    path = Path(args.model) if args.model else out / f"{L}_{args.task}.json"
    path.write_text(json.dumps(payload, sort_keys=True) + "\n")
    print(f"trained {L} for {args.task} on {int(tr.sum())} rows -> {path}")


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def _predict(payload, S):
    L, m = payload["learner"], payload["model"]
    kind = TASKS[payload["task"]][1]
    if L == "mlp":
        out = predict_mlp(MlpModel.from_dict(m), S)
        return decode(out) if kind == "angle" else out
    if L == "knn":
        return knn(np.array(m["X"]), np.array(m["labels"]), m["k"], S)
    if L == "svm":
        return LinearSvm.from_dict(m).predict(S)
    return decode(predict_gpr(GprModel.from_dict(m), S)[0])


def cmd_eval(args, cfg, out):
    mpath = Path(args.model)
    if not mpath.is_file():
        raise ValidationError(f"model not found: {mpath}")
    payload = json.loads(mpath.read_text())
    ds = LabeledDataset.from_csv(_dataset_path(args, out))
    pca = PcaModel.from_json(json.dumps(payload["pca"]))
    S = project(pca, ds.X)
    y, kind, rows = _task_rows(ds, payload["task"])
    pred = _predict(payload, S)
    result = {"learner": payload["learner"], "task": payload["task"], "splits": {}}
    for s in SPLITS:
        m = ds.mask(s) & rows
        if not m.any():
            continue
        if kind == "classification":
            classes = sorted(set(np.asarray(y[rows]).tolist()))
            result["splits"][s] = compute_metrics(pred[m], y[m], kind, classes=classes,
                                                  split=s).to_dict()
        else:
            result["splits"][s] = compute_metrics(pred[m], y[m], kind)
    path = out / f"eval_{mpath.stem}.json"
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    for s, r in result["splits"].items():
        key = "accuracy" if kind == "classification" else "rmse"
        print(f"{s}: {key} {r[key]:.4f}")


def cmd_experiment(args, cfg, out):
    names = EXPERIMENTS if args.which == "all" else (args.which,)
    for name in names:
        rep = run_experiment(name, cfg, out / name)
        print(f"experiment {name}: report -> {out / name / 'report.json'}")
        _summary(name, rep)


def _summary(name, rep):
    def acc(block):
        return block["confusion"]["test"]["accuracy"]
    if name == "loc":
        print(f"  radial MLP test accuracy {acc(rep['radial']['mlp']):.3f}; angle test mean "
              f"error {rep['angle']['mlp']['metrics']['test']['mae']:.2f} deg")
    elif name == "crack":
        print(f"  MLP test circular RMSE {rep['mlp']['metrics']['test']['rmse']:.2f} deg; "
              f"GPR {rep['gpr']['metrics']['test']['rmse']:.2f} deg")
    else:
        print(f"  KNN test accuracy {acc(rep['knn']):.3f}; MLP {acc(rep['mlp']):.3f}")


def cmd_plot(args, cfg, out):
    src = Path(args.dsigma)
    if not src.is_file():
        raise ValidationError(f"file not found: {src}")
    with src.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "dsigma" not in rows[0]:
        raise ValidationError(f"{src}: expected a 'dsigma' column")
    values = np.array([float(r["dsigma"]) for r in rows])
    mesh = _mesh(cfg)
    svg = Path(args.svg) if args.svg else out / (src.stem + ".svg")
    svg.write_text(render_heatmap(mesh, values))
    print(f"heatmap -> {svg}")


COMMANDS = {"mesh": cmd_mesh, "dataset": cmd_dataset, "reconstruct": cmd_reconstruct,
            "pca": cmd_pca, "train": cmd_train, "eval": cmd_eval,
            "experiment": cmd_experiment, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        out = _out(cfg)
        _snapshot(cfg, out, args.command)
        COMMANDS[args.command](args, cfg, out)
    except ValidationError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"{PROG}: numerical failure in '{args.command}': {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
