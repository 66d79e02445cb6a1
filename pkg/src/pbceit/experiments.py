"""End-to-end runs of the location, crack-orientation and health experiments.

Each run generates its dataset, fits PCA and the learners on training rows
only, scores every split and writes its artifacts under one directory:

    report.json              metrics, PCA ratios, training summaries
    config.txt               resolved configuration (replayable)
    dataset.csv              frames minus baseline, plus dataset_baseline.csv
    confusion_<model>_<split>.csv
    pca_scatter.csv          first two PCA scores per row
    heatmaps/*.svg           reconstructed Δσ for a few test frames

report.json contains no timings or absolute paths, so identical configs give
byte-identical reports.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding
from .config import RunConfig, as_dict
from .errors import ValidationError
from .features import fit_pca, project
from .learners import (circular_error, circular_rmse, decode, encode, knn, predict_gpr,
                       predict_mlp, train_gpr, train_linear_svm, train_mlp)
from .mesh import disc, elements_in_region
from .phantom import (CONDITIONS, SPLITS, LabeledDataset, Scenario, generate_dataset,
                      load_response, render_field, simulator_for)
from .recon import (ReconConfig, blob_centroid, build_reconstructor, nearest_centroid_fit,
                    nearest_centroid_predict, render_heatmap)

EXPERIMENTS = ("loc", "crack", "health")
LOCALIZATION_TOL = 0.015  # m
ANGLE_BIN = 30.0  # deg


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    classes: list
    counts: np.ndarray  # rows = truth, columns = prediction
    split: str | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def to_dict(self) -> dict:
        return {"classes": [_plain(c) for c in self.classes], "counts": self.counts.tolist(),
                "split": self.split, "accuracy": self.accuracy, "n": self.total}

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["truth\\predicted"] + [_plain(c) for c in self.classes])
            for c, row in zip(self.classes, self.counts):
                w.writerow([_plain(c)] + [int(x) for x in row])


def compute_metrics(predictions, truths, task: str, classes=None, split: str | None = None):
    """Confusion matrix for ``classification``; error statistics otherwise.

    ``regression`` gives RMSE, MAE and max error; ``angle`` uses wrap-around
    errors in degrees.
    """
    pred = np.asarray(predictions)
    truth = np.asarray(truths)
    if pred.shape[0] != truth.shape[0]:
        raise ValidationError(f"{pred.shape[0]} predictions for {truth.shape[0]} truths")
    if task == "classification":
        if classes is None:
            classes = np.unique(np.concatenate([truth, pred]))
        classes = list(classes)
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(truth.tolist(), pred.tolist()):
            if t not in index or p not in index:
                raise ValidationError(f"label {t!r} or {p!r} not among classes {classes}")
            counts[index[t], index[p]] += 1
        return ConfusionMatrix(classes=classes, counts=counts, split=split)
    if task == "regression":
        err = np.abs(pred.astype(float) - truth.astype(float)).ravel()
    elif task == "angle":
        err = circular_error(pred, truth).ravel()
    else:
        raise ValidationError(f"unknown metric task {task!r}")
    if err.size == 0:
        return {"n": 0}
    out = {"n": int(err.size), "rmse": float(np.sqrt(np.mean(err ** 2))),
           "mae": float(np.mean(err)), "max": float(np.max(err))}
    if task == "angle":
        out["median"] = float(np.median(err))
    return out


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

class _Run:
    """Output directory, dataset and report under construction for one experiment."""

    def __init__(self, name: str, cfg: RunConfig, out_dir, dataset: LabeledDataset | None):
        self.name = name
        self.cfg = cfg
        self.dir = Path(out_dir) if out_dir is not None else Path(cfg.out) / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.dcfg = cfg.dataset_config(name.upper())
        self.sim = simulator_for(self.dcfg)
        self.ds = dataset if dataset is not None else generate_dataset(
            self.dcfg, jobs=cfg.jobs, simulator=None if cfg.jobs > 1 else self.sim)
        self.masks = {s: self.ds.mask(s) for s in SPLITS}
        self.artifacts: dict = {}
        self.report: dict = {
            "experiment": name,
            "config": as_dict(cfg),
            "split_mode": cfg.split_mode,
            "rows": {s: int(m.sum()) for s, m in self.masks.items()},
            "artifacts": self.artifacts,
        }
        cfg.save(self.dir / "config.txt")
        self.ds.to_csv(self.dir / "dataset.csv")
        self.artifacts["config"] = "config.txt"
        self.artifacts["dataset"] = "dataset.csv"
        self.artifacts["baseline"] = "dataset_baseline.csv"
        self._recon = None

    @property
    def tr(self):
        return self.masks["train"]

    @property
    def va(self):
        return self.masks["validation"]

    def pca(self):
        model = fit_pca(self.ds.X[self.tr], k=self.cfg.pca_k, standardize=self.cfg.pca_standardize)
        n_ratio = min(10, model.all_ratios.size)
        self.report["pca"] = {
            "k": model.k, "standardize": self.cfg.pca_standardize,
            "explained_ratio": model.explained_ratio.tolist(),
            "cumulative_ratio": {str(k): model.cumulative_ratio(k) for k in range(1, n_ratio + 1)},
        }
        return model, project(model, self.ds.X)

    def reconstructor(self):
        if self._recon is None:
            rc = ReconConfig(lam=self.cfg.recon_lambda, prior=self.cfg.recon_prior,
                             reference_sigma=self.cfg.sigma_water,
                             contact_impedance=self.cfg.contact_impedance)
            self._recon = build_reconstructor(self.sim.mesh, self.sim.protocol, rc)
        return self._recon

    def confusions(self, model_name: str, pred, truth, classes) -> dict:
        out = {}
        for s in SPLITS:
            m = self.masks[s]
            cm = compute_metrics(pred[m], truth[m], "classification", classes=classes, split=s)
            fname = f"confusion_{model_name}_{s}.csv"
            cm.to_csv(self.dir / fname)
            self.artifacts[f"confusion_{model_name}_{s}"] = fname
            out[s] = cm.to_dict()
        return out

    def heatmaps(self, rows, label_fn) -> None:
        rows = list(rows)[:self.cfg.heatmaps]
        if not rows:
            return
        hdir = self.dir / "heatmaps"
        hdir.mkdir(exist_ok=True)
        rec = self.reconstructor()
        names = []
        for i in rows:
            svg = render_heatmap(self.sim.mesh, rec(self.ds.X[i]), title=label_fn(i))
            fname = f"heatmaps/frame_{i:03d}.svg"
            (self.dir / fname).write_text(svg)
            names.append(fname)
        self.artifacts["heatmaps"] = names

    def scatter(self, scores, label_cols) -> None:
        fname = "pca_scatter.csv"
        with (self.dir / fname).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "split"] + list(label_cols) + ["pc1", "pc2"])
            cols = [self.ds.column(c) for c in label_cols]
            for i in range(len(self.ds)):
                w.writerow([i, self.ds.meta[i]["split"]] + [_plain(c[i]) for c in cols]
                           + [repr(float(scores[i, 0])),
                              repr(float(scores[i, 1]) if scores.shape[1] > 1 else 0.0)])
        self.artifacts["pca_scatter"] = fname

    def finish(self) -> dict:
        text = json.dumps(_jsonable(self.report), indent=2, sort_keys=True) + "\n"
        (self.dir / "report.json").write_text(text)
        return self.report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _train_summary(report) -> dict:
    losses = np.asarray(report.train_loss)
    return {"stop_reason": report.stop_reason, "iterations": report.iterations,
            "best_iteration": report.best_iteration,
            "final_train_loss": float(losses[-1]),
            "loss_strictly_decreasing": bool(np.all(np.diff(losses) < 0))}


def _split_angle_metrics(pred, truth, masks) -> dict:
    return {s: compute_metrics(pred[m], truth[m], "angle") for s, m in masks.items()}


def _bin_angle(deg) -> np.ndarray:
    return (np.rint(np.asarray(deg, dtype=float) / ANGLE_BIN).astype(int)
            % int(round(360 / ANGLE_BIN)))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_location(cfg: RunConfig = RunConfig(), out_dir=None,
                 dataset: LabeledDataset | None = None) -> dict:
    """Radial-class and angle estimation for a specimen moved around the tank."""
    run = _Run("loc", cfg, out_dir, dataset)
    ds, tr, va = run.ds, run.tr, run.va
    _, scores = run.pca()
    feats = scores if cfg.loc_features == "pca" else ds.X
    run.report["features"] = cfg.loc_features
    r_cm = ds.column("r_cm")
    radial = np.rint(r_cm).astype(int)
    classes = sorted(set(radial.tolist()))

    mlp, rep = train_mlp(feats[tr], radial[tr], cfg.hidden_loc, seed=cfg.seed,
                         task="classification", X_val=feats[va], Y_val=radial[va],
                         max_iter=cfg.max_iter, stream=("loc", "radial"))
    pred = predict_mlp(mlp, feats)
    svm = train_linear_svm(feats[tr], radial[tr], C=cfg.svm_c, epochs=cfg.svm_epochs,
                           seed=cfg.seed)
    knn_pred = knn(feats[tr], radial[tr], cfg.knn_k, feats)
    run.report["radial"] = {
        "mlp": {"training": _train_summary(rep),
                "confusion": run.confusions("mlp_radial", pred, radial, classes)},
        "svm": {"confusion": run.confusions("svm_radial", svm.predict(feats), radial, classes)},
        "knn": {"k": cfg.knn_k,
                "confusion": run.confusions("knn_radial", knn_pred, radial, classes)},
    }

    # angle: r = 0 has no defined angle
    off = r_cm > 0
    theta = ds.column("theta_deg")
    amlp, arep = train_mlp(scores[tr & off], encode(theta[tr & off]), cfg.hidden_loc,
                           seed=cfg.seed, X_val=scores[va & off], Y_val=encode(theta[va & off]),
                           max_iter=cfg.max_iter, stream=("loc", "angle"))
    theta_hat = np.full(len(ds), np.nan)
    theta_hat[off] = decode(predict_mlp(amlp, scores[off]))
    masks = {s: m & off for s, m in run.masks.items()}
    run.report["angle"] = {"mlp": {"training": _train_summary(arep),
                                   "metrics": _split_angle_metrics(theta_hat, theta, masks)}}

    # linear reconstruction tracks position as a baseline
    rec = run.reconstructor()
    maps = rec(ds.X[off])
    cents = np.array([blob_centroid(run.sim.mesh, m) for m in maps])
    rad = np.deg2rad(theta[off])
    truth_xy = np.c_[r_cm[off] * np.cos(rad), r_cm[off] * np.sin(rad)] / 100.0
    err = np.hypot(*(cents - truth_xy).T)
    run.report["recon_localization"] = {
        "n": int(err.size), "tolerance_m": LOCALIZATION_TOL,
        "fraction_within": float(np.mean(err <= LOCALIZATION_TOL)),
        "mean_error_m": float(err.mean()), "max_error_m": float(err.max())}

    run.heatmaps(np.flatnonzero(run.masks["test"] & off),
                 lambda i: f"r={r_cm[i]:g} cm, theta={theta[i]:g} deg")
    run.scatter(scores, ["r_cm", "theta_deg"])
    return run.finish()


def run_crack(cfg: RunConfig = RunConfig(), out_dir=None,
              dataset: LabeledDataset | None = None) -> dict:
    """Crack-orientation regression on PCA scores, with a reconstruction baseline."""
    run = _Run("crack", cfg, out_dir, dataset)
    ds, tr, va, te = run.ds, run.tr, run.va, run.masks["test"]
    _, scores = run.pca()
    angle = ds.column("crack_deg")

    mlp, rep = train_mlp(scores[tr], encode(angle[tr]), cfg.hidden_crack, seed=cfg.seed,
                         X_val=scores[va], Y_val=encode(angle[va]), max_iter=cfg.max_iter,
                         stream=("crack",))
    mlp_hat = decode(predict_mlp(mlp, scores))
    gpr = train_gpr(scores[tr], encode(angle[tr]))
    gpr_hat = decode(predict_gpr(gpr, scores)[0])
    gm = _split_angle_metrics(gpr_hat, angle, run.masks)
    gap = gm["test"]["rmse"] / gm["train"]["rmse"] if gm["train"]["rmse"] > 0 else float("inf")

    # baseline: nearest class-centroid on reconstructed maps, 30-degree bins
    maps = run.reconstructor()(ds.X)
    bins = _bin_angle(angle)
    fit_rows = tr | va
    nc = nearest_centroid_fit(maps[fit_rows], bins[fit_rows])
    nc_bins = nearest_centroid_predict(nc, maps)
    mlp_bins = _bin_angle(mlp_hat)
    acc = lambda pred, m: float(np.mean(pred[m] == bins[m])) if m.any() else float("nan")
    recon_acc, mlp_acc = acc(nc_bins, te), acc(mlp_bins, te)

    run.report["mlp"] = {"training": _train_summary(rep),
                         "metrics": _split_angle_metrics(mlp_hat, angle, run.masks),
                         "binned_accuracy": {s: acc(mlp_bins, m) for s, m in run.masks.items()}}
    run.report["gpr"] = {"length_scale": gpr.length_scale, "metrics": gm,
                         "test_over_train_rmse": gap, "within_factor_3": bool(gap <= 3.0)}
    run.report["recon_baseline"] = {
        "binned_accuracy": {s: acc(nc_bins, m) for s, m in run.masks.items()},
        "mlp_beats_recon_on_test": bool(mlp_acc > recon_acc),
    }
    classes = list(range(int(round(360 / ANGLE_BIN))))
    run.report["mlp"]["confusion"] = run.confusions("mlp_bins", mlp_bins, bins, classes)
    run.report["recon_baseline"]["confusion"] = run.confusions("recon_bins", nc_bins, bins,
                                                                classes)
    run.heatmaps(np.flatnonzero(te), lambda i: f"crack {angle[i]:g} deg")
    run.scatter(scores, ["crack_deg"])
    return run.finish()


def element_change(mesh, params, load: float, condition: str) -> float:
    """Mean |σ(load) - σ(0)| over the element values inside a centred specimen."""
    sc = Scenario("HEALTH", condition=condition, load=load)
    zero = Scenario("HEALTH", condition=condition, load=0.0)
    inside = elements_in_region(mesh, disc(sc.center, params.specimen_radius))
    d = render_field(mesh, sc, params) - render_field(mesh, zero, params)
    return float(np.mean(np.abs(d[inside])))


def _ordered(change: dict, order) -> bool:
    n = len(change[order[0]])
    return bool(all(all(change[a][i] > change[b][i] for a, b in zip(order, order[1:]))
                    for i in range(n)))


def cluster_separation(scores2, labels) -> dict:
    """Per class: nearest other-centroid distance against twice the mean spread."""
    labels = np.asarray(labels)
    classes = list(dict.fromkeys(labels.tolist()))
    cents = {c: scores2[labels == c].mean(axis=0) for c in classes}
    out = {}
    for c in classes:
        spread = float(np.mean(np.linalg.norm(scores2[labels == c] - cents[c], axis=1)))
        sep = min(float(np.linalg.norm(cents[c] - cents[o])) for o in classes if o != c)
        out[c] = {"separation": sep, "spread": spread, "passes": bool(sep > 2.0 * spread)}
    return out


def _folds(n: int, k: int, labels, seed: int) -> np.ndarray:
    """Stratified fold index per row, seeded."""
    rng = seeding.rng_for(seed, "folds", "health", k)
    fold = np.empty(n, dtype=int)
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % k
    return fold


def run_health(cfg: RunConfig = RunConfig(), out_dir=None,
               dataset: LabeledDataset | None = None) -> dict:
    """Four-way health classification under a load sweep."""
    run = _Run("health", cfg, out_dir, dataset)
    ds, tr, va = run.ds, run.tr, run.va
    model, scores = run.pca()
    cond = ds.column("condition")
    classes = list(CONDITIONS)
    k7 = min(7, model.all_ratios.size)
    run.report["pca"]["first4_below_first7"] = bool(
        model.cumulative_ratio(min(4, k7)) < model.cumulative_ratio(k7))

    # KNN: cross-validate on the training portion, then fit on all of it
    portion = np.flatnonzero(tr | va)
    fold = _folds(portion.size, cfg.cv_folds, cond[portion], cfg.seed)
    cv_acc = []
    for f in range(cfg.cv_folds):
        fit, held = portion[fold != f], portion[fold == f]
        cv_acc.append(float(np.mean(knn(scores[fit], cond[fit], cfg.knn_k, scores[held])
                                    == cond[held])))
    knn_pred = knn(scores[portion], cond[portion], cfg.knn_k, scores)
    mlp, rep = train_mlp(scores[tr], cond[tr], cfg.hidden_health, seed=cfg.seed,
                         task="classification", X_val=scores[va], Y_val=cond[va],
                         max_iter=cfg.max_iter, stream=("health",))
    mlp_pred = predict_mlp(mlp, scores)
    run.report["knn"] = {"k": cfg.knn_k, "cv_folds": cfg.cv_folds, "cv_accuracy": cv_acc,
                         "cv_mean_accuracy": float(np.mean(cv_acc)),
                         "confusion": run.confusions("knn", knn_pred, cond, classes)}
    run.report["mlp"] = {"training": _train_summary(rep),
                         "confusion": run.confusions("mlp", mlp_pred, cond, classes)}

    sep = cluster_separation(scores[:, :2], cond)
    run.report["clusters"] = {"per_class": sep,
                              "passing": int(sum(v["passes"] for v in sep.values()))}

    # conductivity change per condition at each load step
    loads = run.dcfg.loads
    order = ("healthy", "loose", "vertical_crack", "horizontal_crack")
    mesh, params = run.sim.mesh, run.dcfg.params
    phantom = {c: [load_response(mesh, c, float(L), params) for L in loads] for c in order}
    elements = {c: [element_change(mesh, params, float(L), c) for L in loads] for c in order}
    run.report["condition_change"] = {
        "loads": loads.tolist(),
        "phantom_mean_abs_dsigma": phantom,
        "ordering_holds_every_load": _ordered(phantom, order),
        "element_mean_abs_dsigma": elements,
        "element_ordering_holds_every_load": _ordered(elements, order),
    }
    run.heatmaps(np.flatnonzero(run.masks["test"])[::20],
                 lambda i: f"{cond[i]}, {ds.meta[i]['load_N']:g} N")
    run.scatter(scores, ["condition", "load_N"])
    return run.finish()


RUNNERS = {"loc": run_location, "crack": run_crack, "health": run_health}


def run_experiment(name: str, cfg: RunConfig, out_dir=None) -> dict:
    if name not in RUNNERS:
        raise ValidationError(f"experiment must be one of {EXPERIMENTS} or all, got {name!r}")
    return RUNNERS[name](cfg, out_dir)
