"""Flat ``key = value`` run configuration.

Values resolve in three layers: built-in defaults, then an optional config
file, then command-line flags. Unknown keys are errors. Every run writes the
fully resolved configuration next to its outputs so it can be replayed from
that file alone.
"""
from __future__ import annotations

from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ValidationError
from .phantom import DatasetConfig, MaterialParams, NoiseModel


def _opt(default, help_text):
    return field(default=default, metadata={"help": help_text})


@dataclass(frozen=True)
class RunConfig:
    seed: int = _opt(0, "root seed; noise, jitter, splits, init and folds derive from it")
    out: str = _opt("runs", "output directory")
    jobs: int = _opt(1, "worker processes for frame simulation and folds")
    # mesh and protocol
    tank_radius: float = _opt(0.075, "tank radius in m")
    refinement: int = _opt(3, "mesh refinement level (1-6)")
    electrode_coverage: float = _opt(0.5, "fraction of the rim covered by electrodes")
    contact_impedance: float = _opt(1e-3, "electrode contact impedance in Ohm m^2")
    current_amplitude: float = _opt(1e-3, "drive current in A")
    # materials
    sigma_water: float = _opt(2e-4, "background conductivity in S/m")
    sigma_specimen: float = _opt(0.05, "unloaded specimen conductivity in S/m")
    alpha_healthy: float = _opt(0.60, "load gain, healthy")
    alpha_loose: float = _opt(0.40, "load gain, loose")
    alpha_vcrack: float = _opt(0.25, "load gain, vertical crack")
    alpha_hcrack: float = _opt(0.10, "load gain, horizontal crack")
    horizontal_derating: float = _opt(0.5, "conductivity factor for a horizontal crack")
    gap_width: float = _opt(1e-3, "loose-stem gap width in m")
    slit_width: float = _opt(1e-3, "crack width in m")
    slit_length: float = _opt(0.02, "crack length in m")
    specimen_radius: float = _opt(0.02, "specimen radius in m")
    male_radius: float = _opt(0.01, "radius of the stem/cement interface in m")
    # noise
    noise: float = _opt(1e-2, "per-reading noise sd as a fraction of baseline RMS")
    readings: int = _opt(100, "readings averaged per measurement")
    sigma_jitter: float = _opt(0.05, "per-specimen lognormal conductivity jitter")
    position_jitter: float = _opt(5e-4, "per-specimen position jitter sd in m")
    angle_jitter: float = _opt(2.0, "per-specimen crack angle jitter sd in deg")
    # datasets and splits
    split_mode: str = _opt("specimen-holdout", "specimen-holdout or random")
    n_specimens: int = _opt(0, "specimens per experiment; 0 uses 4 (LOC, CRACK) or 3 (HEALTH)")
    radii_cm: str = _opt("0,2,4", "LOC radial positions in cm, comma separated")
    angle_step: float = _opt(30.0, "angular step for LOC positions and crack angles in deg")
    load_min: float = _opt(300.0, "HEALTH lowest load in N")
    load_max: float = _opt(2200.0, "HEALTH highest load in N")
    load_steps: int = _opt(20, "HEALTH load steps")
    # features and learners
    pca_k: int = _opt(4, "principal components kept")
    pca_standardize: bool = _opt(False, "scale channels to unit variance before PCA")
    loc_features: str = _opt("pca", "LOC radial classifier input: pca or raw")
    hidden_loc: int = _opt(5, "hidden units, LOC networks")
    hidden_crack: int = _opt(5, "hidden units, CRACK network")
    hidden_health: int = _opt(3, "hidden units, HEALTH network")
    max_iter: int = _opt(200, "Levenberg-Marquardt iteration cap")
    knn_k: int = _opt(5, "neighbours for KNN")
    svm_c: float = _opt(1.0, "linear SVM C")
    svm_epochs: int = _opt(1000, "linear SVM epochs")
    cv_folds: int = _opt(5, "cross-validation folds for HEALTH KNN")
    # reconstruction
    recon_lambda: float = _opt(0.05, "Tikhonov weight")
    recon_prior: str = _opt("sensitivity", "sensitivity or identity")
    heatmaps: int = _opt(4, "sample SVG heatmaps written per experiment")

    def __post_init__(self):
        if self.split_mode not in ("specimen-holdout", "random"):
            raise ValidationError(f"split_mode must be specimen-holdout or random, got {self.split_mode!r}")
        if self.loc_features not in ("pca", "raw"):
            raise ValidationError(f"loc_features must be pca or raw, got {self.loc_features!r}")
        if self.recon_prior not in ("sensitivity", "identity"):
            raise ValidationError(f"recon_prior must be sensitivity or identity, got {self.recon_prior!r}")
        for name in ("jobs", "pca_k", "hidden_loc", "hidden_crack", "hidden_health", "knn_k",
                     "svm_epochs", "readings", "max_iter", "load_steps"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be >= 2")
        if self.heatmaps < 0 or self.n_specimens < 0:
            raise ValidationError("heatmaps and n_specimens must be >= 0")
        self.radii  # parse check

    @property
    def radii(self) -> tuple:
        try:
            return tuple(float(x) for x in self.radii_cm.split(",") if x.strip())
        except ValueError:
            raise ValidationError(f"radii_cm must be comma-separated numbers, got {self.radii_cm!r}") from None

    def material_params(self) -> MaterialParams:
        return MaterialParams(
            sigma_water=self.sigma_water, sigma_specimen=self.sigma_specimen,
            alpha_healthy=self.alpha_healthy, alpha_loose=self.alpha_loose,
            alpha_vcrack=self.alpha_vcrack, alpha_hcrack=self.alpha_hcrack,
            horizontal_derating=self.horizontal_derating, gap_width=self.gap_width,
            slit_width=self.slit_width, slit_length=self.slit_length,
            specimen_radius=self.specimen_radius, male_radius=self.male_radius)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(per_reading_sd=self.noise, readings_per_measurement=self.readings,
                          specimen_sigma_jitter=self.sigma_jitter,
                          position_jitter=self.position_jitter, angle_jitter=self.angle_jitter,
                          seed=self.seed)

    def dataset_config(self, experiment: str) -> DatasetConfig:
        return DatasetConfig(
            experiment=experiment, n_specimens=self.n_specimens or None, radii_cm=self.radii,
            angle_step=self.angle_step, load_min=self.load_min, load_max=self.load_max,
            load_steps=self.load_steps, split_mode=self.split_mode,
            tank_radius=self.tank_radius, refinement=self.refinement,
            electrode_coverage=self.electrode_coverage,
            contact_impedance=self.contact_impedance,
            current_amplitude=self.current_amplitude,
            params=self.material_params(), noise=self.noise_model())

    def to_text(self) -> str:
        lines = ["# resolved run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


FIELDS = {f.name: f for f in fields(RunConfig)}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name: str, text):
    f = FIELDS[name]
    kind = type(f.default) if f.default is not MISSING else str
    if not isinstance(text, str):
        text = str(text)
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ValidationError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELDS:
            raise ValidationError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def resolve(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``file_path``, then ``overrides`` (already typed or text)."""
    values = {}
    if file_path is not None:
        p = Path(file_path)
        if not p.is_file():
            raise ValidationError(f"config file not found: {p}")
        values.update(parse_text(p.read_text(), str(p)))
    for key, value in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in FIELDS:
            raise ValidationError(f"unknown key {key!r}")
        if value is not None:
            values[key] = _coerce(key, value)
    return replace(RunConfig(), **values)


def help_lines() -> list[str]:
    return [f"  {f.name} = {_format(f.default)}  ({f.metadata['help']})" for f in fields(RunConfig)]


def as_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
