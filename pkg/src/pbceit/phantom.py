"""Phantom scenarios: conductivity fields, noisy frames and labelled datasets.

A specimen is a conductive disc in the water-filled tank. Its conductivity
rises linearly with compressive load at a rate set by the health condition.
Cracks and the loose-stem gap are thin water-filled regions; elements they
only partly cover get the series (harmonic) blend of the two conductivities,
so a 1 mm feature still blocks current across a coarse element.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import seeding
from .errors import ValidationError
from .forward import CemModel, DriveProtocol, MeasurementFrame, adjacent_protocol, measure
from .mesh import (DEFAULT_COVERAGE, DEFAULT_RADIUS, DEFAULT_REFINEMENT, Mesh, annulus,
                   build_mesh, disc, elements_in_region, region_coverage, slit)

KINDS = ("LOC", "CRACK", "HEALTH")
CONDITIONS = ("healthy", "vertical_crack", "horizontal_crack", "loose")
SPLITS = ("train", "validation", "test")
N_CHANNELS = 208


class GeometryError(ValidationError):
    pass


@dataclass(frozen=True)
class MaterialParams:
    sigma_water: float = 2e-4
    sigma_specimen: float = 0.05
    alpha_healthy: float = 0.60
    alpha_loose: float = 0.40
    alpha_vcrack: float = 0.25
    alpha_hcrack: float = 0.10
    horizontal_derating: float = 0.5
    gap_width: float = 1e-3
    slit_width: float = 1e-3
    slit_length: float = 0.02
    specimen_radius: float = 0.02
    male_radius: float = 0.01
    reference_load: float = 2200.0
    coverage_order: int = 8

    def __post_init__(self):
        a = (self.alpha_healthy, self.alpha_loose, self.alpha_vcrack, self.alpha_hcrack)
        if not (a[0] > a[1] > a[2] > a[3] > 0):
            raise ValidationError(
                "load gains must satisfy healthy > loose > vertical > horizontal > 0")
        if self.sigma_water <= 0 or self.sigma_specimen <= 0:
            raise ValidationError("conductivities must be positive")
        if not (0 < self.horizontal_derating <= 1):
            raise ValidationError("horizontal_derating must lie in (0, 1]")
        for name in ("gap_width", "slit_width", "slit_length", "specimen_radius",
                     "male_radius", "reference_load"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.male_radius + 0.5 * self.gap_width >= self.specimen_radius:
            raise ValidationError("male_radius plus half the gap must sit inside the specimen")

    def alpha(self, condition: str) -> float:
        return {"healthy": self.alpha_healthy, "loose": self.alpha_loose,
                "vertical_crack": self.alpha_vcrack,
                "horizontal_crack": self.alpha_hcrack}[condition]


@dataclass(frozen=True)
class NoiseModel:
    per_reading_sd: float = 1e-2
    readings_per_measurement: int = 100
    specimen_sigma_jitter: float = 0.05
    position_jitter: float = 5e-4
    angle_jitter: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.per_reading_sd < 0 or self.specimen_sigma_jitter < 0:
            raise ValidationError("noise standard deviations must be >= 0")
        if self.position_jitter < 0 or self.angle_jitter < 0:
            raise ValidationError("jitters must be >= 0")
        if int(self.readings_per_measurement) < 1:
            raise ValidationError("readings_per_measurement must be >= 1")

    @property
    def averaged_sd(self) -> float:
        """Relative sd of one averaged measurement."""
        return self.per_reading_sd / math.sqrt(self.readings_per_measurement)


@dataclass(frozen=True)
class Scenario:
    kind: str
    r: float = 0.0  # m
    theta: float = 0.0  # deg
    crack_angle: float = 0.0  # deg
    condition: str = "healthy"
    load: float = 0.0  # N
    specimen_id: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if self.condition not in CONDITIONS:
            raise ValidationError(f"unknown condition {self.condition!r}")
        if self.r < 0 or not (0.0 <= self.theta < 360.0) or self.load < 0:
            raise ValidationError(f"invalid scenario placement/load: {self}")

    @property
    def center(self) -> tuple[float, float]:
        t = math.radians(self.theta)
        return (self.r * math.cos(t), self.r * math.sin(t))


@dataclass(frozen=True)
class Jitter:
    dx: float = 0.0
    dy: float = 0.0
    dangle: float = 0.0
    sigma_scale: float = 1.0


def specimen_jitter(noise: NoiseModel, *key) -> Jitter:
    """Jitter for one physical specimen; ``key`` identifies it (e.g. kind, condition, id)."""
    rng = seeding.rng_for(noise.seed, "jitter", *key)
    dx, dy = rng.normal(0.0, 1.0, 2) * noise.position_jitter
    dangle = rng.normal() * noise.angle_jitter
    scale = math.exp(rng.normal() * noise.specimen_sigma_jitter)
    return Jitter(float(dx), float(dy), float(dangle), float(scale))


def _series_blend(sigma, fraction, sigma_fill):
    """Harmonic mix: ``fraction`` of each element filled with ``sigma_fill``."""
    return 1.0 / ((1.0 - fraction) / sigma + fraction / sigma_fill)


def render_field(mesh: Mesh, scenario: Scenario, params: MaterialParams = MaterialParams(),
                 jitter: Jitter = Jitter()) -> np.ndarray:
    """Per-element conductivity for ``scenario`` (jitter already drawn)."""
    cx, cy = scenario.center
    cx, cy = cx + jitter.dx, cy + jitter.dy
    rs = params.specimen_radius
    if math.hypot(cx, cy) + rs > mesh.tank_radius:
        raise GeometryError(
            f"specimen at r={math.hypot(cx, cy):.4f} m with radius {rs} m leaves the tank")
    order = params.coverage_order
    kind = scenario.kind
    condition = "healthy" if kind == "LOC" else scenario.condition
    if kind == "CRACK":
        condition = "vertical_crack"

    sig_spec = params.sigma_specimen * jitter.sigma_scale
    sig_spec *= 1.0 + params.alpha(condition) * scenario.load / params.reference_load
    if condition == "horizontal_crack":
        sig_spec *= params.horizontal_derating

    sw = params.sigma_water
    frac = region_coverage(mesh, disc((cx, cy), rs), order)
    sigma = sw + frac * (sig_spec - sw)

    if condition == "vertical_crack":
        angle = (scenario.crack_angle + jitter.dangle) % 360.0
        cut = region_coverage(mesh, slit((cx, cy), angle, params.slit_length,
                                         params.slit_width), order)
        cut = np.minimum(cut, frac)
        sigma = _series_blend(sigma, cut, sw)
    elif condition == "loose":
        half = 0.5 * params.gap_width
        gap = region_coverage(mesh, annulus((cx, cy), params.male_radius - half,
                                            params.male_radius + half), order)
        sigma = _series_blend(sigma, gap, sw)
    return sigma


def load_response(mesh: Mesh, condition: str, load: float,
                  params: MaterialParams = MaterialParams(), crack_angle: float = 0.0) -> float:
    """Mean |σ(load) - σ(0)| over the area of a centred specimen.

    Evaluated on the continuous phantom rather than on element values: water
    in a crack or gap does not respond to load, and its true area share is
    used instead of the footprint of the elements it touches.
    """
    rs = params.specimen_radius
    gain = params.alpha(condition) * load / params.reference_load
    change = params.sigma_specimen * gain
    if condition == "horizontal_crack":
        change *= params.horizontal_derating
    area = mesh.geometry.area
    order = params.coverage_order
    inside = region_coverage(mesh, disc((0.0, 0.0), rs), order)
    if condition == "vertical_crack":
        defect = np.minimum(region_coverage(
            mesh, slit((0.0, 0.0), crack_angle, params.slit_length, params.slit_width), order),
            inside)
    elif condition == "loose":
        half = 0.5 * params.gap_width
        defect = region_coverage(mesh, annulus((0.0, 0.0), params.male_radius - half,
                                               params.male_radius + half), order)
    else:
        defect = np.zeros_like(inside)
    cement = float(area @ (inside - defect))
    return abs(change) * cement / float(area @ inside)


def specimen_elements(mesh: Mesh, scenario: Scenario, params: MaterialParams,
                      jitter: Jitter = Jitter()) -> np.ndarray:
    cx, cy = scenario.center
    return elements_in_region(mesh, disc((cx + jitter.dx, cy + jitter.dy),
                                         params.specimen_radius))


# ---------------------------------------------------------------------------
# frame simulation
# ---------------------------------------------------------------------------

class Simulator:
    """Bundles mesh, protocol, materials and noise; caches noiseless frames."""

    def __init__(self, mesh: Mesh | None = None, protocol: DriveProtocol | None = None,
                 params: MaterialParams = MaterialParams(), noise: NoiseModel = NoiseModel(),
                 contact_impedance: float = 1e-3):
        self.mesh = mesh or build_mesh()
        self.protocol = protocol or adjacent_protocol()
        self.params = params
        self.noise = noise
        self.contact_impedance = contact_impedance
        self.model = CemModel(self.mesh, contact_impedance)
        self._cache: dict = {}

    @property
    def baseline_field(self) -> np.ndarray:
        return np.full(self.mesh.n_elements, self.params.sigma_water)

    def baseline(self) -> np.ndarray:
        if "baseline" not in self._cache:
            self._cache["baseline"] = measure(self.mesh, self.baseline_field, self.protocol,
                                              model=self.model).v
        return self._cache["baseline"]

    def noise_sd(self) -> float:
        b = self.baseline()
        return self.noise.averaged_sd * float(np.sqrt(np.mean(b * b)))

    def jitter_for(self, scenario: Scenario) -> Jitter:
        key = (scenario.kind, scenario.condition if scenario.kind == "HEALTH" else "",
               scenario.specimen_id)
        return specimen_jitter(self.noise, *key)

    def clean_frame(self, scenario: Scenario, jitter: Jitter) -> np.ndarray:
        key = (scenario, jitter)
        if key not in self._cache:
            sigma = render_field(self.mesh, scenario, self.params, jitter)
            self._cache[key] = measure(self.mesh, sigma, self.protocol, model=self.model).v
        return self._cache[key]

    def simulate_frame(self, scenario: Scenario, frame_key=0) -> MeasurementFrame:
        """Noiseless frame plus averaged Gaussian noise.

        Averaging ``readings_per_measurement`` readings of sd
        ``per_reading_sd * rms(baseline)`` is drawn directly as one Gaussian
        with the averaged sd.
        """
        jit = self.jitter_for(scenario)
        v = self.clean_frame(scenario, jit).copy()
        sd = self.noise_sd()
        if sd > 0:
            keys = frame_key if isinstance(frame_key, tuple) else (frame_key,)
            rng = seeding.rng_for(self.noise.seed, "noise", *keys)
            v += rng.normal(0.0, sd, v.shape)
        meta = asdict(scenario)
        meta.update(jitter=asdict(jit), frame_key=frame_key)
        return MeasurementFrame(v=v, meta=meta)


def simulate_frame(mesh: Mesh, scenario: Scenario, params: MaterialParams,
                   noise: NoiseModel, protocol: DriveProtocol, frame_key=0,
                   contact_impedance: float = 1e-3) -> MeasurementFrame:
    sim = Simulator(mesh, protocol, params, noise, contact_impedance)
    return sim.simulate_frame(scenario, frame_key)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    experiment: str = "LOC"
    n_specimens: int | None = None  # default: 4 for LOC/CRACK, 3 for HEALTH
    radii_cm: tuple = (0.0, 2.0, 4.0)
    angle_step: float = 30.0
    load_min: float = 300.0
    load_max: float = 2200.0
    load_steps: int = 20
    fixed_load: float = 0.0
    health_crack_deg: float = 0.0
    split_mode: str = "specimen-holdout"
    tank_radius: float = DEFAULT_RADIUS
    refinement: int = DEFAULT_REFINEMENT
    electrode_coverage: float = DEFAULT_COVERAGE
    contact_impedance: float = 1e-3
    current_amplitude: float = 1e-3
    params: MaterialParams = field(default_factory=MaterialParams)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.experiment not in KINDS:
            raise ValidationError(f"experiment must be one of {KINDS}, got {self.experiment!r}")
        if self.split_mode not in ("random", "specimen-holdout"):
            raise ValidationError(f"unknown split mode {self.split_mode!r}")
        if self.n_specimens is not None and self.n_specimens < 2:
            raise ValidationError("need at least 2 specimens")
        if self.load_steps < 1 or self.load_max < self.load_min or self.load_min < 0:
            raise ValidationError("invalid load sweep")
        if not (0 < self.angle_step <= 360):
            raise ValidationError("angle_step must lie in (0, 360]")

    @property
    def specimens(self) -> int:
        if self.n_specimens is not None:
            return self.n_specimens
        return 3 if self.experiment == "HEALTH" else 4

    @property
    def angles(self) -> np.ndarray:
        return np.arange(0.0, 360.0 - 1e-9, self.angle_step)

    @property
    def loads(self) -> np.ndarray:
        return np.linspace(self.load_min, self.load_max, self.load_steps)


@dataclass
class LabeledDataset:
    X: np.ndarray  # frames minus baseline
    baseline: np.ndarray
    meta: list  # one dict per row: scenario, specimen_id, r_cm, theta_deg, ...

    def __post_init__(self):
        if self.X.shape[0] != len(self.meta):
            raise ValidationError("row count and label count differ")

    def __len__(self):
        return self.X.shape[0]

    def column(self, name) -> np.ndarray:
        return np.array([m[name] for m in self.meta])

    @property
    def split(self) -> np.ndarray:
        return self.column("split")

    def mask(self, *splits) -> np.ndarray:
        return np.isin(self.split, splits)

    def to_csv(self, path, baseline_path=None) -> None:
        path = Path(path)
        header = list(CSV_META) + [f"v_{i:03d}" for i in range(self.X.shape[1])]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row, m in zip(self.X, self.meta):
                w.writerow([_fmt(m[c]) for c in CSV_META] + [repr(float(x)) for x in row])
        baseline_path = Path(baseline_path) if baseline_path else _baseline_path(path)
        with baseline_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"v_{i:03d}" for i in range(self.baseline.size)])
            w.writerow([repr(float(x)) for x in self.baseline])

    @classmethod
    def from_csv(cls, path, baseline_path=None) -> "LabeledDataset":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValidationError(f"{path}: empty dataset file")
        header = rows[0]
        if header[:len(CSV_META)] != list(CSV_META):
            raise ValidationError(f"{path}: unexpected header {header[:len(CSV_META)]}")
        n_meta = len(CSV_META)
        meta, X = [], []
        for r in rows[1:]:
            m = {c: _parse(c, v) for c, v in zip(CSV_META, r[:n_meta])}
            meta.append(m)
            X.append([float(x) for x in r[n_meta:]])
        baseline_path = Path(baseline_path) if baseline_path else _baseline_path(path)
        with baseline_path.open(newline="") as fh:
            b = list(csv.reader(fh))
        baseline = np.array([float(x) for x in b[1]])
        return cls(X=np.array(X, dtype=float).reshape(len(meta), -1), baseline=baseline,
                   meta=meta)


CSV_META = ("scenario", "specimen_id", "r_cm", "theta_deg", "crack_deg", "condition",
            "load_N", "split")


def _baseline_path(path: Path) -> Path:
    return path.with_name(path.stem + "_baseline.csv")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _parse(col, text):
    if col in ("scenario", "condition", "split"):
        return text
    if col == "specimen_id":
        return int(text)
    return float(text)


def _scenarios(cfg: DatasetConfig) -> list[Scenario]:
    out = []
    n = cfg.specimens
    if cfg.experiment == "LOC":
        positions = []
        for r in cfg.radii_cm:
            if r == 0:
                positions.append((0.0, 0.0))
            else:
                positions += [(r, float(a)) for a in cfg.angles]
        for sid in range(1, n + 1):
            for r, a in positions:
                out.append(Scenario("LOC", r=r / 100.0, theta=a, load=cfg.fixed_load,
                                    specimen_id=sid))
    elif cfg.experiment == "CRACK":
        for sid in range(1, n + 1):
            for a in cfg.angles:
                out.append(Scenario("CRACK", crack_angle=float(a), condition="vertical_crack",
                                    load=cfg.fixed_load, specimen_id=sid))
    else:
        for cond in CONDITIONS:
            for sid in range(1, n + 1):
                for load in cfg.loads:
                    out.append(Scenario("HEALTH", condition=cond, load=float(load),
                                        crack_angle=cfg.health_crack_deg, specimen_id=sid))
    return out


def _row_meta(sc: Scenario) -> dict:
    return {
        "scenario": sc.kind,
        "specimen_id": sc.specimen_id,
        "r_cm": round(sc.r * 100.0, 9),
        "theta_deg": sc.theta,
        "crack_deg": sc.crack_angle if sc.kind == "CRACK" else 0.0,
        "condition": sc.condition if sc.kind == "HEALTH" else "healthy",
        "load_N": sc.load,
        "split": "",
    }


def stratum(meta: dict) -> str:
    """Label used to stratify splits for the row's experiment."""
    kind = meta["scenario"]
    if kind == "LOC":
        return f"r{meta['r_cm']:g}"
    if kind == "CRACK":
        return f"c{meta['crack_deg']:g}"
    return meta["condition"]


def assign_splits(meta: list, mode: str, seed: int) -> list:
    """Label every row train/validation/test in place and return ``meta``."""
    rng = seeding.rng_for(seed, "split", mode)
    if mode == "specimen-holdout":
        last = max(m["specimen_id"] for m in meta)
        pool = [i for i, m in enumerate(meta) if m["specimen_id"] != last]
        for i, m in enumerate(meta):
            if m["specimen_id"] == last:
                m["split"] = "test"
        fractions = (0.8, 0.2, 0.0)
    elif mode == "random":
        pool = list(range(len(meta)))
        fractions = (0.60, 0.15, 0.25)
    else:
        raise ValidationError(f"unknown split mode {mode!r}")
    groups: dict = {}
    for i in pool:
        groups.setdefault(stratum(meta[i]), []).append(i)
    for key in sorted(groups):
        idx = np.array(groups[key])
        idx = idx[rng.permutation(idx.size)]
        n = idx.size
        n_val = int(round(fractions[1] * n))
        n_test = int(round(fractions[2] * n))
        n_train = n - n_val - n_test
        for j, i in enumerate(idx):
            meta[i]["split"] = ("train" if j < n_train else
                                "validation" if j < n_train + n_val else "test")
    return meta


def _simulate_chunk(args):
    cfg, scenarios, keys = args
    sim = simulator_for(cfg)
    return [sim.simulate_frame(sc, k).v for sc, k in zip(scenarios, keys)]


def simulator_for(cfg: DatasetConfig) -> Simulator:
    mesh = build_mesh(cfg.tank_radius, cfg.refinement, cfg.electrode_coverage)
    return Simulator(mesh, adjacent_protocol(cfg.current_amplitude), cfg.params, cfg.noise,
                     cfg.contact_impedance)


def generate_dataset(cfg: DatasetConfig, jobs: int = 1,
                     simulator: Simulator | None = None) -> LabeledDataset:
    """Simulate every frame of ``cfg.experiment`` and store it minus the baseline."""
    scenarios = _scenarios(cfg)
    keys = [(cfg.experiment, i) for i in range(len(scenarios))]
    sim = simulator or simulator_for(cfg)
    baseline = sim.baseline()
    if jobs > 1 and simulator is None:
        chunks = [(cfg, scenarios[j::jobs], keys[j::jobs]) for j in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_simulate_chunk, chunks))
        frames = [None] * len(scenarios)
        for j, part in enumerate(parts):
            frames[j::jobs] = part
    else:
        frames = [sim.simulate_frame(sc, k).v for sc, k in zip(scenarios, keys)]
    X = np.vstack(frames) - baseline[None, :]
    meta = assign_splits([_row_meta(sc) for sc in scenarios], cfg.split_mode, cfg.noise.seed)
    return LabeledDataset(X=X, baseline=baseline.copy(), meta=meta)


def with_noise(cfg: DatasetConfig, **kw) -> DatasetConfig:
    return replace(cfg, noise=replace(cfg.noise, **kw))
