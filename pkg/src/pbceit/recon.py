"""One-step linearised difference imaging and SVG rendering of element fields."""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ValidationError
from .forward import DEFAULT_CONTACT_IMPEDANCE, DriveProtocol, jacobian
from .mesh import Mesh

PRIORS = ("identity", "sensitivity")
DEFAULT_LAMBDA = 0.05
DEFAULT_PRIOR = "sensitivity"
TOP_FRACTION = 0.05


@dataclass(frozen=True)
class ReconConfig:
    lam: float = DEFAULT_LAMBDA
    prior: str = DEFAULT_PRIOR
    reference_sigma: float | np.ndarray = 2e-4
    contact_impedance: float = DEFAULT_CONTACT_IMPEDANCE

    def __post_init__(self):
        if self.prior not in PRIORS:
            raise ValidationError(f"prior must be one of {PRIORS}, got {self.prior!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValidationError(f"lambda must be >= 0, got {self.lam!r}")


@dataclass
class Reconstructor:
    """Precomputed linear map from a 208-channel Δv to per-element Δσ.

    Uses the push-through identity
    ``(JᵀJ + λ²P)⁻¹Jᵀ = P⁻¹Jᵀ(JP⁻¹Jᵀ + λ²I)⁻¹``, so only a
    channel-sized system is factored.
    """
    mesh: Mesh
    config: ReconConfig
    J: np.ndarray
    operator: np.ndarray = field(repr=False)  # (n_elements, n_channels)

    def __call__(self, delta_v) -> np.ndarray:
        dv = np.asarray(delta_v, dtype=float)
        if dv.shape[-1] != self.J.shape[0]:
            raise ValidationError(f"expected {self.J.shape[0]} channels, got {dv.shape[-1]}")
        return dv @ self.operator.T


def build_reconstructor(mesh: Mesh, protocol: DriveProtocol,
                        config: ReconConfig = ReconConfig(), J=None) -> Reconstructor:
    if J is None:
        sigma = np.broadcast_to(np.asarray(config.reference_sigma, float), (mesh.n_elements,))
        J = jacobian(mesh, np.array(sigma), protocol, config.contact_impedance)
    if config.prior == "sensitivity":
        p = np.einsum("ij,ij->j", J, J)
        if np.any(p <= 0):
            raise NumericalError("an element has zero sensitivity; diagonal prior undefined")
    else:
        p = np.ones(J.shape[1])
    if config.lam == 0:
        # unregularised normal equations: only well-posed if JᵀJ is full rank
        try:
            c = sla.cho_factor(J.T @ J, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "JᵀJ is rank-deficient and lambda is 0; choose lambda > 0") from exc
        op = sla.cho_solve(c, J.T)
        return Reconstructor(mesh, config, J, op)
    JP = J / p  # J P⁻¹
    gram = JP @ J.T + config.lam ** 2 * np.eye(J.shape[0])
    try:
        c = sla.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"regularised system not positive definite: {exc}") from exc
    op = JP.T @ sla.cho_solve(c, np.eye(J.shape[0]))
    return Reconstructor(mesh, config, J, op)


def reconstruct(mesh: Mesh, protocol: DriveProtocol, config: ReconConfig, delta_v) -> np.ndarray:
    """Δσ per element for one Δv (or one row per frame)."""
    return build_reconstructor(mesh, protocol, config)(delta_v)


def blob_centroid(mesh: Mesh, delta_sigma, fraction: float = TOP_FRACTION) -> np.ndarray:
    """Mean centroid of the ``fraction`` of elements with the largest |Δσ|."""
    ds = np.abs(np.asarray(delta_sigma, dtype=float))
    n = max(1, int(round(fraction * ds.size)))
    top = np.argsort(-ds, kind="stable")[:n]
    return mesh.geometry.centroid[top].mean(axis=0)


def nearest_centroid_fit(maps, labels) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    classes = np.unique(labels)
    cents = np.array([np.asarray(maps)[labels == c].mean(axis=0) for c in classes])
    return classes, cents


def nearest_centroid_predict(model, maps) -> np.ndarray:
    classes, cents = model
    maps = np.atleast_2d(np.asarray(maps, dtype=float))
    d2 = ((maps[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    return classes[np.argmin(d2, axis=1)]


# ---------------------------------------------------------------------------
# SVG heatmap
# ---------------------------------------------------------------------------

# blue - white - red, symmetric about the white midpoint
_ANCHORS = np.array([
    [5, 48, 97], [33, 102, 172], [67, 147, 195], [146, 197, 222], [209, 229, 240],
    [247, 247, 247],
    [253, 219, 199], [244, 165, 130], [214, 96, 77], [178, 24, 43], [103, 0, 31],
], dtype=float)


def colormap_position(delta_sigma) -> np.ndarray:
    """Position in [0, 1] of each value; 0.5 is zero, scale symmetric in |Δσ|."""
    ds = np.asarray(delta_sigma, dtype=float)
    vmax = np.max(np.abs(ds)) if ds.size else 0.0
    if vmax == 0 or not np.isfinite(vmax):
        return np.full(ds.shape, 0.5)
    return 0.5 + 0.5 * ds / vmax


def colors_for(delta_sigma) -> np.ndarray:
    """RGB integer triples for each value."""
    t = colormap_position(delta_sigma) * (len(_ANCHORS) - 1)
    i = np.clip(np.floor(t).astype(int), 0, len(_ANCHORS) - 2)
    f = (t - i)[:, None]
    rgb = _ANCHORS[i] * (1 - f) + _ANCHORS[i + 1] * f
    return np.rint(rgb).astype(int)


def render_heatmap(mesh: Mesh, delta_sigma, size: int = 400, title: str | None = None) -> str:
    """Filled-triangle SVG of an element field with electrodes drawn on the rim."""
    ds = np.asarray(delta_sigma, dtype=float)
    if ds.shape != (mesh.n_elements,):
        raise ValidationError(f"field has shape {ds.shape}, mesh has {mesh.n_elements} elements")
    half = size / 2.0
    pad = 0.06 * size
    s = (half - pad) / mesh.tank_radius

    def xy(p):
        return f"{half + s * p[0]:.2f},{half - s * p[1]:.2f}"

    rgb = colors_for(ds)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    vmax = float(np.max(np.abs(ds))) if ds.size else 0.0
    out.append(f"<desc>symmetric scale, |max| = {vmax:.6e} S/m</desc>")
    out.append('<g stroke="none">')
    for tri, (r, g, b) in zip(mesh.elements, rgb):
        pts = " ".join(xy(mesh.nodes[k]) for k in tri)
        fill = f"#{r:02x}{g:02x}{b:02x}"
        out.append(f'<polygon points="{pts}" fill="{fill}" stroke="{fill}" stroke-width="0.3"/>')
    out.append("</g>")
    out.append('<g stroke="#000000" stroke-width="4" stroke-linecap="butt">')
    for edges in mesh.electrode_edges:
        for a, b in edges:
            pa, pb = mesh.nodes[a], mesh.nodes[b]
            out.append(f'<line x1="{half + s * pa[0]:.2f}" y1="{half - s * pa[1]:.2f}" '
                       f'x2="{half + s * pb[0]:.2f}" y2="{half - s * pb[1]:.2f}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
