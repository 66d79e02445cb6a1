"""Concentric-ring triangulation of a circular tank with 16 boundary electrodes.

Every ring carries nodes on the 16 sector boundaries, so the whole mesh is
invariant under rotation by one electrode pitch (2*pi/16). Electrode patches
are centred on angle ``2*pi*e/16`` and their end points are mesh nodes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _accel
from .errors import ValidationError

N_ELECTRODES = 16
DEFAULT_RADIUS = 0.075
DEFAULT_REFINEMENT = 3
DEFAULT_COVERAGE = 0.5
RINGS_PER_LEVEL = 4
DEFAULT_GRADING = 0.7


class MeshError(ValidationError):
    """Invalid mesh parameters or malformed mesh data."""


@dataclass(frozen=True)
class ElementGeometry:
    centroid: np.ndarray  # (n_el, 2)
    area: np.ndarray  # (n_el,)
    gradients: np.ndarray  # (n_el, 3, 2), constant P1 gradients


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    electrode_edges: tuple  # 16 arrays of shape (n_edges_e, 2)
    tank_radius: float
    refinement_level: int
    electrode_coverage: float = DEFAULT_COVERAGE
    boundary_nodes: np.ndarray = field(default=None, repr=False)  # CCW outer ring

    def __post_init__(self):
        for arr in (self.nodes, self.elements, self.boundary_nodes, *self.electrode_edges):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def geometry(self) -> ElementGeometry:
        grads, area = _accel.element_gradients_np(self.nodes, self.elements)
        centroid = self.nodes[self.elements].mean(axis=1)
        for arr in (grads, area, centroid):
            arr.setflags(write=False)
        return ElementGeometry(centroid=centroid, area=area, gradients=grads)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        b = self.boundary_nodes
        return np.column_stack([b, np.roll(b, -1)])

    def to_json(self) -> str:
        doc = {
            "tank_radius": self.tank_radius,
            "refinement_level": self.refinement_level,
            "electrode_coverage": self.electrode_coverage,
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "boundary_nodes": self.boundary_nodes.tolist(),
            "electrode_edges": [e.tolist() for e in self.electrode_edges],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        try:
            doc = json.loads(text)
            mesh = cls(
                nodes=np.asarray(doc["nodes"], dtype=float).reshape(-1, 2),
                elements=np.asarray(doc["elements"], dtype=np.int64).reshape(-1, 3),
                electrode_edges=tuple(np.asarray(e, dtype=np.int64).reshape(-1, 2)
                                      for e in doc["electrode_edges"]),
                tank_radius=float(doc["tank_radius"]),
                refinement_level=int(doc["refinement_level"]),
                electrode_coverage=float(doc.get("electrode_coverage", DEFAULT_COVERAGE)),
                boundary_nodes=np.asarray(doc["boundary_nodes"], dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"malformed mesh JSON: {exc}") from exc
        if len(mesh.electrode_edges) != N_ELECTRODES:
            raise MeshError("mesh JSON must list 16 electrodes")
        return mesh

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Mesh":
        return cls.from_json(Path(path).read_text())


def _ring_fractions(n_edges: int) -> np.ndarray:
    return np.arange(n_edges) / n_edges


def _outer_fractions(n_rings: int, coverage: float) -> tuple[np.ndarray, int, int]:
    """Node positions (as sector fractions) on the outer ring plus edge counts."""
    n_el = max(2, int(round(coverage * n_rings)))
    n_gap = max(1, int(round((1.0 - coverage) * n_rings / 2.0)))
    lo = 0.5 - coverage / 2.0
    hi = 0.5 + coverage / 2.0
    gap1 = np.linspace(0.0, lo, n_gap, endpoint=False)
    elec = np.linspace(lo, hi, n_el, endpoint=False)
    gap2 = np.linspace(hi, 1.0, n_gap, endpoint=False)
    return np.concatenate([gap1, elec, gap2]), n_el, n_gap


def _ring_layout(n_rings, coverage, grading):
    """Ring radii (fractions of R) and per-sector node fractions for every ring.

    Ring i carries i edges per sector, except the outer rings, which are
    denser. The last third of the radial intervals shrinks geometrically by
    ``grading`` toward the wall so the electrode edge singularities are
    resolved without refining the interior.
    """
    counts = list(range(n_rings + 1))
    counts[-1] = n_rings + n_rings // 3
    if n_rings >= 2:
        counts[-2] = max(counts[-2], n_rings - 1 + n_rings // 6)
    fractions = [np.zeros(1)] + [_ring_fractions(c) for c in counts[1:-1]]
    outer, n_el_edges, n_gap_edges = _outer_fractions(counts[-1], coverage)
    fractions.append(outer)
    n_tail = n_rings // 3
    weights = np.ones(n_rings)
    if n_tail:
        weights[n_rings - n_tail:] = grading ** np.arange(1, n_tail + 1)
    radii = np.concatenate([[0.0], np.cumsum(weights)]) / weights.sum()
    radii[-1] = 1.0
    return radii, fractions, n_el_edges, n_gap_edges


def build_mesh(tank_radius: float = DEFAULT_RADIUS,
               refinement_level: int = DEFAULT_REFINEMENT,
               electrode_coverage: float = DEFAULT_COVERAGE,
               grading: float = DEFAULT_GRADING) -> Mesh:
    """Build the symmetric ring mesh.

    ``electrode_coverage`` is the fraction of each electrode's 1/16 arc
    sector that the electrode occupies. ``refinement_level`` k gives 4k rings;
    the default (k=3) has 2464 elements.
    """
    if not (isinstance(tank_radius, (int, float)) and math.isfinite(tank_radius)
            and tank_radius > 0):
        raise MeshError(f"tank_radius must be a positive length, got {tank_radius!r}")
    if int(refinement_level) != refinement_level or refinement_level < 1:
        raise MeshError(f"refinement_level must be an integer >= 1, got {refinement_level!r}")
    if not (0.0 < electrode_coverage < 1.0):
        raise MeshError(f"electrode_coverage must lie in (0, 1), got {electrode_coverage!r}")
    if not (0.0 < grading <= 1.0):
        raise MeshError(f"grading must lie in (0, 1], got {grading!r}")

    n_rings = RINGS_PER_LEVEL * int(refinement_level)
    pitch = 2.0 * np.pi / N_ELECTRODES

    radii, fractions, n_el_edges, n_gap_edges = _ring_layout(
        n_rings, electrode_coverage, grading)

    nodes = [np.zeros((1, 2))]
    offsets = [0]
    count = 1
    for i in range(1, n_rings + 1):
        f = fractions[i]
        s = np.repeat(np.arange(N_ELECTRODES), f.size)
        ang = pitch * (s + np.tile(f, N_ELECTRODES) - 0.5)
        rad = tank_radius * radii[i]
        nodes.append(np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))
        offsets.append(count)
        count += f.size * N_ELECTRODES
    nodes = np.vstack(nodes)

    def ring_node(i, sector, j):
        m = fractions[i].size
        if i == 0:
            return 0
        return offsets[i] + (sector * m + j) % (m * N_ELECTRODES)

    elements = []
    for i in range(1, n_rings + 1):
        fin = np.append(fractions[i - 1], 1.0) if i > 1 else np.array([0.0])
        fout = np.append(fractions[i], 1.0)
        for sector in range(N_ELECTRODES):
            a, b = 0, 0
            na, nb = fin.size - 1, fout.size - 1
            while a < na or b < nb:
                if b < nb and (a >= na or fout[b + 1] <= fin[a + 1]):
                    tri = (ring_node(i - 1, sector, a), ring_node(i, sector, b),
                           ring_node(i, sector, b + 1))
                    b += 1
                else:
                    tri = (ring_node(i - 1, sector, a), ring_node(i, sector, b),
                           ring_node(i - 1, sector, a + 1))
                    a += 1
                elements.append(tri)
    elements = np.asarray(elements, dtype=np.int64)

    _, area = _accel.element_gradients_np(nodes, elements)
    if np.any(area <= 0.0):
        raise MeshError("mesh generator produced a non-positive element")  # pragma: no cover

    m_out = fractions[n_rings].size
    boundary = offsets[n_rings] + np.arange(m_out * N_ELECTRODES, dtype=np.int64)
    edges = []
    for e in range(N_ELECTRODES):
        start = e * m_out + n_gap_edges
        local = np.arange(start, start + n_el_edges + 1) % (m_out * N_ELECTRODES)
        ids = boundary[local]
        edges.append(np.column_stack([ids[:-1], ids[1:]]))

    return Mesh(nodes=nodes, elements=elements, electrode_edges=tuple(edges),
                tank_radius=float(tank_radius), refinement_level=int(refinement_level),
                electrode_coverage=float(electrode_coverage), boundary_nodes=boundary)


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Geometric predicate over points; see ``disc``, ``annulus``, ``slit``."""

    kind: int  # 0 disc, 1 annulus, 2 slit
    params: tuple  # (cx, cy, a, b, c)

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return _accel._inside_np(pts[:, 0], pts[:, 1], self.kind, self.params)


def disc(center, radius: float) -> Region:
    return Region(0, (float(center[0]), float(center[1]), float(radius), 0.0, 0.0))


def annulus(center, r_in: float, r_out: float) -> Region:
    return Region(1, (float(center[0]), float(center[1]), float(r_in), float(r_out), 0.0))


def slit(center, angle_deg: float, length: float, width: float) -> Region:
    """Rectangle starting at ``center`` and extending ``length`` along ``angle_deg``."""
    return Region(2, (float(center[0]), float(center[1]), math.radians(angle_deg),
                      float(length), float(width)))


def elements_in_region(mesh: Mesh, region: Region) -> np.ndarray:
    """Indices of elements whose centroid satisfies ``region``."""
    return np.flatnonzero(region.contains(mesh.geometry.centroid))


def region_coverage(mesh: Mesh, region: Region, order: int = 8) -> np.ndarray:
    """Per-element area fraction inside ``region`` (order**2 samples per element)."""
    tri = mesh.nodes[mesh.elements]
    return _accel.coverage(tri, region.kind, region.params, order)


# ---------------------------------------------------------------------------
# symmetry helpers
# ---------------------------------------------------------------------------

def rotate_points(points, steps: int) -> np.ndarray:
    ang = 2.0 * np.pi * steps / N_ELECTRODES
    c, s = np.cos(ang), np.sin(ang)
    pts = np.asarray(points, dtype=float)
    return pts @ np.array([[c, s], [-s, c]])


def rotation_permutations(mesh: Mesh, steps: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Node and element permutations induced by rotating ``steps`` electrode pitches.

    ``node_perm[i]`` is the node that node ``i`` lands on; likewise for elements.
    """
    rotated = rotate_points(mesh.nodes, steps)
    scale = mesh.tank_radius * 1e-9
    key = {tuple(np.round(p / scale).astype(np.int64)): i for i, p in enumerate(mesh.nodes)}
    node_perm = np.empty(mesh.n_nodes, dtype=np.int64)
    for i, p in enumerate(rotated):
        k = tuple(np.round(p / scale).astype(np.int64))
        if k not in key:
            raise MeshError("mesh is not symmetric under the requested rotation")
        node_perm[i] = key[k]
    el_key = {tuple(sorted(t)): k for k, t in enumerate(mesh.elements.tolist())}
    el_perm = np.array([el_key[tuple(sorted(node_perm[t]))] for t in mesh.elements],
                       dtype=np.int64)
    return node_perm, el_perm
