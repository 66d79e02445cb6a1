"""Complete electrode model (CEM) forward solver on P1 triangles.

Unknowns are the nodal potentials followed by the 16 electrode potentials and
one Lagrange multiplier enforcing ``sum(U) = 0``. The augmented system is
symmetric and factored once per conductivity; every current pattern needed
for a frame or a Jacobian is a column of one multi-RHS solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _accel
from .errors import NumericalError, ValidationError
from .mesh import N_ELECTRODES, Mesh

DEFAULT_AMPLITUDE = 1e-3  # A
DEFAULT_CONTACT_IMPEDANCE = 1e-3  # Ohm m^2
RESIDUAL_TOL = 1e-10
REFINE_STEPS = 2


class FieldMismatchError(ValidationError):
    pass


class SingularSystemError(NumericalError):
    pass


@dataclass(frozen=True)
class DriveProtocol:
    patterns: np.ndarray  # (n_patterns, 2) source, sink
    measurement_pairs: tuple  # per pattern, (n_meas, 2) array of (+, -) electrodes
    current_amplitude: float = DEFAULT_AMPLITUDE

    @cached_property
    def channels(self) -> np.ndarray:
        """(n_channels, 4) rows of (source, sink, plus, minus), pattern-major."""
        rows = [(s, t, a, b) for (s, t), pairs in zip(self.patterns, self.measurement_pairs)
                for a, b in pairs]
        return np.asarray(rows, dtype=np.int64).reshape(-1, 4)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


def adjacent_protocol(amplitude: float = DEFAULT_AMPLITUDE,
                      n_electrodes: int = N_ELECTRODES) -> DriveProtocol:
    """Adjacent drive, adjacent measure, skipping pairs that touch a driven electrode."""
    if not amplitude > 0:
        raise ValidationError(f"current amplitude must be positive, got {amplitude!r}")
    patterns = np.array([(p, (p + 1) % n_electrodes) for p in range(n_electrodes)])
    meas = []
    for src, snk in patterns:
        # start just past the sink so pattern p is pattern 0 rotated by p
        pairs = [((snk + k) % n_electrodes, (snk + k + 1) % n_electrodes)
                 for k in range(1, n_electrodes)]
        pairs = [pq for pq in pairs if src not in pq and snk not in pq]
        meas.append(np.asarray(pairs, dtype=np.int64))
    return DriveProtocol(patterns=patterns, measurement_pairs=tuple(meas),
                         current_amplitude=float(amplitude))


@dataclass(frozen=True)
class CemSolution:
    nodal_potentials: np.ndarray
    electrode_potentials: np.ndarray
    contact_impedance: float
    electrode_currents: np.ndarray = field(default=None)


@dataclass
class MeasurementFrame:
    v: np.ndarray
    meta: dict = field(default_factory=dict)


def _check_field(mesh: Mesh, sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.shape[0] != mesh.n_elements:
        raise FieldMismatchError(
            f"conductivity has shape {sigma.shape}, mesh has {mesh.n_elements} elements")
    if not np.all(np.isfinite(sigma)):
        raise SingularSystemError("conductivity contains non-finite entries")
    if np.any(sigma <= 0.0):
        raise SingularSystemError(
            f"conductivity must be positive; min is {sigma.min():.3e} S/m")
    return sigma


class CemModel:
    """Conductivity-independent parts of the CEM system for one mesh and impedance."""

    def __init__(self, mesh: Mesh, contact_impedance=DEFAULT_CONTACT_IMPEDANCE):
        z = np.broadcast_to(np.asarray(contact_impedance, dtype=float), (N_ELECTRODES,))
        if not np.all(np.isfinite(z)) or np.any(z <= 0):
            raise ValidationError(f"contact impedance must be positive, got {contact_impedance!r}")
        self.mesh = mesh
        self.z = z.copy()
        n = mesh.n_nodes
        self.n = n
        self.size = n + N_ELECTRODES + 1
        el = mesh.elements
        self._rows = np.repeat(el, 3, axis=1).ravel()
        self._cols = np.tile(el, (1, 3)).ravel()

        r, c, v = [], [], []
        for l, edges in enumerate(mesh.electrode_edges):
            p = mesh.nodes[edges[:, 0]]
            q = mesh.nodes[edges[:, 1]]
            length = np.hypot(*(q - p).T)
            w = 1.0 / z[l]
            i, j = edges[:, 0], edges[:, 1]
            # boundary mass block
            r += [i, j, i, j]
            c += [i, j, j, i]
            v += [w * length / 3, w * length / 3, w * length / 6, w * length / 6]
            # node/electrode coupling
            ul = np.full(i.shape, n + l)
            r += [i, j, ul, ul]
            c += [ul, ul, i, j]
            v += [-w * length / 2] * 4
            r.append(np.array([n + l]))
            c.append(np.array([n + l]))
            v.append(np.array([w * length.sum()]))
        lam = n + N_ELECTRODES
        ue = n + np.arange(N_ELECTRODES)
        r += [ue, np.full(N_ELECTRODES, lam)]
        c += [np.full(N_ELECTRODES, lam), ue]
        v += [np.ones(N_ELECTRODES), np.ones(N_ELECTRODES)]
        self._const = sp.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(self.size, self.size)).tocsc()

    def system_matrix(self, sigma) -> sp.csc_matrix:
        sigma = _check_field(self.mesh, sigma)
        g = self.mesh.geometry
        vals = _accel.stiffness_values(g.gradients, g.area, sigma).ravel()
        k = sp.coo_matrix((vals, (self._rows, self._cols)), shape=(self.size, self.size))
        return (k.tocsc() + self._const).tocsc()

    def solve(self, sigma, currents: np.ndarray) -> np.ndarray:
        """Solve for electrode current columns ``currents`` (16, n_rhs).

        Returns the solution block (size, n_rhs): nodal potentials, then
        electrode potentials, then the multiplier.
        """
        a = self.system_matrix(sigma)
        currents = np.atleast_2d(np.asarray(currents, dtype=float).T).T
        rhs = np.zeros((self.size, currents.shape[1]))
        rhs[self.n:self.n + N_ELECTRODES] = currents
        try:
            lu = spla.splu(a)
        except RuntimeError as exc:  # exactly singular
            raise SingularSystemError(f"CEM system is singular: {exc}") from exc
        x = lu.solve(rhs)
        # refinement with extended-precision residuals: forward error near
        # double round-off despite the poorly scaled electrode blocks
        a_ext = a.astype(np.longdouble)
        for _ in range(REFINE_STEPS):
            res = rhs - a_ext @ x.astype(np.longdouble)
            x += lu.solve(np.asarray(res, dtype=float))
        res = rhs - a @ x
        scale = np.abs(a).max() * np.abs(x).max(axis=0) + np.abs(rhs).max(axis=0)
        rel = np.abs(res).max(axis=0) / np.where(scale > 0, scale, 1.0)
        if not np.all(np.isfinite(x)) or np.any(rel > RESIDUAL_TOL):
            raise SingularSystemError(
                f"CEM solve residual {rel.max():.2e} exceeds {RESIDUAL_TOL:.0e}")
        return x


def _pattern_currents(pairs, amplitude: float) -> np.ndarray:
    cur = np.zeros((N_ELECTRODES, len(pairs)))
    for col, (src, snk) in enumerate(pairs):
        cur[src, col] += amplitude
        cur[snk, col] -= amplitude
    return cur


def assemble_and_solve(mesh: Mesh, sigma, pattern, amplitude: float = DEFAULT_AMPLITUDE,
                       contact_impedance=DEFAULT_CONTACT_IMPEDANCE,
                       model: CemModel | None = None) -> CemSolution:
    """Solve one current pattern ``(source, sink)`` with ``amplitude`` amps."""
    if not amplitude > 0:
        raise ValidationError(f"amplitude must be positive, got {amplitude!r}")
    src, snk = (int(pattern[0]), int(pattern[1]))
    if src == snk or not (0 <= src < N_ELECTRODES and 0 <= snk < N_ELECTRODES):
        raise ValidationError(f"invalid drive pair {pattern!r}")
    model = model or CemModel(mesh, contact_impedance)
    cur = _pattern_currents([(src, snk)], amplitude)
    x = model.solve(sigma, cur)[:, 0]
    n = mesh.n_nodes
    return CemSolution(nodal_potentials=x[:n], electrode_potentials=x[n:n + N_ELECTRODES],
                       contact_impedance=float(np.mean(model.z)),
                       electrode_currents=cur[:, 0])


def _solve_protocol(model: CemModel, sigma, protocol: DriveProtocol):
    """Solve every drive pattern plus any extra adjoint pairs with unit current.

    Returns (fields, index) where ``fields`` rows are full unit-current
    solutions and ``index`` maps an ordered electrode pair to its row.
    """
    pairs = [tuple(map(int, p)) for p in protocol.patterns]
    index = {p: i for i, p in enumerate(pairs)}
    for src, snk, a, b in protocol.channels:
        key = (int(a), int(b))
        if key not in index and (key[1], key[0]) not in index:
            index[key] = len(pairs)
            pairs.append(key)
    x = model.solve(sigma, _pattern_currents(pairs, 1.0))
    return x.T, index


def _adjoint_row(index, a, b):
    """Row index and sign of the unit-current field driving ``a -> b``."""
    if (a, b) in index:
        return index[(a, b)], 1.0
    return index[(b, a)], -1.0


def measure(mesh: Mesh, sigma, protocol: DriveProtocol,
            contact_impedance=DEFAULT_CONTACT_IMPEDANCE,
            model: CemModel | None = None, meta: dict | None = None) -> MeasurementFrame:
    """Noiseless differential electrode voltages, pattern-major channel order."""
    model = model or CemModel(mesh, contact_impedance)
    cur = _pattern_currents(protocol.patterns, protocol.current_amplitude)
    x = model.solve(sigma, cur)
    u = x[model.n:model.n + N_ELECTRODES]  # (16, n_patterns)
    ch = protocol.channels
    pat = np.repeat(np.arange(len(protocol.patterns)),
                    [len(p) for p in protocol.measurement_pairs])
    v = u[ch[:, 2], pat] - u[ch[:, 3], pat]
    return MeasurementFrame(v=v, meta=dict(meta or {}))


def jacobian(mesh: Mesh, sigma, protocol: DriveProtocol,
             contact_impedance=DEFAULT_CONTACT_IMPEDANCE,
             model: CemModel | None = None) -> np.ndarray:
    """Sensitivity d v[channel] / d sigma[element], shape (n_channels, n_elements)."""
    model = model or CemModel(mesh, contact_impedance)
    fields, index = _solve_protocol(model, sigma, protocol)
    nodal = np.ascontiguousarray(fields[:, :model.n])
    drive_idx, meas_idx, sign = [], [], []
    for src, snk, a, b in protocol.channels:
        d, sd = _adjoint_row(index, int(src), int(snk))
        m, sm = _adjoint_row(index, int(a), int(b))
        drive_idx.append(d)
        meas_idx.append(m)
        sign.append(sd * sm)
    g = mesh.geometry
    jac = _accel.sensitivity(g.gradients, g.area, mesh.elements, nodal,
                             np.asarray(drive_idx), np.asarray(meas_idx))
    return jac * (np.asarray(sign) * protocol.current_amplitude)[:, None]
