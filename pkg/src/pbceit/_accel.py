"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``PBCEIT_NUMBA`` is not
set to ``0``/``false``/``off``. Both paths compute the same quantities; tests
compare them directly and ``benchmarks/bench_kernels.py`` times them.
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("PBCEIT_NUMBA", "1").strip().lower()

try:
    import numba as _nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def element_gradients_np(nodes, elements):
    """Constant P1 shape-function gradients and signed areas per triangle.

    Returns ``(grads, area)`` with ``grads`` shaped (n_el, 3, 2).
    """
    p = nodes[elements]  # (n_el, 3, 2)
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grads = np.stack([b, c], axis=2) / area2[:, None, None]
    return grads, 0.5 * area2


def stiffness_values_np(grads, area, sigma):
    """COO values of the conductivity-weighted P1 stiffness, (n_el, 3, 3)."""
    local = np.einsum("kid,kjd->kij", grads, grads)
    return local * (sigma * area)[:, None, None]


def sensitivity_np(grads, area, elements, fields, drive_idx, meas_idx):
    """Jacobian rows ``-area * grad(u_drive) . grad(u_meas)`` per element.

    ``fields`` holds nodal potentials, one row per unit-scaled solve.
    ``drive_idx``/``meas_idx`` list, for every output row, which field rows
    act as the drive and the adjoint (measurement) field.
    """
    # per-field, per-element gradient (n_fields, n_el, 2)
    g = np.einsum("kid,fki->fkd", grads, fields[:, elements])
    dots = np.einsum("mkd,mkd->mk", g[drive_idx], g[meas_idx])
    return -dots * area[None, :]


def coverage_np(tri_pts, kind, params, order):
    """Fraction of each triangle's area inside a region, by sub-triangle sampling.

    ``tri_pts`` is (n_el, 3, 2). ``kind`` 0=disc, 1=annulus, 2=slit; ``params``
    is a float array (cx, cy, a, b, c) whose meaning depends on ``kind``.
    ``order`` m gives m*m equal-area sample points per element.
    """
    bary = _sample_barycentric(order)
    pts = np.einsum("sj,kjd->ksd", bary, tri_pts)
    inside = _inside_np(pts[..., 0], pts[..., 1], kind, params)
    return inside.mean(axis=1)


def _inside_np(x, y, kind, params):
    cx, cy, a, b, c = params
    dx, dy = x - cx, y - cy
    if kind == 0:
        return dx * dx + dy * dy <= a * a
    if kind == 1:
        r2 = dx * dx + dy * dy
        return (r2 >= a * a) & (r2 <= b * b)
    ux, uy = np.cos(a), np.sin(a)
    along = dx * ux + dy * uy
    across = -dx * uy + dy * ux
    return (along >= 0.0) & (along <= b) & (np.abs(across) <= 0.5 * c)


def _sample_barycentric(order):
    """Centroids of the order**2 congruent sub-triangles of the reference triangle."""
    m = order
    pts = []
    for i in range(m):
        for j in range(m - i):
            # upward sub-triangle
            pts.append(((i + 1.0 / 3.0) / m, (j + 1.0 / 3.0) / m))
            if i + j < m - 1:
                pts.append(((i + 2.0 / 3.0) / m, (j + 2.0 / 3.0) / m))
    uv = np.array(pts)
    return np.column_stack([1.0 - uv.sum(axis=1), uv[:, 0], uv[:, 1]])


def sq_distances_np(a, b):
    """Squared Euclidean distances between rows of ``a`` and rows of ``b``."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijd,ijd->ij", diff, diff)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _njit = _nb.njit(cache=True, nogil=True)

    @_njit
    def _stiffness_values_nb(grads, area, sigma):
        n = grads.shape[0]
        out = np.empty((n, 3, 3))
        for k in range(n):
            w = sigma[k] * area[k]
            for i in range(3):
                for j in range(3):
                    out[k, i, j] = w * (grads[k, i, 0] * grads[k, j, 0]
                                        + grads[k, i, 1] * grads[k, j, 1])
        return out

    @_njit
    def _sensitivity_nb(grads, area, elements, fields, drive_idx, meas_idx):
        nf = fields.shape[0]
        n_el = elements.shape[0]
        g = np.zeros((nf, n_el, 2))
        for f in range(nf):
            for k in range(n_el):
                for i in range(3):
                    u = fields[f, elements[k, i]]
                    g[f, k, 0] += grads[k, i, 0] * u
                    g[f, k, 1] += grads[k, i, 1] * u
        n_rows = drive_idx.shape[0]
        out = np.empty((n_rows, n_el))
        for m in range(n_rows):
            d = drive_idx[m]
            s = meas_idx[m]
            for k in range(n_el):
                out[m, k] = -area[k] * (g[d, k, 0] * g[s, k, 0] + g[d, k, 1] * g[s, k, 1])
        return out

    @_njit
    def _coverage_nb(tri_pts, kind, params, bary):
        n_el = tri_pts.shape[0]
        ns = bary.shape[0]
        cx, cy, a, b, c = params[0], params[1], params[2], params[3], params[4]
        ux, uy = np.cos(a), np.sin(a)
        out = np.empty(n_el)
        for k in range(n_el):
            hits = 0
            for s in range(ns):
                x = (bary[s, 0] * tri_pts[k, 0, 0] + bary[s, 1] * tri_pts[k, 1, 0]
                     + bary[s, 2] * tri_pts[k, 2, 0])
                y = (bary[s, 0] * tri_pts[k, 0, 1] + bary[s, 1] * tri_pts[k, 1, 1]
                     + bary[s, 2] * tri_pts[k, 2, 1])
                dx = x - cx
                dy = y - cy
                if kind == 0:
                    ok = dx * dx + dy * dy <= a * a
                elif kind == 1:
                    r2 = dx * dx + dy * dy
                    ok = r2 >= a * a and r2 <= b * b
                else:
                    along = dx * ux + dy * uy
                    across = -dx * uy + dy * ux
                    ok = along >= 0.0 and along <= b and abs(across) <= 0.5 * c
                if ok:
                    hits += 1
            out[k] = hits / ns
        return out

    @_njit
    def _sq_distances_nb(a, b):
        na, nb_, d = a.shape[0], b.shape[0], a.shape[1]
        out = np.empty((na, nb_))
        for i in range(na):
            for j in range(nb_):
                acc = 0.0
                for t in range(d):
                    diff = a[i, t] - b[j, t]
                    acc += diff * diff
                out[i, j] = acc
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def stiffness_values(grads, area, sigma, use_numba=None):
    if _pick(use_numba):
        return _stiffness_values_nb(grads, area, np.ascontiguousarray(sigma, dtype=float))
    return stiffness_values_np(grads, area, sigma)


def sensitivity(grads, area, elements, fields, drive_idx, meas_idx, use_numba=None):
    if _pick(use_numba):
        return _sensitivity_nb(grads, area, elements, np.ascontiguousarray(fields),
                               np.asarray(drive_idx, dtype=np.int64),
                               np.asarray(meas_idx, dtype=np.int64))
    return sensitivity_np(grads, area, elements, fields, drive_idx, meas_idx)


def coverage(tri_pts, kind, params, order=8, use_numba=None):
    params = np.asarray(params, dtype=float)
    if _pick(use_numba):
        return _coverage_nb(np.ascontiguousarray(tri_pts), int(kind), params,
                            _sample_barycentric(order))
    return coverage_np(tri_pts, kind, params, order)


def sq_distances(a, b, use_numba=None):
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if _pick(use_numba):
        return _sq_distances_nb(a, b)
    return sq_distances_np(a, b)


def _pick(use_numba):
    if use_numba is None:
        return USE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba requested but not importable")
    return bool(use_numba)
