"""Independent reference computations used only by the test-suite."""
from __future__ import annotations

import numpy as np


def _arc_trig_integrals(k, a, b):
    """Integrals of cos(k t) and sin(k t) over [a, b] for integer arrays k."""
    k = np.asarray(k, dtype=float)
    safe = np.where(k == 0, 1.0, k)
    ic = np.where(k == 0, b - a, (np.sin(k * b) - np.sin(k * a)) / safe)
    is_ = np.where(k == 0, 0.0, (np.cos(k * a) - np.cos(k * b)) / safe)
    return ic, is_


def concentric_cem_frame(tank_radius, inner_radius, sigma_in, sigma_out, contact_impedance,
                         amplitude, coverage=0.5, n_electrodes=16, n_modes=400):
    """Spectral (Fourier-Galerkin) CEM solution for a centred two-layer disc.

    The trace of the potential on the tank wall is expanded in n_modes
    harmonics; the layered disc enters through its exact Dirichlet-to-Neumann
    multiplier sigma_out * n/R * (1 - q_n) / (1 + q_n), with
    q_n = (sigma_out - sigma_in)/(sigma_out + sigma_in) * (a/R)**(2n).
    Returns the 16 x 13 adjacent/adjacent frame (rows = drive patterns,
    measurement pairs starting just past the sink electrode).
    """
    R = tank_radius
    n = np.arange(1, n_modes + 1)
    rho = (sigma_out - sigma_in) / (sigma_out + sigma_in)
    q = rho * (inner_radius / R) ** (2 * n)
    lam = sigma_out * n / R * (1 - q) / (1 + q)

    # basis: [1, cos 1..N, sin 1..N]
    nb = 1 + 2 * n_modes
    modes = np.concatenate([[0], n, n])
    is_sin = np.concatenate([[False], np.zeros(n_modes, bool), np.ones(n_modes, bool)])
    size = nb + n_electrodes + 1
    A = np.zeros((size, size))
    A[1:1 + n_modes, 1:1 + n_modes] += np.diag(np.pi * R * lam)
    A[1 + n_modes:nb, 1 + n_modes:nb] += np.diag(np.pi * R * lam)

    pitch = 2 * np.pi / n_electrodes
    half = 0.5 * coverage * pitch
    w = R / contact_impedance
    centres = pitch * np.arange(n_electrodes)
    kmax = 2 * n_modes
    k = np.arange(kmax + 1)
    # summed over all electrode arcs: int cos(k t), int sin(k t)
    csum = np.zeros(kmax + 1)
    ssum = np.zeros(kmax + 1)
    for c in centres:
        ic, isn = _arc_trig_integrals(k, c - half, c + half)
        csum += ic
        ssum += isn
    mi = modes[:, None]
    mj = modes[None, :]
    d = np.abs(mi - mj)
    sgn = np.sign(mi - mj)
    cm, sm = csum[d], sgn * ssum[d]
    cp, spl = csum[mi + mj], ssum[mi + mj]
    si = is_sin[:, None]
    sj = is_sin[None, :]
    M = np.where(~si & ~sj, 0.5 * (cm + cp),
                 np.where(si & sj, 0.5 * (cm - cp),
                          np.where(si & ~sj, 0.5 * (spl + sm), 0.5 * (spl - sm))))
    A[:nb, :nb] += w * M
    del M, cm, sm, cp, spl
    for l, c in enumerate(centres):
        ic, isn = _arc_trig_integrals(modes, c - half, c + half)
        col = -w * np.where(is_sin, isn, ic)
        A[:nb, nb + l] += col
        A[nb + l, :nb] += col
        A[nb + l, nb + l] += w * 2 * half
    A[nb:nb + n_electrodes, -1] = 1.0
    A[-1, nb:nb + n_electrodes] = 1.0

    rhs = np.zeros((size, n_electrodes))
    for p in range(n_electrodes):
        rhs[nb + p, p] += amplitude
        rhs[nb + (p + 1) % n_electrodes, p] -= amplitude
    x = np.linalg.solve(A, rhs)
    U = x[nb:nb + n_electrodes]
    frame = np.empty((n_electrodes, n_electrodes - 3))
    for p in range(n_electrodes):
        snk = (p + 1) % n_electrodes
        pairs = [((snk + k) % n_electrodes, (snk + k + 1) % n_electrodes)
                 for k in range(1, n_electrodes)]
        pairs = [pq for pq in pairs if p not in pq and snk not in pq]
        frame[p] = [U[a, p] - U[b, p] for a, b in pairs]
    return frame
