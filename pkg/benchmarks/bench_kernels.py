"""Time the numba kernels against their numpy fallbacks on the default mesh.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each path, the
speed-up and the largest absolute difference between the two results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pbceit import _accel
from pbceit.forward import _solve_protocol, CemModel, adjacent_protocol
from pbceit.mesh import build_mesh, disc, slit


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile on the numba path)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    mesh = build_mesh()
    g = mesh.geometry
    tri = mesh.nodes[mesh.elements]
    rng = np.random.default_rng(0)
    sigma = rng.uniform(1e-4, 1e-3, mesh.n_elements)
    protocol = adjacent_protocol()
    model = CemModel(mesh)
    fields, index = _solve_protocol(model, sigma, protocol)
    nodal = np.ascontiguousarray(fields[:, :mesh.n_nodes])
    ch = protocol.channels
    drive = np.array([index[(int(a), int(b))] for a, b in ch[:, :2]])
    meas = np.array([index.get((int(a), int(b)), index.get((int(b), int(a))))
                     for a, b in ch[:, 2:]])
    pts = rng.normal(size=(240, 4))
    d = disc((0.01, 0.0), 0.02)
    s = slit((0.0, 0.0), 37.0, 0.02, 0.001)

    cases = {
        "stiffness": lambda nb: _accel.stiffness_values(g.gradients, g.area, sigma, use_numba=nb),
        "sensitivity": lambda nb: _accel.sensitivity(g.gradients, g.area, mesh.elements, nodal,
                                                     drive, meas, use_numba=nb),
        "coverage_disc": lambda nb: _accel.coverage(tri, d.kind, d.params, 8, use_numba=nb),
        "coverage_slit": lambda nb: _accel.coverage(tri, s.kind, s.params, 8, use_numba=nb),
        "sq_distances": lambda nb: _accel.sq_distances(pts, pts, use_numba=nb),
    }
    print(f"mesh: {mesh.n_elements} elements; best of {args.repeat}")
    print(f"{'kernel':<15}{'numpy ms':>11}{'numba ms':>11}{'speed-up':>10}{'max |diff|':>13}")
    for name, fn in cases.items():
        t_np, r_np = best_of(lambda: fn(False), args.repeat)
        t_nb, r_nb = best_of(lambda: fn(True), args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_np) - np.asarray(r_nb))))
        print(f"{name:<15}{t_np * 1e3:>11.3f}{t_nb * 1e3:>11.3f}{t_np / t_nb:>10.1f}{diff:>13.2e}")


if __name__ == "__main__":
    main()
