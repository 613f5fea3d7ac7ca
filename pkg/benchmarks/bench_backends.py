"""Benchmark: compiled dynamics kernel vs the pure-python fallback.

Run: python benchmarks/bench_backends.py [--substeps N]

Times the physics substep loop (the training hot path) for both backends and
both integrators on the default biped in ground contact, and reports the
implied wall time of one default training run's worth of physics.
"""

import argparse
import time

import numpy as np

from amble.model import build_default_model, nominal_root_height
from amble.sim import backend, backend_py
from amble.sim.modelpack import pack_model

try:
    from amble.sim import _kernel
except ImportError:
    _kernel = None


def time_backend(sim, n, dt, integrator, repeats=3):
    model = build_default_model()
    q0 = np.zeros(9)
    q0[1] = nominal_root_height(model)
    q0[3:] = model.default_pose
    target = np.asarray(model.default_pose)
    best = float("inf")
    for _ in range(repeats):
        q, qd = q0.copy(), np.zeros(9)
        t0 = time.perf_counter()
        sim.substeps(q, qd, target, n, dt, integrator, 2e4, 2e2, 0.8)
        best = min(best, time.perf_counter() - t0)
    return best / n


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--substeps", type=int, default=20_000)
    args = parser.parse_args()

    pack = pack_model(build_default_model())
    rows = []
    backends = [("python", backend_py.PlanarSim(pack))]
    if _kernel is not None:
        backends.append(("compiled", _kernel.PlanarSim(pack)))
    for name, sim in backends:
        n = args.substeps if name == "compiled" else max(args.substeps // 50, 200)
        for integ, code in (("euler", 0), ("rk4", 1)):
            per = time_backend(sim, n, 1e-3, code)
            rows.append((name, integ, per))
            print(f"{name:9s} {integ:6s} {per * 1e6:9.2f} us/substep")
    if len(backends) == 2:
        py = next(r[2] for r in rows if r[0] == "python" and r[1] == "euler")
        ck = next(r[2] for r in rows if r[0] == "compiled" and r[1] == "euler")
        print(f"\nspeedup (euler): {py / ck:.0f}x")
        # default run: 600 iterations x 64 envs x 24 control steps x 10 substeps
        total = 600 * 64 * 24 * 10
        print(f"default-run physics: compiled {ck * total / 60:.1f} min, "
              f"python {py * total / 60:.1f} min")
    print(f"\nselected backend at import: {backend.BACKEND_NAME}")


if __name__ == "__main__":
    main()
