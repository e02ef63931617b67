"""Timing comparison of the compiled and pure-python compositing kernels.

Backend choice is frozen at import, so the script re-runs itself in a
subprocess per backend and prints a combined table:

    python3 benchmarks/bench_compositing.py
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _scene(rng, n):
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
    from splatfuse.render import Camera, Scene

    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scene = Scene(
        centers=rng.uniform(-0.8, 0.8, size=(n, 3)),
        scales=rng.uniform(0.03, 0.15, size=(n, 3)),
        quats=quats,
        opacities=rng.uniform(0.3, 0.9, size=n),
        colors=rng.uniform(0.0, 1.0, size=(n, 3)),
    )
    return scene


def run_backend(cases, reps):
    from splatfuse.kernels import BACKEND
    from splatfuse.render import Camera, rasterize, rasterize_grad

    rng = np.random.default_rng(7)
    rows = []
    for n, side in cases:
        scene = _scene(rng, n)
        cam = Camera.front_at(3.0, side, side, 1.3 * side)
        bg = np.full(3, 0.05)
        grad_out = rng.normal(size=(side, side, 3))

        rasterize(scene, cam, bg)  # warm up
        t0 = time.perf_counter()
        for _ in range(reps):
            rasterize(scene, cam, bg)
        fwd = (time.perf_counter() - t0) / reps

        rasterize_grad(scene, cam, bg, grad_out)
        t0 = time.perf_counter()
        for _ in range(reps):
            rasterize_grad(scene, cam, bg, grad_out)
        bwd = (time.perf_counter() - t0) / reps
        rows.append({"n": n, "side": side, "fwd_ms": fwd * 1e3,
                     "bwd_ms": bwd * 1e3})
    return {"backend": BACKEND, "rows": rows}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--backend", choices=("compiled", "python"),
                        help="run a single backend and emit JSON (internal)")
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()

    cases = [(50, 64), (200, 64), (200, 128)]
    if args.backend:
        result = run_backend(cases, args.reps)
        if result["backend"] != args.backend:
            print(f"error: requested {args.backend} backend, "
                  f"got {result['backend']}", file=sys.stderr)
            return 1
        print(json.dumps(result))
        return 0

    results = {}
    for backend in ("compiled", "python"):
        env = dict(os.environ, SPLATFUSE_KERNEL=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--backend", backend, "--reps", str(args.reps)],
            capture_output=True, text=True, env=env,
            cwd=os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))
        if proc.returncode != 0:
            print(f"{backend} backend unavailable: {proc.stderr.strip()}",
                  file=sys.stderr)
            continue
        results[backend] = json.loads(proc.stdout)["rows"]

    if not results:
        return 1
    print(f"{'scene':>14} {'pass':>8}", end="")
    for backend in results:
        print(f" {backend + ' ms':>12}", end="")
    if len(results) == 2:
        print(f" {'speedup':>8}", end="")
    print()
    n_cases = len(next(iter(results.values())))
    for i in range(n_cases):
        meta = next(iter(results.values()))[i]
        label = f"{meta['n']}p {meta['side']}x{meta['side']}"
        for key in ("fwd_ms", "bwd_ms"):
            print(f"{label:>14} {key[:3]:>8}", end="")
            for backend in results:
                print(f" {results[backend][i][key]:12.2f}", end="")
            if len(results) == 2:
                ratio = results["python"][i][key] / results["compiled"][i][key]
                print(f" {ratio:7.1f}x", end="")
            print()
            label = ""
    return 0


if __name__ == "__main__":
    sys.exit(main())
