"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each case runs the same inputs through both backends and also checks that
the results agree bit for bit.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from ckyblowup import _backend, certify
from ckyblowup.simulate import init_particles


def _best(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, certify.IntervalState):
        return a == b
    if isinstance(a, list):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


def cases(scale: float):
    n_rk4 = int(200_000 * scale)
    n_val = int(20_000 * scale)
    st0 = certify.validated_initial(2, 3.0, 20, 0.1)
    sys = init_particles(2, "cos4pi", "desk")
    n_part = max(1, int(20 * scale))

    def rk4(k):
        return lambda: k.rk4_far(3.0, 1.0, 1.0 + 0.1 * n_rk4, n_rk4, -1.0, 0.1, 1.0)[:3]

    def validated(k):
        # first n_val nodes of the default certification grid
        eta1 = certify.node(0.1, 3.0, 1_000_000, n_val)

        def go():
            out = k.validated_run(3.0, 2, 0.1, eta1, n_val, st0, 1e-2, 0)
            return out[0], out[1]
        return go

    def particles(k):
        def go():
            q, w = sys.q, sys.w
            for _ in range(n_part):
                q, w = k.rk4_particles(q, w, sys.theta, 1e-4)
            return np.asarray(q), np.asarray(w)
        return go

    return [
        (f"rk4_far x{n_rk4}", rk4),
        (f"validated_run x{n_val}", validated),
        (f"rk4_particles N={sys.n} x{n_part}", particles),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply the problem sizes")
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)

    names = _backend.available()
    if "compiled" not in names:
        print("compiled core not built; timing the Python kernels only")
    rows = []
    for label, make in cases(args.scale):
        res = {"case": label}
        outs = {}
        for name in names:
            t, out = _best(make(_backend.kernels(name)), args.repeat)
            res[name] = t
            outs[name] = out
        if len(outs) == 2:
            res["speedup"] = res["python"] / res["compiled"]
            res["bitwise_equal"] = _same(outs["compiled"], outs["python"])
        rows.append(res)

    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'python s':>10}  {'compiled s':>10}  {'speedup':>8}  equal")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['python']:>10.4f}  {r.get('compiled', float('nan')):>10.4f}  "
              f"{r.get('speedup', float('nan')):>8.1f}  {r.get('bitwise_equal', '-')}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
