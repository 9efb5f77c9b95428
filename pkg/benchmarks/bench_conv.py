#!/usr/bin/env python3
"""Benchmark the compiled conv kernels against the pure-numpy fallback.

Shapes mirror the hot paths of the simulator: the client CNN at 16x16 and the
GAN generator/discriminator stacks. Run with `python3 benchmarks/bench_conv.py`.
"""

import argparse
import json
import time

import numpy as np

from fplab import kernels

SHAPES = [
    # (label, x shape, w shape, stride, pad)
    ("classifier conv 1->8 /2", (16, 1, 16, 16), (8, 1, 3, 3), 2, 1),
    ("classifier conv 8->16 /2", (16, 8, 8, 8), (16, 8, 3, 3), 2, 1),
    ("disc conv 5->32 /2", (32, 5, 16, 16), (32, 5, 4, 4), 2, 1),
    ("disc conv 32->64 /2", (32, 32, 8, 8), (64, 32, 4, 4), 2, 1),
    ("disc head 64->1", (32, 64, 4, 4), (1, 64, 4, 4), 1, 0),
    ("gen deconv core 36->64", (32, 36, 4, 4), (64, 36, 4, 4), 1, 0),
]


def time_call(fn, min_seconds=0.4):
    fn()  # warm up
    t0 = time.perf_counter()
    calls = 0
    while time.perf_counter() - t0 < min_seconds:
        fn()
        calls += 1
    return (time.perf_counter() - t0) / calls * 1e3


def bench_backend(name, rng):
    from fplab.kernels import _BACKENDS

    be = _BACKENDS[name]
    rows = []
    for label, xs, ws, stride, pad in SHAPES:
        x = rng.normal(size=xs)
        w = rng.normal(size=ws)
        y = be.conv2d_forward(x, w, stride, pad)
        g = rng.normal(size=y.shape)
        rows.append(
            {
                "shape": label,
                "backend": name,
                "forward_ms": time_call(lambda: be.conv2d_forward(x, w, stride, pad)),
                "backward_input_ms": time_call(
                    lambda: be.conv2d_backward_input(g, w, xs[2], xs[3], stride, pad)
                ),
                "backward_weight_ms": time_call(
                    lambda: be.conv2d_backward_weight(x, g, ws[2], ws[3], stride, pad)
                ),
            }
        )
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--json", help="also dump results to this path")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for name in kernels.available_backends():
        rows.extend(bench_backend(name, rng))

    by_shape = {}
    for row in rows:
        by_shape.setdefault(row["shape"], {})[row["backend"]] = row
    header = f"{'shape':28s} {'backend':7s} {'fwd ms':>8s} {'bwd_in ms':>10s} {'bwd_w ms':>9s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for shape, backends in by_shape.items():
        base = backends.get("numpy")
        for name, row in sorted(backends.items()):
            total = row["forward_ms"] + row["backward_input_ms"] + row["backward_weight_ms"]
            base_total = (
                base["forward_ms"] + base["backward_input_ms"] + base["backward_weight_ms"]
                if base
                else total
            )
            speed = f"{base_total / total:7.2f}x" if base else "    n/a"
            print(
                f"{shape:28s} {name:7s} {row['forward_ms']:8.3f} "
                f"{row['backward_input_ms']:10.3f} {row['backward_weight_ms']:9.3f} {speed}"
            )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
        print(f"\nwrote {args.json}")


if __name__ == "__main__":
    main()
