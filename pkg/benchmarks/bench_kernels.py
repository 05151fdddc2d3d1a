"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Sizes mirror the training
and graph-building workloads: attention softmax over 16 cells for a batch,
per-gate layer norm rows, and pairwise IoU plus clustering over the subject
and object traces of 500 samples.
"""
import argparse
import timeit

import numpy as np

from triplegraph.kernels import _pykernels, get_backend

CASES = {
    "softmax_rows (96x16)": lambda k, d: lambda: k.softmax_rows(d["scores"]),
    "softmax_rows (500x13)": lambda k, d: lambda: k.softmax_rows(d["logits"]),
    "layer_norm_rows (384x64)": lambda k, d: lambda: k.layer_norm_rows(d["gates"], d["gain"], d["bias"], 1e-5),
    "iou_matrix (1000x16)": lambda k, d: lambda: k.iou_matrix(d["traces"]),
    "threshold_components (1000x16)": lambda k, d: lambda: k.threshold_components(d["traces"], 0.8),
}


def make_data(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "scores": rng.normal(size=(96, 16)),
        "logits": rng.normal(size=(500, 13)),
        "gates": rng.normal(size=(384, 64)),
        "gain": rng.normal(size=64),
        "bias": rng.normal(size=64),
        "traces": rng.dirichlet(np.ones(16) * 0.1, size=1000),
    }


def best_time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    data = make_data()
    try:
        compiled = get_backend("compiled")
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':34s} {'python':>12s} {'compiled':>12s} {'speed-up':>9s}")
    for name, case in CASES.items():
        py = best_time(case(_pykernels, data), args.repeat)
        if compiled is None:
            print(f"{name:34s} {py * 1e6:10.1f}us")
            continue
        c = best_time(case(compiled, data), args.repeat)
        print(f"{name:34s} {py * 1e6:10.1f}us {c * 1e6:10.1f}us {py / c:8.1f}x")


if __name__ == "__main__":
    main()
