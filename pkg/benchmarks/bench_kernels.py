"""Compare the compiled and NumPy kernel backends.

Usage: ``python3 benchmarks/bench_kernels.py [--T 20000] [--repeat 3]``
"""
import argparse
import timeit

import numpy as np

from rwmcv import _backend, targets


def cases():
    for d in (5, 50):
        tgt = targets.ProductTarget(targets.bimodal_mixture(), d)
        yield f"product_chain d={d}", "product_chain", tgt._params, d
    for d in (10,):
        tgt = targets.bimodal_gaussian_mixture(d, 4.0)
        yield f"mv_chain d={d}", "mv_chain", (tgt.means, tgt._logw, tgt.precision), d


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--T", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    names = _backend.available()
    print(f"{'kernel':<22}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for label, fn, params, d in cases():
        steps = rng.normal(0, 2.38 / np.sqrt(d), size=(args.T - 1, d))
        log_u = np.log(rng.uniform(size=args.T - 1))
        x0 = np.zeros(d)
        times = []
        for n in names:
            kern = getattr(_backend.get(n), fn)
            times.append(min(timeit.repeat(lambda: kern(x0, steps, log_u, *params),
                                           number=1, repeat=args.repeat)))
        speed = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else ""
        print(f"{label:<22}" + "".join(f"{t:>11.4f}s" for t in times) + speed)


if __name__ == "__main__":
    main()
