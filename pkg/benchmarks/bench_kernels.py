"""Compare the compiled and pure-Python backends.

Times the threshold scan kernel and a full training run on synthetic data,
checks that both backends return the same answer, and prints JSON.

Usage::

    python benchmarks/bench_kernels.py --n 2000 --repeats 5 --seed 0
"""

import argparse
import json

from optsurv import kernels
from optsurv.benchmark import run_benchmark


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[500, 2000])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-depth", type=int, default=4)
    args = parser.parse_args(argv)

    print(f"backends available: {', '.join(kernels.available_backends())}")
    for n in args.n:
        result = run_benchmark(n=n, repeats=args.repeats, seed=args.seed, max_depth=args.max_depth)
        print(json.dumps(result, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
