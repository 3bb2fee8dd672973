"""Time state-space exploration with each available kernel.

    python3 benchmarks/bench_explore.py [--repeat N] [--clients 100 500 1000]
"""

import argparse
import statistics
import time

import numpy as np

from pepagg import kernels
from pepagg.experiment import bundled
from pepagg.statespace import generate_ctmc
from pepagg.syntax import load_model


def bench(model, backend, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        ctmc = generate_ctmc(model, backend=backend, state_cap=10**7)
        times.append(time.perf_counter() - t0)
    return ctmc, statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--clients", type=int, nargs="+", default=[100, 500, 1000])
    ap.add_argument("--servers", type=int, default=5)
    args = ap.parse_args()

    base = load_model(bundled("client_server.pepa"))
    backends = sorted(kernels.BACKENDS)
    print(f"{'clients':>8}{'states':>10}{'transitions':>13}" + "".join(f"{b + ' s':>12}" for b in backends)
          + ("    speedup" if len(backends) > 1 else ""))
    for n in args.clients:
        model = base.with_populations({"Clients": n, "Servers": args.servers})
        out, ref = {}, None
        for b in backends:
            ctmc, out[b] = bench(model, b, args.repeat)
            if ref is None:
                ref = ctmc
            elif not (np.array_equal(ref.states, ctmc.states) and np.array_equal(ref.rate, ctmc.rate)):
                raise SystemExit(f"kernels disagree at {n} clients")
        line = f"{n:>8}{ref.size:>10}{len(ref.src):>13}" + "".join(f"{out[b]:>12.4f}" for b in backends)
        if len(backends) > 1:
            line += f"{out['python'] / out['cython']:>10.1f}x"
        print(line)


if __name__ == "__main__":
    main()
