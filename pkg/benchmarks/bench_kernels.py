"""Compare the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``LEVY_EM_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--paths 256] [--n-ref 4096] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from levy_em import backend
from levy_em import kernels
from levy_em.analysis import holder_gaps
from levy_em.sde import DriftSpec

paths, n_ref, repeat = map(int, sys.argv[1:4])
rng = np.random.default_rng(0)
noise = np.zeros((paths, n_ref + 1, 1))
noise[:, 1:] = np.cumsum(rng.standard_cauchy((paths, n_ref, 1)) * n_ref**-1.0, axis=1)
x0, shift = np.zeros(1), np.zeros(1)
out = {"backend": backend()}

def best(fn):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

for drift in (DriftSpec.holder_power(0.5), DriftSpec.weierstrass(0.5)):
    code, params, offset = drift.kernel_args(1)
    out[f"em/{drift.kind}"] = best(
        lambda: kernels.em_drift_part(code, params, offset, shift, noise, x0, 1, 1.0 / n_ref))

err = noise[0, ::8]
n = err.shape[0] - 1
for exact in (True, False):
    gaps = holder_gaps(n, exact)
    out[f"holder/{'exact' if exact else 'dyadic'}"] = best(lambda: kernels.holder_seminorm(err, 0.2, gaps))
print(json.dumps(out))
"""


def run(flag, args):
    env = dict(os.environ, LEVY_EM_DISABLE_NUMBA=flag)
    res = subprocess.run(
        [sys.executable, "-c", WORKER, str(args.paths), str(args.n_ref), str(args.repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(res.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=256)
    parser.add_argument("--n-ref", type=int, default=4096)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    fast, slow = run("0", args), run("1", args)
    if fast["backend"] != "numba":
        print("numba is unavailable; both runs used numpy")
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<24}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>10.1f}")


if __name__ == "__main__":
    main()
