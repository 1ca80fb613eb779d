"""Compare the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Sizes follow the 4x4 / K=16 / P=8 / J=2 sweep setting. The last section times
a whole blind-pilot trial under each backend in a fresh interpreter, since
the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
from timeit import repeat

import numpy as np

from blindofdm import _accel
from blindofdm.sysmodel import constellation, precoder_matrix


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def cases(rng):
    Mt = Mr = 4
    K, P, J, L = 16, 8, 2, 8
    N = J * (K + P)
    s = _crandn(rng, Mt, 100 * (K + P))
    h = _crandn(rng, Mt, Mr, L)
    pts = constellation("QAM16").points
    y = _crandn(rng, 100 * K * Mt)
    X = _crandn(rng, 200, Mr * (N - L))
    C = np.ascontiguousarray(precoder_matrix(K, P, J).W_tilde)
    G = np.ascontiguousarray(np.linalg.qr(_crandn(rng, Mr * (N - L), Mr * (J * P - L)))[0])
    g = np.ascontiguousarray(G[:, 0])
    return [
        ("fir_mimo (4x4, L=8, 2400 samples)", "fir_mimo", (s, h)),
        ("demap_nearest (6400 symbols, 16-QAM)", "demap_nearest", (y, pts)),
        ("covariance (200 windows x 160)", "covariance", (X,)),
        ("phi (one noise vector)", "phi", (g, Mt, Mr, L, N)),
        ("quad_form (32 noise vectors)", "quad_form", (G, C, Mr, L)),
    ]


def bench(repeat_n):
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for label, name, args in cases(rng):
        f_np = getattr(_accel, f"{name}_numpy")
        f_nb = getattr(_accel, f"{name}_numba")
        f_nb(*args)  # compile
        t_np = min(repeat(lambda: f_np(*args), number=1, repeat=repeat_n)) * 1e3
        t_nb = min(repeat(lambda: f_nb(*args), number=1, repeat=repeat_n)) * 1e3
        print(f"{label:40s} {t_np:12.3f} {t_nb:12.3f} {t_np / t_nb:8.2f}")


TRIAL = """
import time, warnings
warnings.simplefilter('ignore')
from blindofdm import SystemConfig, run_trial
cfg = SystemConfig(4, 4, 16, 8, 8, smoothing=2, blocks_per_packet=100, packets=4).with_snr(20)
run_trial(cfg, 'blind_pilot', 0)
t = time.perf_counter()
for s in range(5):
    run_trial(cfg, 'blind_pilot', s)
print((time.perf_counter() - t) / 5 * 1e3)
"""


def bench_trial():
    print()
    print("blind-pilot trial, 4x4, 200 windows (mean of 5, after warm-up)")
    for flag, label in (("1", "numpy"), ("0", "numba")):
        env = dict(os.environ, BLINDOFDM_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", TRIAL], env=env, capture_output=True, text=True, check=True)
        print(f"  {label:6s} {float(out.stdout):9.1f} ms")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed")
    bench(args.repeat)
    bench_trial()
