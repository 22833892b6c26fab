"""Time the numba and numpy paths of the hot kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 200]

Each kernel is called once per backend before timing so numba compilation
is excluded. Results agree to within float rounding; the script checks that too.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from irs_ofdm import kernels
from irs_ofdm._jit import NUMBA_AVAILABLE
from irs_ofdm.channel import FadingSpec, PathLossModel, Topology, generate_channels


def _time(fn, repeat):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def cases(rng):
    for M, N, K, C in ((6, 16, 3, 4), (6, 64, 3, 4), (8, 64, 4, 8)):
        topo = Topology.random_users(K, rng)
        ch = generate_channels(topo, PathLossModel(), FadingSpec(), rng, M, N, C)
        theta = rng.uniform(0, 2 * np.pi, N)
        beams = rng.standard_normal((M, C)) + 1j * rng.standard_normal((M, C))
        sigma2 = np.full(K, 1e-19)
        yield f"rate_matrix M={M} N={N} K={K} C={C}", lambda b, ch=ch, theta=theta, beams=beams, sigma2=sigma2: kernels.rate_matrix(
            ch.h_bu, ch.H_br, ch.h_ru, theta, beams, sigma2, 2.5e6, True, b)
    for K, C in ((3, 4), (4, 8), (6, 8)):
        rates = rng.uniform(0, 1e8, (C, K))
        yield f"best_assignment K={K} C={C} ({K ** C} candidates)", lambda b, rates=rates: kernels.best_assignment(rates, 1e7, 1e7, 1.0, 1.0, b)
    for n in (65_536, 484_000):
        p = rng.standard_normal(n).astype(np.float32)
        g = (rng.standard_normal(n) * 1e-3).astype(np.float32)
        state = {}

        def adam(b, p=p, g=g, state=state):
            q, m, v = state.setdefault(b, (p.copy(), np.zeros_like(p), np.zeros_like(p)))
            kernels.adam_update(q, g, m, v, 1e-3, 0.9, 0.999, 10, backend=b)
            return q

        yield f"adam_update n={n}", adam


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args(argv)
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<48} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, fn in cases(rng):
        a, b = fn("numpy"), fn("numba")
        out_a = a[0] if isinstance(a, tuple) else a
        out_b = b[0] if isinstance(b, tuple) else b
        if not np.allclose(out_a, out_b, rtol=1e-5):
            raise SystemExit(f"{name}: backends disagree")
        t_np = _time(lambda: fn("numpy"), args.repeat)
        t_nb = _time(lambda: fn("numba"), args.repeat)
        print(f"{name:<48} {t_np * 1e3:>10.4f} {t_nb * 1e3:>10.4f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
