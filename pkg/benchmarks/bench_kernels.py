"""Time the compiled distillation kernel against its numpy twin.

Usage: python3 benchmarks/bench_kernels.py [--steps N] [--repeat R]

Both backends receive identical pre-drawn noise, so the script also reports
the largest parameter difference between them.
"""

import argparse
import time

import numpy as np

from esdlab import DiffusionSchedule, GaussianTarget, LinearGaussianGenerator, kernels
from esdlab.distill import _KERNEL_CODES, DistillConfig, Method, RandomStreams, draw_run_noise


def kernel_args(method, steps, seed=0):
    schedule = DiffusionSchedule()
    target = GaussianTarget([1.0, -1.0], np.diag([1.0, 0.25]))
    gen = LinearGaussianGenerator.initial(2, 2)
    cfg = DistillConfig(method=method, lam=0.5, steps=steps, warmup=min(100, steps), seed=seed,
                        score_source="oracle")
    noise = draw_run_noise(gen, schedule, RandomStreams(seed), steps)
    lrs = np.array([cfg.lr_at(s) for s in range(steps)])
    return (gen.params.copy(), 2, 2, target.mu, np.ascontiguousarray(target.sigma), 1.0, _KERNEL_CODES[cfg.method],
            0.5, np.ascontiguousarray(noise.cams, dtype=float), noise.alphas, noise.sigmas, noise.omegas,
            np.ascontiguousarray(noise.eps), lrs, cfg.log_every, cfg.guard)


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled_distill_linear_gaussian is None:
        print("compiled extension not built; only the python twin is timed")
    print(f"{'method':<10} {'python (ms)':>12} {'compiled (ms)':>14} {'speedup':>8} {'max |diff|':>11}")
    for method in Method:
        kargs = kernel_args(method, args.steps)
        t_py, out_py = best_time(kernels.python_distill_linear_gaussian, kargs, args.repeat)
        if kernels.compiled_distill_linear_gaussian is None:
            print(f"{method.value:<10} {1e3 * t_py:>12.2f} {'-':>14} {'-':>8} {'-':>11}")
            continue
        t_c, out_c = best_time(kernels.compiled_distill_linear_gaussian, kargs, args.repeat)
        diff = np.max(np.abs(out_py[1] - out_c[1]))
        print(f"{method.value:<10} {1e3 * t_py:>12.2f} {1e3 * t_c:>14.3f} {t_py / t_c:>7.0f}x {diff:>11.1e}")


if __name__ == "__main__":
    main()
