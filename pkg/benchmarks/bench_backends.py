"""Benchmark the numba kernels against the pure-numpy fallback.

Times the forward composite and its backward pass on a synthetic scene at a
few sizes, then prints a small table with the speedup. Run directly:

    python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from evsplat import kernels, rasterizer
from evsplat.core import CameraView, GaussianCloud, inverse_sigmoid, quat_normalize


def make_scene(rng, n):
    return GaussianCloud(
        positions=rng.uniform(-1, 1, (n, 3)) * [1.0, 1.0, 0.3],
        rotations=quat_normalize(rng.normal(size=(n, 4))),
        log_scales=rng.uniform(np.log(0.05), np.log(0.25), (n, 3)),
        opacity_logits=inverse_sigmoid(rng.uniform(0.3, 0.9, n)),
        colors=rng.uniform(0.05, 0.95, (n, 3)),
    )


def bench(fn, repeats):
    fn()  # warm up (JIT compile on the numba path)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"available backends: {kernels.available_backends()}")
    print(f"{'scene':>22} {'pass':>9} {'numpy':>10} {'numba':>10} {'speedup':>8}")

    rng = np.random.default_rng(0)
    for n, size in [(100, 64), (500, 64), (2000, 64), (500, 128)]:
        cloud = make_scene(rng, n)
        view = CameraView([1, 0, 0, 0], [0, 0, 3.0], (40.0 * size / 32, 40.0 * size / 32),
                          ((size - 1) / 2, (size - 1) / 2), (size, size))
        _, tape = rasterizer.forward(cloud, view, (0, 0, 0))
        grad = rng.normal(size=(size, size, 3))

        fwd_args = (
            np.ascontiguousarray(tape.means2d), np.ascontiguousarray(tape.conics),
            np.ascontiguousarray(tape.opacities), np.ascontiguousarray(tape.colors),
            np.ascontiguousarray(tape.bboxes), size, size, np.zeros(3),
        )
        bwd_args = fwd_args + (tape.t_final, tape.n_contrib, grad)

        results = {}
        for backend in kernels.available_backends():
            f, b = kernels.get_backend(backend)
            results[backend] = (
                bench(lambda: f(*fwd_args), args.repeats),
                bench(lambda: b(*bwd_args), args.repeats),
            )
        if "numba" not in results:
            for phase, i in (("forward", 0), ("backward", 1)):
                t_np = results["numpy"][i]
                print(f"{n:>5} splats @ {size}px {phase:>9} {t_np * 1e3:9.2f}ms {'-':>10} {'-':>8}")
            continue
        for phase, i in (("forward", 0), ("backward", 1)):
            t_np, t_nb = results["numpy"][i], results["numba"][i]
            print(f"{n:>5} splats @ {size}px {phase:>9} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
                  f"{t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
