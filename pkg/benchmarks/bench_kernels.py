"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--users 2 8 16]

Every case is checked for parity before it is timed, so a speedup is never
reported for a kernel that disagrees with the reference.
"""
import argparse
import sys
import timeit

import numpy as np

from spectrum_leasing import kernels
from spectrum_leasing.dra import INITIAL_PANELS, MAX_PANELS, QUAD_TOL, TAIL_GAIN


def _inputs(k, seed=0):
    rng = np.random.default_rng([seed, k])
    return 10.0 ** rng.uniform(-0.6, 4.0, k), rng.uniform(0.1, 3.0, k)


def phi_case(k):
    snr, w = _inputs(k)

    def run(mod):
        val, err = np.zeros(k), np.zeros(k)
        mod.phi_integrals(snr, w, TAIL_GAIN, INITIAL_PANELS, QUAD_TOL, MAX_PANELS, val, err, -1)
        return val
    return run


def jacobian_case(k):
    snr, w = _inputs(k)

    def run(mod):
        val, err, jac = np.zeros(k), np.zeros(k), np.zeros((k, k))
        mod.phi_jacobian(snr, w, TAIL_GAIN, INITIAL_PANELS, QUAD_TOL, MAX_PANELS, val, err, jac)
        return jac
    return run


def schedule_case(k, slots=2000, subchannels=8):
    snr, w = _inputs(k)
    gains = np.random.default_rng([1, k]).standard_exponential((slots, k, subchannels))

    def run(mod):
        winners = np.zeros((slots, subchannels), dtype=np.int32)
        totals = np.zeros(k)
        mod.schedule_slots(w, snr, 1.0, gains, winners, totals)
        return totals
    return run


CASES = {"phi_integrals": phi_case, "phi_jacobian": jacobian_case, "schedule_slots": schedule_case}


def best_time(fn, repeat):
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--users", type=int, nargs="+", default=[2, 8, 16])
    args = ap.parse_args(argv)

    python = kernels.get_backend("python")
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; run `python setup.py build_ext --inplace`", file=sys.stderr)
        return 1

    print(f"{'kernel':<16}{'K':>4}{'compiled (ms)':>15}{'python (ms)':>13}{'speedup':>9}")
    for name, make in CASES.items():
        for k in args.users:
            run = make(k)
            np.testing.assert_allclose(run(compiled), run(python), rtol=1e-9, atol=1e-12)
            t_c = best_time(lambda: run(compiled), args.repeat)
            t_p = best_time(lambda: run(python), args.repeat)
            print(f"{name:<16}{k:>4}{1e3 * t_c:>15.3f}{1e3 * t_p:>13.3f}{t_p / t_c:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
