#!/usr/bin/env python3
"""Cross-validate the 2D drift-limit solver against the 1D shear oracle.

Prints module-vs-oracle values over a (growth rate, amplitude) grid; this is
the table the acceptance suite freezes its reference values from.
"""

import argparse
import os
import sys
import time

import kppdrift as kd
from kppdrift.firstintegrals import advection_constraint_operator, kernel_basis

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from oracle1d import shear_limit_oracle  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--oracle-n", type=int, default=512)
    ap.add_argument("--zetas", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    args = ap.parse_args()

    cell = kd.PeriodicCell("torus", 1.0, 1.0, args.n, args.n)
    A = kd.TensorField.constant(cell, 1.0)
    e1 = kd.Direction.of(1.0, 0.0)

    q_unit = kd.sample_flow(kd.FlowSpec("shear"), cell)
    t0 = time.monotonic()
    kern = kernel_basis(advection_constraint_operator(q_unit), cell)
    print(f"kernel dim {kern.dim} at n={args.n} ({time.monotonic() - t0:.1f} s)")

    print(f"{'zeta':>6} {'amp':>6} {'module':>14} {'oracle':>14} {'rel diff':>10}")
    for z in args.zetas:
        zeta = kd.ScalarField.constant(cell, z)
        for a in args.amplitudes:
            q = kd.sample_flow(kd.FlowSpec("shear", amplitude=a), cell)
            v = kd.limit_speed(A, q, zeta, e1, kern).value
            ref = shear_limit_oracle(amplitude=a, zeta=z, n=args.oracle_n)
            print(f"{z:>6.2f} {a:>6.2f} {v:>14.8f} {ref:>14.8f} {abs(v - ref) / ref:>10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
