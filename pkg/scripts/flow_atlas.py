#!/usr/bin/env python3
"""Survey every catalog flow: admissibility, streamline topology, drift limit.

A one-stop sanity run; prints one summary line per flow.
"""

import argparse
import sys
import time

import numpy as np

import kppdrift as kd
from kppdrift.firstintegrals import advection_constraint_operator, kernel_basis


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--seeds", type=int, default=16)
    args = ap.parse_args()

    cell = kd.PeriodicCell("torus", 1.0, 1.0, args.n, args.n)
    A = kd.TensorField.constant(cell, 1.0)
    zeta = kd.ScalarField.constant(cell, 1.0)
    e1 = kd.Direction.of(1.0, 0.0)

    for name in ("zero", "shear", "cellular", "diagonal", "remark"):
        q = kd.sample_flow(kd.FlowSpec(name), cell)
        ok = kd.check_admissibility(q, cell).passed
        t0 = time.monotonic()
        if q.max_norm() > 0:
            survey = kd.survey_flow(q, n_seeds=args.seeds)
            a = survey.global_period
            a_txt = f"({a[0]:g}, {a[1]:g})" if a is not None else "none"
            tags = " ".join(f"{k}={v}" for k, v in sorted(survey.counts.items()))
        else:
            a_txt, tags = "none", "all stagnant"
        kern = kernel_basis(advection_constraint_operator(q), cell, max_dim=192)
        v = kd.limit_speed(A, q, zeta, e1, kern).value
        print(
            f"{name:>9}: admissible={ok} period={a_txt:>12} limit(e1)={v!r:>24} "
            f"kernel_dim={kern.dim:>3} [{tags}] ({time.monotonic() - t0:.1f} s)"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
