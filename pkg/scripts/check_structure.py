#!/usr/bin/env python3
"""Run the diagnostic suite on each benchmark family and summarize.

The fair-PCA family is expected to flag its Jacobian-kernel identity: the
gradient of its Frobenius-norm constraint points into the normal cone of the
spectral ball at every feasible point, so no projective-mapping construction
can annihilate it (the check's kernel_outside_normal_span detail confirms the
violation lies inside that cone's span).
"""

import sys

from dissolve.cli import main as cli

FAMILIES = [
    ["--family", "npca", "--n", "60", "--cols", "30"],
    ["--family", "qpb", "--n", "60"],
    ["--family", "fpca", "--n", "15", "--k", "2", "--d", "3"],
]


def run():
    overall = 0
    for flags in FAMILIES:
        print(f"=== check {' '.join(flags)}")
        rc = cli(["check", *flags, "--seed", "0"])
        overall |= rc
    return overall


if __name__ == "__main__":
    sys.exit(run())
