#!/usr/bin/env python3
"""Run the three benchmark families into CSV tables.

Default sizes are desk-scale; pass --full for the larger grids (several
minutes).  Tables land in results/ with one row per (instance, seed):
family,n,extra_dims,rho,seed,solver,beta,fval,feas,stat,iters,time_s,status
"""

import argparse
import pathlib
import sys

from dissolve.cli import main as cli


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--jobs", default=None)
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args(argv)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = ["--jobs", args.jobs] if args.jobs else []

    if args.full:
        npca_ns, qpb_ns, fpca_ns = "100,200,500", "100,200,500,1000", "100,500"
        fpca_ks = (2, 5, 10)
    else:
        npca_ns, qpb_ns, fpca_ns = "100,200", "100,200", "20,50"
        fpca_ks = (2,)

    rc = 0
    rc |= cli(["bench", "--family", "npca", "--n", npca_ns, "--cols", "50",
               "--rho", "0.0,0.1", "--seeds", args.seeds,
               "--csv", str(out / "npca.csv"), *jobs])
    rc |= cli(["bench", "--family", "qpb", "--n", qpb_ns,
               "--seeds", args.seeds, "--csv", str(out / "qpb.csv"), *jobs])
    for k in fpca_ks:
        rc |= cli(["bench", "--family", "fpca", "--n", fpca_ns,
                   "--k", str(k), "--d", "3", "--seeds", args.seeds,
                   "--csv", str(out / "fpca.csv"), *jobs])
    return rc


if __name__ == "__main__":
    sys.exit(run())
