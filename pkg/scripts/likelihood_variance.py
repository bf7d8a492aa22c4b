"""Variance of log-likelihood estimates from BPF and PEIS filters over
particle counts and resampling schedules, with the exact Kalman value on
the linear-Gaussian model for reference.

    python3 scripts/likelihood_variance.py --model sv --T 500 --reps 100
"""
import argparse

import numpy as np

from pgpeis.cli import default_params
from pgpeis.eis import PeisProposal, fit_eis
from pgpeis.models import linear_gaussian as lg, sv
from pgpeis.smc import BootstrapProposal, ResampleSchedule, run_smc
from pgpeis.ssm import CrnStore


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--model", choices=("sv", "lg"), default="sv")
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--N", type=int, nargs="+", default=[10, 30, 100])
    ap.add_argument("--stride", type=int, nargs="+", default=[1, 10, 100])
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    if a.model == "sv":
        _, y = sv.simulate(default_params("sv"), a.T, a.seed)
        comp = sv.make_model(y, default_params("sv"))
    else:
        P = lg.LgParams(0.9, 0.5, 1.0)
        _, y = lg.simulate(P, a.T, a.seed)
        comp = lg.make_model(y, P)
    eis = fit_eis(comp, CrnStore.draw(a.seed, 0, a.T, 2).fit_normals, 4)
    props = {"bpf": BootstrapProposal(comp), "peis": PeisProposal(comp, eis)}
    print(f"{'filter':<6}{'N':>5}{'stride':>7}{'mean log Z':>14}{'sd':>10}")
    for name, prop in props.items():
        for N in a.N:
            for k in a.stride:
                sched = ResampleSchedule.every() if k == 1 else ResampleSchedule.sparse(k)
                lz = np.array([run_smc(comp, prop, sched, N, CrnStore.draw(a.seed, r + 1, a.T, N).smc[0])[1]
                               for r in range(a.reps)])
                print(f"{name:<6}{N:>5}{k:>7}{lz.mean():>14.4f}{lz.std(ddof=1):>10.4f}")


if __name__ == "__main__":
    np.seterr(all="ignore")
    main()
