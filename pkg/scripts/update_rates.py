"""Per-period state update rates of the six sampler/proposal pairings on
simulated SV (or CEV) data with the parameters held at their true values.

    python3 scripts/update_rates.py --model sv --T 500 --iterations 1100
"""
import argparse
import csv

import numpy as np

from pgpeis.cli import default_params
from pgpeis.models import cev, sv
from pgpeis.pg import SamplerConfig, run_chain
from pgpeis.smc import ResampleSchedule

PAIRS = [("pg", "bpf"), ("pgas", "bpf"), ("pgmh", "bpf"),
         ("pg", "peis"), ("pgas", "peis"), ("pgmh", "peis")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--model", choices=("sv", "cev"), default="sv")
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--N", type=int, default=30)
    ap.add_argument("--iterations", type=int, default=1100)
    ap.add_argument("--burn-in", type=int, default=100)
    ap.add_argument("--stride", type=int, default=0, help="sparse resampling stride (0 = every period)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="write per-period rates here")
    a = ap.parse_args()

    mod = {"sv": sv, "cev": cev}[a.model]
    P = default_params(a.model)
    _, y = mod.simulate(P, a.T, a.seed)
    model = (sv.SvModel if a.model == "sv" else cev.CevModel)(y)
    sched = ResampleSchedule.sparse(a.stride) if a.stride else ResampleSchedule.every()
    rates = {}
    for variant, proposal in PAIRS:
        cfg = SamplerConfig(variant, proposal, sched, a.N, a.iterations, a.burn_in, update_params=False)
        out = run_chain(model, cfg, P, a.seed + 1)
        r = out.update_rates()[0]
        rates[f"{variant}-{proposal}"] = r
        print(f"{variant:>5}-{proposal:<5} t=1 {r[0]:.3f}  mid {r[a.T // 2]:.3f}  T {r[-1]:.3f}  "
              f"min {r.min():.3f}  failures {out.n_failures}")
    if a.csv:
        with open(a.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *rates])
            for t in range(a.T):
                w.writerow([t + 1, *(repr(float(v[t])) for v in rates.values())])


if __name__ == "__main__":
    np.seterr(all="ignore")
    main()
