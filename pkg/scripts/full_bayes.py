"""Full-Bayes replications: posterior means, 95% interval coverage of the
true parameters and ESS, one simulated data set per replication.

    python3 scripts/full_bayes.py --model cev --reps 10 --iterations 10000 --burn-in 2000
"""
import argparse

import numpy as np

from pgpeis.cli import default_params, replication_seeds
from pgpeis.diagnostics import ess
from pgpeis.models import cev, sv
from pgpeis.pg import SamplerConfig, run_chain


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--model", choices=("sv", "cev"), default="sv")
    ap.add_argument("--sampler", choices=("pg", "pgas", "pgmh"), default="pgas")
    ap.add_argument("--proposal", choices=("bpf", "peis"), default="peis")
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--N", type=int, default=30)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--iterations", type=int, default=10000)
    ap.add_argument("--burn-in", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    mod = {"sv": sv, "cev": cev}[a.model]
    P = default_params(a.model)
    cls = sv.SvModel if a.model == "sv" else cev.CevModel
    cfg = SamplerConfig(a.sampler, a.proposal, N=a.N, iterations=a.iterations, burn_in=a.burn_in)
    names = cls.param_names
    truth = cls(np.zeros(2)).flatten(P)
    covered = np.zeros(len(names), dtype=int)
    means, esses = [], []
    for r, s in enumerate(replication_seeds(a.seed, a.reps)):
        _, y = mod.simulate(P, a.T, s)
        out = run_chain(cls(y), cfg, P, s + 1)
        lo, hi = np.quantile(out.theta, [0.025, 0.975], axis=0)
        covered += (lo <= truth) & (truth <= hi)
        means.append(out.theta.mean(0))
        esses.append([ess(out.theta[:, j]) for j in range(len(names))])
        print(f"rep {r}: " + "  ".join(f"{n}={m:.4g} (ess {e:.0f})"
                                       for n, m, e in zip(names, means[-1], esses[-1])))
    print(f"\n{'param':<10}{'true':>10}{'mean':>12}{'coverage':>10}{'mean ESS':>10}{'min ESS':>9}")
    for j, n in enumerate(names):
        col = np.array(esses)[:, j]
        print(f"{n:<10}{truth[j]:>10.4g}{np.mean(means, 0)[j]:>12.4g}"
              f"{covered[j]:>7}/{a.reps:<2}{col.mean():>10.0f}{col.min():>9.0f}")


if __name__ == "__main__":
    np.seterr(all="ignore")
    main()
