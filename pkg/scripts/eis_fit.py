"""EIS regression fit quality (per-period R^2) against the number of
iterations L, on simulated SV, CEV or inverted-Wishart data.

    python3 scripts/eis_fit.py --model sv --T 500 --R 15 --L 1 2 4 8
"""
import argparse

import numpy as np

from pgpeis.cli import default_params
from pgpeis.eis import fit_eis
from pgpeis.models import cev, invwishart, sv
from pgpeis.ssm import CrnStore


def components(model, T, seed, q):
    if model == "invwishart":
        P = default_params(model, q)
        _, Y = invwishart.simulate(P, T, seed)
        return invwishart.InvWishartModel(Y).components(P)
    mod = {"sv": sv, "cev": cev}[model]
    P = default_params(model)
    _, y = mod.simulate(P, T, seed)
    return [mod.make_model(y, P)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--model", choices=("sv", "cev", "invwishart"), default="sv")
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--q", type=int, default=3)
    ap.add_argument("--R", type=int, default=15)
    ap.add_argument("--L", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--seeds", type=int, default=5)
    a = ap.parse_args()

    print(f"{'seed':>4} {'comp':>4} " + " ".join(f"{'L=' + str(L):>16}" for L in a.L))
    for seed in range(a.seeds):
        for c, comp in enumerate(components(a.model, a.T, seed, a.q)):
            U = CrnStore.draw(seed, 0, a.T, 2, a.R, 1, c).fit_normals
            cells = []
            for L in a.L:
                r2 = fit_eis(comp, U, L).r2
                cells.append(f"{np.median(r2):.4f}/{r2.min():.4f}")
            print(f"{seed:>4} {c:>4} " + " ".join(f"{s:>16}" for s in cells))
    print("cells: median / min R^2 over periods")


if __name__ == "__main__":
    np.seterr(all="ignore")
    main()
