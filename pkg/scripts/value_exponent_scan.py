"""How the L^p values approach the sample-max value as p grows.

Prints V_p for a range of exponents at one point of the Heisenberg
cylinder problem, next to the grid solution of the level-set equation.
"""

import argparse
import math

import numpy as np

from carnotflow import EpsilonFrame, heisenberg1, sample
from carnotflow.costs import cylinder
from carnotflow.pde_engine import evolve
from carnotflow.value_engine import estimate_values, feedback_family


def cli():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--point", type=float, nargs=3, default=[0.6, 0.2, 0.1])
    ap.add_argument("--epsilon", type=float, default=0.5)
    ap.add_argument("--T", type=float, default=0.2)
    ap.add_argument("--K", type=int, default=5000)
    ap.add_argument("--directions", type=int, default=90)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    frame = EpsilonFrame(heisenberg1(), args.epsilon)
    g = cylinder(cap=2.0)
    x = np.array(args.point)
    fld = sample([(-2.5, 2.5)] * 3, (41, 41, 41), g)
    pde = float(evolve(frame, fld, args.T).final.interpolate(x[None])[0])
    ps = [2, 4, 8, 16, 32, 64, math.inf]
    fam = feedback_family(frame, g, args.directions)
    res = estimate_values(frame, g, 0.0, x, ps, fam, None, args.K, args.seed, args.T, 1e-3)
    print(f"grid solution at {x.tolist()}: {pde:.4f}")
    for p in ps:
        e = res.estimates[float(p)]
        print(f"p = {p:>4}  V = {e.estimate:8.4f}  stderr = {e.stderr:.1e}  policy = {e.policy_id}")


if __name__ == "__main__":
    cli()
