"""Grid refinement study for the shrinking circle.

Evolves ``|x|^2 - 1`` in the plane on successively finer grids and prints
the worst relative radius error against ``sqrt(1 - 2t)`` together with the
observed convergence rate.
"""

import argparse
import math

import numpy as np

from carnotflow import EpsilonFrame, euclidean, sample
from carnotflow.contour import zero_set_radius
from carnotflow.pde_engine import evolve


def radius_error(nodes: int, T: float, every: float) -> float:
    field = sample([(-1.5, 1.5)] * 2, (nodes, nodes), lambda x: np.sum(x**2, axis=-1) - 1.0)
    traj = evolve(EpsilonFrame(euclidean(2), 1.0), field, T, snapshot_every=every)
    errs = []
    for snap in traj.snapshots[1:]:
        exact = math.sqrt(1.0 - 2.0 * snap.time)
        errs.append(abs(zero_set_radius(snap).radius - exact) / exact)
    return max(errs)


def cli():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[41, 81, 161])
    ap.add_argument("--T", type=float, default=0.3)
    args = ap.parse_args()
    prev = None
    print("nodes        h      max_rel_err   rate")
    for n in args.nodes:
        h = 3.0 / (n - 1)
        e = radius_error(n, args.T, args.T / 3)
        rate = "" if prev is None else f"{math.log(prev[1] / e) / math.log(prev[0] / h):6.2f}"
        print(f"{n:5d}  {h:9.5f}  {e:12.4e}   {rate}")
        prev = (h, e)


if __name__ == "__main__":
    cli()
