"""Run every acceptance configuration through the CLI and print a verdict table.

    python3 scripts/run_acceptance.py --out runs/acceptance [--threads N] [--only 1 4 6]
"""

import argparse
import time
from pathlib import Path

from carnotflow.cli import main

ROOT = Path(__file__).resolve().parents[1]
RUNS = [
    (1, "pde", "crit1_euclidean_circle"),
    (2, "sweep", "crit2_heisenberg_cylinder"),
    (3, "pde", "crit3_stationary_plane"),
    (4, "simulate", "crit4_levy_area"),
    (5, "sweep", "crit5_weak_order_euclidean"),
    (5, "sweep", "crit5_weak_order_heisenberg"),
    (6, "check", "crit6_hamiltonian"),
    (7, "check", "crit7_lambda_max"),
    (8, "check", "crit8_value_lemmas"),
    (9, "compare", "crit9_compare"),
]


def cli():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/acceptance")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", type=int, nargs="*")
    args = ap.parse_args()
    table = []
    for number, command, name in RUNS:
        if args.only and number not in args.only:
            continue
        t0 = time.perf_counter()
        code = main([command, "--config", str(ROOT / "configs" / f"{name}.toml"),
                     "--out", str(Path(args.out) / name), "--threads", str(args.threads)])
        table.append((number, name, code, time.perf_counter() - t0))
    print()
    for number, name, code, secs in table:
        print(f"{number:2d}  {'PASS' if code == 0 else f'FAIL({code})':8s}  {secs:8.1f}s  {name}")
    return 0 if all(c == 0 for _, _, c, _ in table) else 2


if __name__ == "__main__":
    raise SystemExit(cli())
