"""Placement cost and runtime of each solver on random instances."""

import argparse
import time

from _common import outdir

from carbonsched import fmt
from carbonsched.placement import lower_bound, random_problem, solve_exact, solve_heuristic, solve_round_robin


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows, clock = [], {"exact": 0.0, "heuristic": 0.0, "round-robin": 0.0}
    for seed in range(args.instances):
        p = random_problem(seed, n_functions=1 + seed % 8)
        row = [seed, len(p.functions), lower_bound(p)]
        for name, solve in (("exact", solve_exact), ("heuristic", solve_heuristic), ("round-robin", solve_round_robin)):
            t0 = time.perf_counter()
            a = solve(p)
            clock[name] += time.perf_counter() - t0
            row += [a.unplaced, a.total_cost]
        rows.append(row)
    path = outdir(args.out) / "solver_benchmark.csv"
    header = ["seed", "functions", "lower_bound_j", "exact_unplaced", "exact_j", "heuristic_unplaced", "heuristic_j", "rr_unplaced", "rr_j"]
    with open(path, "w", newline="") as fh:
        fmt.write_csv(fh, header, rows)
    for name, t in clock.items():
        print(f"{name:12s} {t:.3f} s total")
    print(path)


if __name__ == "__main__":
    main()
