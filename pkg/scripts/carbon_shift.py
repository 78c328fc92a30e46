"""Slack-aware scheduling against no-defer under a step-halving grid, 20 seeds."""

import argparse

from _common import outdir

from carbonsched import fmt
from carbonsched.experiments import carbon_shift_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = []
    for seed in range(args.seeds):
        aware, base = carbon_shift_pair(seed)
        a, b = aware.metrics, base.metrics
        rows.append([seed, a.total_carbon, b.total_carbon, a.total_energy, b.total_energy, a.sla_violations, b.sla_violations])
    lower = sum(r[1] < r[2] for r in rows)
    path = outdir(args.out) / "carbon_shift.csv"
    with open(path, "w", newline="") as fh:
        header = ["seed", "aware_carbon_g", "nodefer_carbon_g", "aware_energy_j", "nodefer_energy_j", "aware_violations", "nodefer_violations"]
        fmt.write_csv(fh, header, rows)
    print(f"aware strictly lower on {lower}/{len(rows)} seeds")
    print(path)


if __name__ == "__main__":
    main()
