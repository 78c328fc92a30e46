"""CPU-only, FPGA-only and hybrid energy on bursty profiles for several FPGA efficiency factors."""

import argparse

from _common import outdir

from carbonsched import fmt
from carbonsched.experiments import hybrid_case


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--factors", default="10,20,40,70")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = []
    for f in (float(x) for x in args.factors.split(",")):
        for seed in range(args.seeds):
            base, p = hybrid_case(f, seed=seed)
            rows.append([f, seed, base, p.fpga_units, p.energy, p.cpu_only_energy, p.fpga_only_energy,
                         p.violations, p.cpu_only_violations, p.fpga_only_violations])
    path = outdir(args.out) / "hybrid_split.csv"
    header = ["factor", "seed", "baseline_rps", "fpga_units", "hybrid_j", "cpu_only_j", "fpga_only_j",
              "hybrid_violations", "cpu_only_violations", "fpga_only_violations"]
    with open(path, "w", newline="") as fh:
        fmt.write_csv(fh, header, rows)
    for r in rows[:: args.seeds]:
        print(f"f={r[0]:g}: hybrid {r[4]:.3f} J, CPU-only {r[5]:.3f} J, FPGA-only {r[6]:.3f} J ({r[9]:g} late requests)")
    print(path)


if __name__ == "__main__":
    main()
