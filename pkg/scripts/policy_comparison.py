"""Every policy on the bundled bursty trace over a common horizon.

    python3 scripts/policy_comparison.py [--intensity FILE] [--out DIR]
"""

import argparse

from _common import outdir

from carbonsched import fmt
from carbonsched.catalog import default_catalog, maybe_series
from carbonsched.engine import COMPARISON_HEADER, comparison_row, run_policy_comparison
from carbonsched.experiments import canonical_trace
from carbonsched.scheduler import POLICIES


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--intensity")
    ap.add_argument("--out")
    args = ap.parse_args()
    results = run_policy_comparison(canonical_trace(), default_catalog(), list(POLICIES), series=maybe_series(args.intensity))
    path = outdir(args.out) / "policy_comparison.csv"
    with open(path, "w", newline="") as fh:
        fmt.write_csv(fh, COMPARISON_HEADER, (comparison_row(r.metrics) for r in results))
    for r in results:
        m = r.metrics
        print(f"{m.policy:22s} {m.total_energy:10.4f} J  {m.total_carbon:.4g} g  violations {m.sla_violations}")
    print(path)


if __name__ == "__main__":
    main()
