"""Energy against tail latency for memory tierings of the bundled objects.

Each latency target gives one tiering (cheapest placement meeting it);
the points are reduced to their Pareto frontier.
"""

import argparse

from _common import outdir

from carbonsched.catalog import default_catalog
from carbonsched.interchange import AccessStats, TieringInfeasible, TradeoffPoint, pareto_frontier, tier_data, tier_latency, tier_power, write_frontier_csv
from carbonsched.workload import SLA, substream


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()
    cat = default_catalog()
    rng = substream(args.seed, "scripts/tiering")
    objs = list(cat.objects)
    stats = {o.id: AccessStats(float(rng.exponential(3000)), float(rng.exponential(300)), 4096.0) for o in objs}
    media = {m.id: m for m in cat.media}
    points = []
    for target in (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000):
        try:
            plan = tier_data(objs, stats, list(media.values()), SLA(target))
        except TieringInfeasible as e:
            print(f"target {target} us: infeasible ({e.constraint})")
            continue
        energy = sum(tier_power(o, stats[o.id], media[plan[o.id]]) for o in objs)
        tail = max(tier_latency(stats[o.id], media[plan[o.id]]) for o in objs)
        points.append(TradeoffPoint(f"sla{target}us", energy, tail))
    path = outdir(args.out) / "tiering_frontier.csv"
    with open(path, "w", newline="") as fh:
        write_frontier_csv(points, fh)
    for p in pareto_frontier(points):
        print(f"{p.label:10s} {p.energy:.6g} W  tail {p.tail_latency:.4g} us")
    print(path)


if __name__ == "__main__":
    main()
