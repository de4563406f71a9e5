#!/usr/bin/env python3
"""Write the synthetic 73-bus case: three copies of the 24-bus RTS topology,
tie lines between the areas and one extra bus linking areas 1 and 3.

Every bus carries a load. Buses 5 and 27 sit in load pockets whose import
lines have tight limits, so sweeping those two loads changes which
constraints bind. Output is deterministic for a given seed.
"""

import argparse
import math
import random

RTS_BRANCHES = [
    (1, 2), (1, 3), (1, 5), (2, 4), (2, 6), (3, 9), (3, 24), (4, 9), (5, 10),
    (6, 10), (7, 8), (8, 9), (8, 10), (9, 11), (9, 12), (10, 11), (10, 12),
    (11, 13), (11, 14), (12, 13), (12, 23), (13, 23), (14, 16), (15, 16),
    (15, 21), (15, 24), (16, 17), (16, 19), (17, 18), (17, 22), (18, 21),
    (19, 20), (20, 23), (21, 22),
]
RTS_GEN_BUSES = [1, 2, 7, 13, 15, 16, 18, 21, 22, 23]
TIES = [(7, 27), (13, 39), (23, 41), (42, 71), (21, 73), (73, 57)]
POCKETS = {
    5: {(1, 5): 95.0, (5, 10): 105.0},
    27: {(25, 27): 70.0, (27, 33): 65.0, (27, 48): 75.0},
}


def fmt(v):
    return repr(round(v, 6))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=73)
    ap.add_argument("--gamma", type=float, default=10.0)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--epsilon", type=float, default=20.0)
    ap.add_argument("--output", default="cases/syn73.case")
    args = ap.parse_args()
    rng = random.Random(args.seed)

    n_bus = 73
    lines = []
    for area in range(3):
        off = 24 * area
        for f, t in RTS_BRANCHES:
            lines.append((f + off, t + off))
    lines += TIES

    pocket_limits = {}
    for limits in POCKETS.values():
        pocket_limits.update(limits)

    out = []
    out.append("# Synthetic 73-bus case: three RTS-24 style areas with tie lines.")
    out.append("# Generated by tools/make_syn73.py --seed %d" % args.seed)
    out.append("case syn73")
    out.append("base_mva 100")
    out.append("copper_plate 0")
    out.append("")
    out.append("bus")
    out.append("# id theta_min theta_max is_reference")
    half_pi = fmt(math.pi / 2)
    for i in range(1, n_bus + 1):
        out.append("%d -%s %s %d" % (i, half_pi, half_pi, 1 if i == 13 else 0))
    out.append("end")
    out.append("")
    out.append("branch")
    out.append("# from to b f_min f_max")
    for f, t in lines:
        b = rng.uniform(5.0, 30.0)
        cap = pocket_limits.get((f, t), 600.0)
        out.append("%d %d %s %s %s" % (f, t, fmt(b), fmt(-cap), fmt(cap)))
    out.append("end")
    out.append("")
    out.append("gen")
    out.append("# bus a b c g_min g_max")
    for area in range(3):
        for g in RTS_GEN_BUSES:
            a = rng.uniform(0.002, 0.02)
            blin = rng.uniform(10.0, 40.0)
            c = rng.uniform(50.0, 300.0)
            gmax = rng.uniform(150.0, 350.0)
            out.append("%d %s %s %s 0 %s" % (g + 24 * area, fmt(a), fmt(blin), fmt(c), fmt(gmax)))
    out.append("end")
    out.append("")
    out.append("load")
    out.append("# bus d s_max")
    used = set()
    for i in range(1, n_bus + 1):
        while True:
            d = round(rng.uniform(20.0, 110.0), 1)
            if d not in used:
                used.add(d)
                break
        if i in POCKETS:
            d = 120.0 + i / 10.0
        out.append("%d %s 0.4" % (i, fmt(d)))
    out.append("end")
    out.append("")
    out.append("fairness")
    out.append("gamma %s" % fmt(args.gamma))
    out.append("delta %s" % fmt(args.delta))
    out.append("epsilon %s" % fmt(args.epsilon))
    out.append("lambda 10000")
    out.append("end")
    out.append("")
    out.append("features")
    for _ in range(5):
        out.append(" ".join(fmt(rng.random()) for _ in range(n_bus)))
    out.append("end")

    with open(args.output, "w") as fh:
        fh.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
