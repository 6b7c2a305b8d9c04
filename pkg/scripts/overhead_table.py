"""Per-slot training traffic for a range of team sizes, semi-decentralized vs traditional.

Sizes are counted in floats: one observation is 4|C| features, one action
(|C|+1)+J entries, one reward a scalar; an action gradient has the action's shape.
"""

import argparse

from loiu.maddpg import overhead_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--robots", default="2,5,10,15,20")
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--collab", type=int, default=4)
    ap.add_argument("--rbs", type=int, default=4)
    args = ap.parse_args()
    bo, ba, br = 4 * args.collab, args.collab + 1 + args.rbs, 1
    print(f"{'M':>4} {'semi up':>12} {'semi down':>12} {'trad up':>12} {'trad down':>14}")
    for m in (int(v) for v in args.robots.split(",")):
        r = overhead_report(m, args.batch, bo, ba, br, ba)
        print(f"{m:>4} {r.semi_upload:>12.0f} {r.semi_download:>12.0f} {r.traditional_upload:>12.0f} "
              f"{r.traditional_download:>14.0f}")


if __name__ == "__main__":
    main()
