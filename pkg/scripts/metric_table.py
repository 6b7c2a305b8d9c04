"""Task reliability of each scheduler trained or triggered on each freshness metric (M=15, z in [1, 5]).

    python scripts/metric_table.py --seeds 0,1,2 --episodes 40 --output results/metrics
"""

import argparse

from loiu import harness
from loiu.config import METRICS, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--episodes", type=int, default=40)
    ap.add_argument("--methods", default="proposed,random,all-allocated,threshold,tdm")
    ap.add_argument("--metrics", default=",".join(METRICS))
    ap.add_argument("--output", default="results/metrics")
    args = ap.parse_args()
    cfg = preset("table-4").replace(train=dict(episodes=args.episodes),
                                    seeds=tuple(int(s) for s in args.seeds.split(",")),
                                    output_dir=args.output).validate()
    result = harness.compare_metrics(cfg, tuple(args.metrics.split(",")), tuple(args.methods.split(",")))
    print(harness.format_table(result), end="")
    print(f"results in {args.output}")


if __name__ == "__main__":
    main()
