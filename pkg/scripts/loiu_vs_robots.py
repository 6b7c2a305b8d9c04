"""Mean LoIU against team size for the learned and fixed schedulers.

    python scripts/loiu_vs_robots.py --values 5,10,15 --episodes 60 --output results/robots
"""

import argparse

from loiu import harness
from loiu.config import ExperimentConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--axis", default="robots", choices=sorted(harness.SWEEP_AXES))
    ap.add_argument("--values", default="5,10,15")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--episodes", type=int, default=60)
    ap.add_argument("--policies", default="proposed,dqn,random,all-allocated")
    ap.add_argument("--output", default="results/robots")
    args = ap.parse_args()
    cfg = ExperimentConfig().replace(
        train=dict(episodes=args.episodes), policies=tuple(args.policies.split(",")),
        seeds=tuple(int(s) for s in args.seeds.split(",")), output_dir=args.output).validate()
    bundles = harness.sweep(cfg, args.axis, [int(v) for v in args.values.split(",")])
    for b in bundles:
        cells = "  ".join(f"{p}={b.aggregate[p]['mean_loiu']['mean']:.4g}" for p in cfg.policies)
        print(f"{b.label:12s} {cells}")
    harness.emit_plots(bundles, f"{args.output}/plots")
    print(f"results in {args.output}")


if __name__ == "__main__":
    main()
