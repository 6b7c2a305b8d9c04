"""Train the proposed scheduler at M=5 and write the per-episode reward curve.

    python scripts/convergence.py --seeds 0,1,2 --episodes 150 --output results/convergence
"""

import argparse

import numpy as np

from loiu import harness
from loiu.config import ExperimentConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--episodes", type=int, default=150)
    ap.add_argument("--robots", type=int, default=5)
    ap.add_argument("--output", default="results/convergence")
    args = ap.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    cfg = ExperimentConfig().replace(env=dict(n_robots=args.robots), train=dict(episodes=args.episodes),
                                     policies=("proposed",), seeds=seeds, output_dir=args.output).validate()
    bundle = harness.run(cfg, label="convergence")
    for s in seeds:
        r = np.array([row["episode_reward"] for row in bundle.train_log if row["seed"] == s])
        last = r[-20:]
        print(f"seed {s}: first-10 mean {r[:10].mean():.1f}  last-20 mean {last.mean():.1f}  "
              f"last-20 std / range {last.std() / (r.max() - r.min()):.3f}")
    harness.emit_plots([bundle], f"{args.output}/plots")
    print(f"results in {args.output}")


if __name__ == "__main__":
    main()
