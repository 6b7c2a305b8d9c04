"""Runs experiments: training, paired-seed evaluation, sweeps, metric tables, plot scripts.

Every (policy, seed) pair shares the same deployment and the same evaluation
noise seeds with every other policy, so cross-policy differences are paired.
Raw per-episode rows carry counts (not just ratios) so every aggregate in the
summary can be recomputed from the CSV.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .baselines import train_dqn_baseline, train_ddpg_baseline
from .config import LEARNED, ExperimentConfig
from .env import RobotAction, RobotTeamEnv
from .maddpg import LOG_FIELDS, load_actors, scenario_seed, train
from .metrics import MetricKind
from .policies import MetricState, ThresholdConfig, all_allocated_policy, random_policy, tdm_policy, threshold_policy
from .seeding import derive_rng, derive_seed

RAW_FIELDS = ("policy", "seed", "episode", "slots", "mean_loiu", "mean_reward", "task_ok", "task_total",
              "tx_ok", "tx_total", "delay_sum", "delay_count", "abs_error_sum", "abs_error_count")


# --------------------------------------------------------------------------
# policy adapters: each advances the env by one slot


class _Fixed:
    def __init__(self, name, rng):
        self.name, self.rng = name, rng

    def begin(self, env):
        pass

    def step(self, env, observations):
        c, j = env.config.n_collab, env.config.n_rbs
        fn = random_policy if self.name == "random" else all_allocated_policy
        return env.step([fn(c, j, self.rng) for _ in range(env.n_robots)])


class _Threshold:
    def __init__(self, zeta, metric, rng):
        self.cfg = ThresholdConfig(zeta, metric)
        self.rng = rng

    def begin(self, env):
        self.last_loiu = np.zeros(env.n_robots)

    def step(self, env, observations):
        kind = self.cfg.metric
        values = None if kind is MetricKind.LOIU else env.metric_values(kind)
        acts = []
        for m in range(env.n_robots):
            c = env.collaborators[m]
            link = np.zeros(len(c)) if values is None else values[c, m]
            state = MetricState(link, float(self.last_loiu[m]), float(env.deadline[m]), env.err_max[c, m])
            acts.append(threshold_policy(state, self.cfg, env.config.n_rbs, self.rng))
        out = env.step(acts)
        self.last_loiu = out.info["loiu"]
        return out


class _Tdm:
    def begin(self, env):
        self.t = 0

    def step(self, env, observations):
        sched = tdm_policy(self.t, env.collaborators, env.config.n_rbs)
        self.t += 1
        return env.step(sched.allocation, minislot=sched.minislot, n_minislots=sched.n_minislots)


class _Learned:
    def __init__(self, policy):
        self.policy = policy

    def begin(self, env):
        pass

    def step(self, env, observations):
        return env.step(self.policy.actions(env, observations))


def make_policy(name, cfg: ExperimentConfig, seed: int, trained=None):
    rng = derive_rng(seed, "policy", name)
    if name in ("random", "all-allocated"):
        return _Fixed(name, rng)
    if name == "threshold":
        return _Threshold(cfg.threshold_zeta, cfg.env.reward_metric, rng)
    if name == "tdm":
        return _Tdm()
    if trained is None:
        raise ValueError(f"policy {name!r} needs a trained model")
    return _Learned(trained.policy())


def train_learner(name, cfg: ExperimentConfig, seed: int, progress=None, checkpoint_dir=None):
    if name == "proposed":
        return train(cfg.env, cfg.train, seed, progress=progress, checkpoint_dir=checkpoint_dir)
    fn = {"ddpg": train_ddpg_baseline, "dqn": train_dqn_baseline}[name]
    return fn(cfg.env, cfg.train, seed, progress=progress)


# --------------------------------------------------------------------------
# evaluation


def evaluate_policy(adapter, name, cfg: ExperimentConfig, seed: int) -> list:
    env = RobotTeamEnv(cfg.env)
    rows = []
    for ep in range(cfg.eval_episodes):
        _, obs = env.reset(derive_seed(seed, "eval-episode", ep), scenario_seed(seed))
        adapter.begin(env)
        acc = dict(task_ok=0, task_total=0, tx_ok=0, tx_total=0, delay_sum=0.0, delay_count=0,
                   abs_error_sum=0.0, abs_error_count=0)
        loiu, reward = [], []
        for _ in range(cfg.eval_slots):
            out = adapter.step(env, obs)
            obs = out.observations
            rel = out.info["reliability"]
            acc["task_ok"] += rel.task_ok
            acc["task_total"] += rel.task_total
            acc["tx_ok"] += rel.tx_ok
            acc["tx_total"] += rel.tx_total
            q = out.info["q"]
            acc["delay_sum"] += float(np.sum(out.info["pair_delay"][q]))
            acc["delay_count"] += int(np.count_nonzero(q))
            acc["abs_error_sum"] += float(np.sum(np.abs(out.info["errors"][env.nu])))
            acc["abs_error_count"] += int(np.count_nonzero(env.nu))
            loiu.append(float(np.mean(out.info["loiu"])))
            reward.append(out.global_reward)
        rows.append(dict(policy=name, seed=seed, episode=ep, slots=cfg.eval_slots,
                         mean_loiu=float(np.mean(loiu)), mean_reward=float(np.mean(reward)), **acc))
    return rows


def run_one(cfg: ExperimentConfig, name: str, seed: int, checkpoint_root=None):
    """Train (if needed) and evaluate one policy on one seed.  Returns (raw rows, training log).

    With ``checkpoint_root`` the proposed actors are loaded from
    ``<root>/seed=<seed>`` instead of trained.
    """
    if name == "proposed" and checkpoint_root:
        adapter = _Learned(load_actors(cfg.env, cfg.train, os.path.join(checkpoint_root, f"seed={seed}"), seed))
        return evaluate_policy(adapter, name, cfg, seed), []
    trained = None
    if name in LEARNED:
        ckpt = os.path.join(cfg.output_dir, "checkpoints", f"seed={seed}") if name == "proposed" else None
        trained = train_learner(name, cfg, seed, checkpoint_dir=ckpt)
    rows = evaluate_policy(make_policy(name, cfg, seed, trained), name, cfg, seed)
    log = [] if trained is None else [dict(policy=name, seed=seed, **r) for r in trained.log]
    return rows, log


def _run_job(args):
    return run_one(*args)


# --------------------------------------------------------------------------
# aggregation and files


def summarize_rows(rows) -> dict:
    """Pooled statistics for one (policy, seed) block of raw rows."""
    s = lambda k: sum(r[k] for r in rows)
    return dict(
        mean_loiu=float(np.mean([r["mean_loiu"] for r in rows])),
        mean_reward=float(np.mean([r["mean_reward"] for r in rows])),
        task_reliability=s("task_ok") / s("task_total"),
        transmission_reliability=(s("tx_ok") / s("tx_total")) if s("tx_total") else None,
        mean_delay=(s("delay_sum") / s("delay_count")) if s("delay_count") else None,
        mean_abs_error=s("abs_error_sum") / s("abs_error_count"),
    )


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return dict(mean=None, std=None, n=0)
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return dict(mean=float(np.mean(vals)), std=std, n=len(vals))


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r[k]) for k in fields})
    return buf.getvalue()


@dataclass
class ResultBundle:
    config: ExperimentConfig
    raw: list
    train_log: list
    per_seed: dict = field(default_factory=dict)    # policy -> seed -> stats
    aggregate: dict = field(default_factory=dict)   # policy -> stat -> mean/std/n
    label: str = ""

    def provenance(self) -> dict:
        return dict(config_digest=self.config.digest(), seeds=list(self.config.seeds), build=__version__,
                    label=self.label)

    def summary(self) -> dict:
        return dict(provenance=self.provenance(), config=self.config.to_dict(),
                    per_seed={p: {str(s): v for s, v in d.items()} for p, d in self.per_seed.items()},
                    aggregate=self.aggregate)

    def raw_csv(self) -> str:
        return rows_to_csv(self.raw, RAW_FIELDS)

    def write(self, directory=None) -> str:
        directory = directory or self.config.output_dir
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "raw.csv"), "w") as fh:
            fh.write(self.raw_csv())
        if self.train_log:
            with open(os.path.join(directory, "train_log.csv"), "w") as fh:
                fh.write(rows_to_csv(self.train_log, ("policy", "seed") + LOG_FIELDS))
        with open(os.path.join(directory, "summary.json"), "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
        return directory


def aggregate(cfg: ExperimentConfig, raw, train_log, label="") -> ResultBundle:
    per_seed: dict = {}
    for p in cfg.policies:
        per_seed[p] = {}
        for s in cfg.seeds:
            block = [r for r in raw if r["policy"] == p and r["seed"] == s]
            if block:
                per_seed[p][s] = summarize_rows(block)
    agg = {}
    for p, d in per_seed.items():
        keys = next(iter(d.values())).keys() if d else ()
        agg[p] = {k: _mean_std([v[k] for v in d.values()]) for k in keys}
    return ResultBundle(cfg, raw, train_log, per_seed, agg, label)


def run(cfg: ExperimentConfig, write: bool = True, label: str = "", checkpoint_root=None) -> ResultBundle:
    cfg.validate()
    jobs = [(cfg, p, s, checkpoint_root) for s in cfg.seeds for p in cfg.policies]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    raw, logs = [], []
    for rows, log in results:       # job order is fixed, so the reduce is deterministic
        raw += rows
        logs += log
    bundle = aggregate(cfg, raw, logs, label)
    if write:
        bundle.write()
    return bundle


def evaluate(cfg: ExperimentConfig, write: bool = True, checkpoint_root=None) -> ResultBundle:
    """Evaluation without training: fixed policies, plus the proposed actors when checkpoints are given."""
    keep = tuple(p for p in cfg.policies if p not in LEARNED or (p == "proposed" and checkpoint_root))
    if not keep:
        raise ValueError("nothing to evaluate: learned policies need a checkpoint directory")
    return run(replace(cfg, policies=keep), write, label="evaluate", checkpoint_root=checkpoint_root)


SWEEP_AXES = {"robots": "n_robots", "collaborators": "n_collab", "rbs": "n_rbs"}


def sweep(cfg: ExperimentConfig, axis: str, values, write: bool = True) -> list:
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    bundles = []
    for v in values:
        sub = cfg.replace(env={SWEEP_AXES[axis]: int(v)},
                          output_dir=os.path.join(cfg.output_dir, f"{axis}={v}")).validate()
        bundles.append(run(sub, write, label=f"{axis}={v}"))
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        rows = [dict(axis=axis, value=v, policy=p, **{k: b.aggregate[p][k]["mean"] for k in ("mean_loiu", "task_reliability")},
                     loiu_std=b.aggregate[p]["mean_loiu"]["std"])
                for v, b in zip(values, bundles) for p in cfg.policies]
        with open(os.path.join(cfg.output_dir, "sweep.csv"), "w") as fh:
            fh.write(rows_to_csv(rows, ("axis", "value", "policy", "mean_loiu", "loiu_std", "task_reliability")))
    return bundles


def compare_metrics(cfg: ExperimentConfig, metrics, methods, write: bool = True) -> dict:
    """Task reliability per (method, training/trigger metric), mean and std over seeds.

    Metric-agnostic policies (random, all-allocated, TDM) are run once and
    repeated across columns.
    """
    table, companion, bundles = {}, {}, {}
    for metric in metrics:
        MetricKind.parse(metric)
        sub = cfg.replace(env={"reward_metric": metric}, policies=tuple(methods),
                          output_dir=os.path.join(cfg.output_dir, f"metric={metric}"))
        agnostic = [m for m in methods if m in ("random", "all-allocated", "tdm")]
        if metric != metrics[0] and agnostic:
            sub = replace(sub, policies=tuple(m for m in methods if m not in agnostic))
        b = run(sub.validate(), write, label=f"metric={metric}")
        bundles[metric] = b
        for m in methods:
            src = b if m in b.aggregate else bundles[metrics[0]]
            table.setdefault(m, {})[metric] = src.aggregate[m]["task_reliability"]
            companion.setdefault(m, {})[metric] = {k: src.aggregate[m][k] for k in
                                                   ("task_reliability", "transmission_reliability",
                                                    "mean_delay", "mean_abs_error")}
    result = dict(metrics=list(metrics), methods=list(methods), task_reliability=table, detail=companion)
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        with open(os.path.join(cfg.output_dir, "compare_metrics.json"), "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
        with open(os.path.join(cfg.output_dir, "compare_metrics.txt"), "w") as fh:
            fh.write(format_table(result))
    return result


def format_table(result: dict) -> str:
    metrics = result["metrics"]
    lines = ["method".ljust(16) + "".join(m.rjust(18) for m in metrics)]
    for method in result["methods"]:
        cells = []
        for m in metrics:
            c = result["task_reliability"][method][m]
            cells.append(f"{c['mean']:.3f} +/- {c['std']:.3f}".rjust(18))
        lines.append(method.ljust(16) + "".join(cells))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# plot scripts

_PLOT_SCRIPT = '''"""Regenerates figures from the CSV files next to this script (matplotlib)."""
import csv
import os
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    path = os.path.join(HERE, name)
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        return list(csv.DictReader(fh))


rows = read("reward_curve.csv")
if rows:
    fig, ax = plt.subplots()
    series = defaultdict(list)
    for r in rows:
        series[(r["policy"], r["seed"])].append((int(r["episode"]), float(r["episode_reward"])))
    for (policy, seed), pts in sorted(series.items()):
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"{policy} seed {seed}", lw=0.8)
    ax.set_xlabel("episode")
    ax.set_ylabel("episode reward")
    ax.legend(fontsize=6)
    fig.savefig(os.path.join(HERE, "reward_curve.png"), dpi=150)

rows = read("loiu_vs_axis.csv")
if rows:
    fig, ax = plt.subplots()
    series = defaultdict(list)
    for r in rows:
        series[r["policy"]].append((float(r["value"]), float(r["mean_loiu"]), float(r["loiu_std"] or 0)))
    for policy, pts in sorted(series.items()):
        pts.sort()
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts], yerr=[p[2] for p in pts], label=policy, capsize=2)
    ax.set_xlabel(rows[0]["axis"])
    ax.set_ylabel("average LoIU")
    ax.set_yscale("log")
    ax.legend()
    fig.savefig(os.path.join(HERE, "loiu_vs_axis.png"), dpi=150)
'''


def emit_plots(bundles, directory) -> list:
    """Writes data CSVs plus ``plot.py``.  Never re-runs the simulator; rewriting is idempotent."""
    bundles = [bundles] if isinstance(bundles, ResultBundle) else list(bundles)
    if not bundles or not any(b.raw for b in bundles):
        raise ValueError("nothing to plot: empty result bundle")
    os.makedirs(directory, exist_ok=True)
    written = []
    logs = [r for b in bundles for r in b.train_log]
    if logs:
        path = os.path.join(directory, "reward_curve.csv")
        with open(path, "w") as fh:
            fh.write(rows_to_csv(logs, ("policy", "seed") + LOG_FIELDS))
        written.append(path)
    if len(bundles) > 1 and all(b.label and "=" in b.label for b in bundles):
        rows = []
        for b in bundles:
            axis, value = b.label.split("=", 1)
            for p, stats in b.aggregate.items():
                rows.append(dict(axis=axis, value=value, policy=p, mean_loiu=stats["mean_loiu"]["mean"],
                                 loiu_std=stats["mean_loiu"]["std"]))
        path = os.path.join(directory, "loiu_vs_axis.csv")
        with open(path, "w") as fh:
            fh.write(rows_to_csv(rows, ("axis", "value", "policy", "mean_loiu", "loiu_std")))
        written.append(path)
    path = os.path.join(directory, "plot.py")
    with open(path, "w") as fh:
        fh.write(_PLOT_SCRIPT)
    written.append(path)
    return written


def load_bundle(directory) -> ResultBundle:
    """Rebuild a bundle from files written by :meth:`ResultBundle.write`."""
    from .config import from_dict
    with open(os.path.join(directory, "summary.json")) as fh:
        summary = json.load(fh)
    cfg_dict = summary["config"]
    cfg_dict.pop("schema_version", None)
    cfg = from_dict(cfg_dict)

    def read(name, ints=("seed", "episode", "slots", "task_ok", "task_total", "tx_ok", "tx_total",
                         "delay_count", "abs_error_count")):
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            return []
        with open(path) as fh:
            out = []
            for r in csv.DictReader(fh):
                out.append({k: (int(v) if k in ints else v if k == "policy" else float(v)) for k, v in r.items()})
            return out

    b = aggregate(cfg, read("raw.csv"), read("train_log.csv"), summary["provenance"].get("label", ""))
    return b
