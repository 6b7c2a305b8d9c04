import json
import os

import numpy as np
import pytest

from loiu import cli, config, harness
from loiu.config import ConfigError, ExperimentConfig

FAST = dict(train=dict(batch_size=8, episodes=2, slots_per_episode=10), seeds=(0, 1), eval_episodes=2,
            eval_slots=10)


def _cfg(tmp_path, **kw):
    base = config.from_dict(FAST)
    return base.replace(output_dir=str(tmp_path), **kw)


def test_presets_validate():
    for name in config.PRESETS:
        config.preset(name).validate()
    p = config.preset("paper-table-3")
    assert p.train.batch_size == 1000 and p.train.buffer_capacity == 1_000_000
    assert p.env.sigma_range == (0.001, 10.0) and p.env.deadline_range == (0.002, 0.1)


def test_field_level_diagnostics():
    with pytest.raises(ConfigError) as e:
        config.from_dict(dict(env=dict(n_robots=1, bogus=3), policies=["nope"], seeds=[]))
    text = str(e.value)
    assert "env.bogus: unknown field" in text
    with pytest.raises(ConfigError) as e:
        config.from_dict(dict(env=dict(n_robots=1), policies=["nope"], seeds=[]))
    text = str(e.value)
    assert "env.n_robots" in text and "policies: unknown policy 'nope'" in text and "seeds" in text


def test_yaml_roundtrip(tmp_path):
    cfg = _cfg(tmp_path, policies=("random", "tdm"))
    config.dump(cfg, tmp_path / "c.yaml")
    again = config.load(tmp_path / "c.yaml")
    assert again.digest() == cfg.digest()


def test_yaml_preset_then_overrides(tmp_path):
    (tmp_path / "c.yaml").write_text("preset: table-4\nenv:\n  n_rbs: 6\nseeds: [3, 4]\n")
    cfg = config.load(tmp_path / "c.yaml")
    assert cfg.env.n_robots == 15 and cfg.env.n_rbs == 6 and cfg.env.z_range == (1.0, 5.0)
    assert cfg.seeds == (3, 4)


def test_bad_yaml_reported(tmp_path):
    (tmp_path / "c.yaml").write_text("env: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        config.load(tmp_path / "c.yaml")


def test_run_is_byte_identical(tmp_path):
    a = harness.run(_cfg(tmp_path / "a", policies=("proposed", "random", "threshold", "tdm")))
    b = harness.run(_cfg(tmp_path / "b", policies=("proposed", "random", "threshold", "tdm")))
    assert (tmp_path / "a" / "raw.csv").read_bytes() == (tmp_path / "b" / "raw.csv").read_bytes()
    assert (tmp_path / "a" / "train_log.csv").read_bytes() == (tmp_path / "b" / "train_log.csv").read_bytes()
    sa = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert "mean_loiu" in sa["aggregate"]["proposed"]
    assert a.aggregate == b.aggregate


def test_aggregate_is_hand_average(tmp_path):
    b = harness.run(_cfg(tmp_path, policies=("random", "all-allocated")))
    for p in ("random", "all-allocated"):
        per_seed = [b.per_seed[p][s]["mean_loiu"] for s in (0, 1)]
        assert b.aggregate[p]["mean_loiu"]["mean"] == pytest.approx(np.mean(per_seed))
        assert b.aggregate[p]["mean_loiu"]["std"] == pytest.approx(np.std(per_seed, ddof=1))
        # pooled task reliability is recomputable from raw counts
        rows = [r for r in b.raw if r["policy"] == p and r["seed"] == 0]
        assert b.per_seed[p][0]["task_reliability"] == sum(r["task_ok"] for r in rows) / sum(
            r["task_total"] for r in rows)


def test_paired_seeds_share_deployment(tmp_path, monkeypatch):
    seen = {}
    orig = harness.RobotTeamEnv.reset

    def spy(self, seed=None, scenario_seed=None):
        out = orig(self, seed, scenario_seed)
        seen.setdefault(self._tag, []).append(self.topology.positions.copy())
        return out

    monkeypatch.setattr(harness.RobotTeamEnv, "reset", spy)
    for name in ("random", "tdm"):
        monkeypatch.setattr(harness.RobotTeamEnv, "_tag", name, raising=False)
        adapter = harness.make_policy(name, _cfg(tmp_path), 0)
        harness.evaluate_policy(adapter, name, _cfg(tmp_path), 0)
    assert all(np.array_equal(a, b) for a, b in zip(seen["random"], seen["tdm"]))


def test_parallel_matches_serial(tmp_path):
    a = harness.run(_cfg(tmp_path / "s", policies=("random", "tdm")))
    b = harness.run(_cfg(tmp_path / "p", policies=("random", "tdm"), workers=2))
    assert a.raw_csv() == b.raw_csv()


def test_sweep_and_plots(tmp_path):
    bundles = harness.sweep(_cfg(tmp_path, policies=("random", "all-allocated")), "rbs", [2, 3])
    assert [b.config.env.n_rbs for b in bundles] == [2, 3]
    assert (tmp_path / "sweep.csv").exists()
    files = harness.emit_plots(bundles, tmp_path / "plots")
    names = sorted(os.path.basename(f) for f in files)
    assert names == ["loiu_vs_axis.csv", "plot.py"]
    first = (tmp_path / "plots" / "loiu_vs_axis.csv").read_bytes()
    harness.emit_plots(bundles, tmp_path / "plots")
    assert (tmp_path / "plots" / "loiu_vs_axis.csv").read_bytes() == first


def test_sweep_rejects_unknown_axis(tmp_path):
    with pytest.raises(ValueError):
        harness.sweep(_cfg(tmp_path), "power", [1])


def test_emit_plots_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        harness.emit_plots([], tmp_path)


def test_compare_metrics_shape(tmp_path):
    res = harness.compare_metrics(_cfg(tmp_path, seeds=(0,)), ["LoIU", "AoI"], ["proposed", "random"])
    assert list(res["task_reliability"]) == ["proposed", "random"]
    assert all(list(v) == ["LoIU", "AoI"] for v in res["task_reliability"].values())
    assert set(res["detail"]["proposed"]["AoI"]) == {"task_reliability", "transmission_reliability",
                                                     "mean_delay", "mean_abs_error"}
    assert "proposed" in (tmp_path / "compare_metrics.txt").read_text()


def test_load_bundle_roundtrip(tmp_path):
    b = harness.run(_cfg(tmp_path, policies=("proposed", "random")))
    again = harness.load_bundle(tmp_path)
    assert again.raw_csv() == b.raw_csv()
    assert again.aggregate == b.aggregate


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["train", "--preset", "smoke", "--seeds", "0,0"]) == 2
    assert "seeds: duplicates" in capsys.readouterr().err
    assert cli.main(["overhead", "--robots", "10", "--batch", "100", "--beta-o", "1", "--beta-a", "2",
                     "--beta-r", "1", "--beta-p", "2", "--output", str(tmp_path / "o.json")]) == 0
    assert json.loads((tmp_path / "o.json").read_text())["semi_upload"] == 4000
    assert cli.main(["evaluate", "--preset", "smoke", "--policies", "proposed"]) == 2


def test_cli_train_then_evaluate(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--preset", "smoke", "--seeds", "0", "--policies", "proposed,random",
                     "--output", str(out)]) == 0
    assert (out / "checkpoints" / "seed=0" / "actor_0.npz").exists()
    assert cli.main(["evaluate", "--preset", "smoke", "--seeds", "0", "--policies", "proposed",
                     "--checkpoints", str(out / "checkpoints"), "--output", str(tmp_path / "ev")]) == 0
    trained = harness.load_bundle(out)
    evaluated = harness.load_bundle(tmp_path / "ev")
    assert trained.per_seed["proposed"][0] == evaluated.per_seed["proposed"][0]
    assert cli.main(["emit-plots", str(out), "--output", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "reward_curve.csv").exists()
