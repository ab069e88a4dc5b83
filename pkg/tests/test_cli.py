import csv
import json

import pytest

from reflexsched.cli import main
from reflexsched.schedule import ScheduleKind, ScheduleSpec, evaluate
from reflexsched.traceio import read_trace
from reflexsched.vocab import Vocab, save_vocab

from conftest import TINY_SURFACES
from planted import ANSWER_KEY, PLANTED_AMPLITUDE, PLANTED_PERIOD, write_planted_fixtures


def write_demo_setup(tmp_path, **config_extra):
    """Vocab + scripted rules emitting 'wait a </think> b <eos>' greedily."""
    save_vocab(Vocab(TINY_SURFACES), tmp_path / "vocab.tsv")
    floor = -30.0

    def peaks(d):
        logits = [floor] * len(TINY_SURFACES)
        for k, v in d.items():
            logits[k] = v
        return logits

    rules = {
        "rules": [
            {"suffix": [2], "logits": peaks({6: 10.0})},           # wait -> a
            {"suffix": [2, 6], "logits": peaks({1: 10.0})},        # .. -> </think>
            {"suffix": [6, 1], "logits": peaks({7: 10.0})},        # .. -> b
            {"suffix": [1, 7], "logits": peaks({0: 10.0})},        # .. -> <eos>
            {"suffix": [7], "logits": peaks({0: 10.0})},
        ],
        "default_logits": peaks({2: 10.0}),
    }
    (tmp_path / "rules.json").write_text(json.dumps(rules))
    config = {
        "v": 1,
        "scorer_kind": "scripted",
        "scorer_path": "rules.json",
        "vocab_path": "vocab.tsv",
        "sampler": "greedy",
        "max_new_tokens": 12,
        "stop_ids": [0],
        "think_end_id": 1,
        "reflection_words": ["wait", "but"],
        "seed": 5,
    }
    config.update(config_extra)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path


class TestRun:
    def test_deterministic_bytes(self, tmp_path):
        cfg = write_demo_setup(tmp_path)
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        trace = read_trace(out1)
        assert trace.token_ids() == [2, 6, 1, 7, 0]

    def test_missing_vocab_exits_2(self, tmp_path):
        cfg = write_demo_setup(tmp_path, vocab_path="missing.tsv")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o.jsonl")]) == 2

    def test_invalid_config_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"v": 1, "bogus_key": True}))
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o.jsonl")]) == 2

    def test_none_vs_zero_amplitude_identical_files(self, tmp_path):
        cfg_none = write_demo_setup(tmp_path, schedule_kind="none")
        out_none = tmp_path / "none.jsonl"
        main(["run", "--config", str(cfg_none), "--out", str(out_none)])

        cfg_zero = write_demo_setup(
            tmp_path, schedule_kind="cyclic", amplitude=0.0, period=600.0
        )
        out_zero = tmp_path / "zero.jsonl"
        main(["run", "--config", str(cfg_zero), "--out", str(out_zero)])
        assert out_none.read_bytes() == out_zero.read_bytes()

    def test_seed_override_changes_sampled_run(self, tmp_path):
        cfg = write_demo_setup(
            tmp_path, sampler="sample", temperature=30.0, top_p=1.0,
            max_new_tokens=30, stop_ids=[],
        )
        out1, out2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
        main(["run", "--config", str(cfg), "--out", str(out1), "--seed", "1"])
        main(["run", "--config", str(cfg), "--out", str(out2), "--seed", "2"])
        assert out1.read_bytes() != out2.read_bytes()

    def test_figdir_renders_waveform(self, tmp_path):
        cfg = write_demo_setup(tmp_path, schedule_kind="cyclic", amplitude=3.0, period=8.0)
        figdir = tmp_path / "figs"
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "t.jsonl"), "--figdir", str(figdir)])
        assert (figdir / "schedule_waveform.png").exists()


class TestSweep:
    def test_planted_period_is_selected(self, tmp_path, capsys):
        paths = write_planted_fixtures(tmp_path)
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", str(paths["sweep"]), "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        best = [r for r in rows if r["best"] == "True"]
        assert len(best) == 1
        assert float(best[0]["amplitude"]) == PLANTED_AMPLITUDE
        assert float(best[0]["period"]) == PLANTED_PERIOD
        assert float(best[0]["accuracy"]) == 1.0
        others = [r for r in rows if r["best"] != "True"]
        assert all(float(r["accuracy"]) == 0.0 for r in others)

    def test_sweep_deterministic(self, tmp_path):
        paths = write_planted_fixtures(tmp_path)
        out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
        main(["sweep", "--config", str(paths["sweep"]), "--out", str(out1)])
        main(["sweep", "--config", str(paths["sweep"]), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_sweep_heatmap_rendered(self, tmp_path):
        paths = write_planted_fixtures(tmp_path)
        figdir = tmp_path / "figs"
        main(["sweep", "--config", str(paths["sweep"]), "--out", str(tmp_path / "s.csv"), "--figdir", str(figdir)])
        assert (figdir / "sweep_accuracy.png").exists()


class TestScale:
    def test_bon_n1_matches_run(self, tmp_path):
        cfg = write_demo_setup(tmp_path)
        run_out = tmp_path / "run.jsonl"
        scale_out = tmp_path / "scale.jsonl"
        main(["run", "--config", str(cfg), "--out", str(run_out)])
        code = main(
            [
                "scale", "--config", str(cfg), "--mode", "bon", "-n", "1",
                "--reward", "logprob", "--out", str(scale_out),
            ]
        )
        assert code == 0
        assert scale_out.read_bytes() == run_out.read_bytes()

    def test_bon_report_lists_all_rewards(self, tmp_path, capsys):
        cfg = write_demo_setup(tmp_path, sampler="sample", temperature=2.0)
        report_path = tmp_path / "report.json"
        main(
            [
                "scale", "--config", str(cfg), "--mode", "bon", "-n", "4",
                "--reward", "logprob", "--out", str(tmp_path / "w.jsonl"),
                "--report", str(report_path),
            ]
        )
        report = json.loads(report_path.read_text())
        assert len(report["rewards"]) == 4
        assert report["best_reward"] == max(report["rewards"])
        assert report["rewards"][report["best_index"]] == report["best_reward"]

    def test_reward_kind_from_config(self, tmp_path):
        cfg = write_demo_setup(tmp_path, reward_kind="oracle", reward_answer="zz")
        report_path = tmp_path / "report.json"
        code = main(
            [
                "scale", "--config", str(cfg), "--mode", "bon", "-n", "2",
                "--out", str(tmp_path / "w.jsonl"), "--report", str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["rewards"] == [0.0, 0.0]  # no boxed answer in the demo trace

    def test_beam_mode_runs(self, tmp_path):
        cfg = write_demo_setup(tmp_path, sampler="sample", temperature=2.0)
        code = main(
            [
                "scale", "--config", str(cfg), "--mode", "beam",
                "--beam-width", "2", "--chunk-len", "2",
                "--reward", "logprob", "--out", str(tmp_path / "beam.jsonl"),
            ]
        )
        assert code == 0
        trace = read_trace(tmp_path / "beam.jsonl")
        assert trace.length_tokens >= 1


class TestAnalyze:
    def _trace_file(self, tmp_path, name="t.jsonl", **extra):
        cfg = write_demo_setup(tmp_path, **extra)
        out = tmp_path / name
        main(["run", "--config", str(cfg), "--out", str(out)])
        return cfg, out

    def test_stats_match_trace_summary(self, tmp_path, capsys):
        _, out = self._trace_file(tmp_path)
        csv_out = tmp_path / "stats.csv"
        assert main(["analyze", "--which", "stats", str(out), "--out", str(csv_out)]) == 0
        with open(csv_out) as fh:
            rows = list(csv.DictReader(fh))
        trace = read_trace(out)
        assert int(rows[0]["reflection_count"]) == trace.reflection_count
        assert int(rows[0]["length_tokens"]) == trace.length_tokens

    def test_segments_output(self, tmp_path):
        _, out = self._trace_file(tmp_path)
        csv_out = tmp_path / "seg.csv"
        assert main(
            ["analyze", "--which", "segments", str(out), "--out", str(csv_out), "--bin-width", "2"]
        ) == 0
        with open(csv_out) as fh:
            rows = list(csv.DictReader(fh))
        assert sum(float(r["proportion"]) for r in rows) == pytest.approx(1.0)

    def test_cluster_over_multiple_traces(self, tmp_path):
        files = []
        for i, stop in enumerate(([0], [])):
            cfg = write_demo_setup(tmp_path, stop_ids=stop, max_new_tokens=6 + 3 * i)
            out = tmp_path / f"c{i}.jsonl"
            main(["run", "--config", str(cfg), "--out", str(out)])
            files.append(str(out))
        csv_out = tmp_path / "cluster.csv"
        code = main(
            ["analyze", "--which", "cluster", *files, "--out", str(csv_out), "--k", "2"]
        )
        assert code == 0
        with open(csv_out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2

    def test_malformed_trace_exits_4(self, tmp_path, capsys):
        _, out = self._trace_file(tmp_path)
        lines = out.read_text().splitlines()
        lines[1] = "{oops"
        out.write_text("\n".join(lines) + "\n")
        assert main(["analyze", "--which", "stats", str(out)]) == 4
        assert "line 2" in capsys.readouterr().err

    def test_distance_uses_post_think_answer(self, tmp_path):
        cfg, out = self._trace_file(tmp_path)
        csv_out = tmp_path / "dist.csv"
        code = main(
            [
                "analyze", "--which", "distance", str(out),
                "--config", str(cfg), "--out", str(csv_out),
            ]
        )
        assert code == 0
        with open(csv_out) as fh:
            rows = list(csv.DictReader(fh))
        assert rows, "expected at least one thought step"
        for row in rows:
            assert float(row["distance"]) >= 1.0

    def test_segment_figure_rendered(self, tmp_path):
        _, out = self._trace_file(tmp_path)
        figdir = tmp_path / "figs"
        main(["analyze", "--which", "segments", str(out), "--bin-width", "2", "--figdir", str(figdir)])
        assert (figdir / "segments_t.png").exists()


class TestScheduleCommand:
    def test_range_output_matches_library(self, tmp_path):
        out = tmp_path / "deltas.jsonl"
        code = main(
            [
                "schedule", "--kind", "cyclic", "--amplitude", "5", "--period", "600",
                "--steps", "10", "--out", str(out),
            ]
        )
        assert code == 0
        spec = ScheduleSpec(kind=ScheduleKind.CYCLIC, amplitude=5.0, period=600.0)
        for line in out.read_text().splitlines():
            record = json.loads(line)
            assert record["delta"] == evaluate(spec, record["t"]).delta

    def test_cases_mode_bit_exact_round_trip(self, tmp_path):
        cases = tmp_path / "cases.jsonl"
        docs = [
            {"schedule_kind": "cyclic", "amplitude": 4.5, "period": 123.75, "phase_shift": 7.0, "t": 13},
            {"schedule_kind": "tip", "alpha": -2.25, "window": 40, "t": 39},
            {"schedule_kind": "linear_decay", "alpha": 3.0, "decay_horizon": 100, "t": 77},
            {"schedule_kind": "random_noise", "noise_sigma": 1.5, "noise_seed": 99, "t": 1234},
            {"schedule_kind": "none", "t": 5},
        ]
        cases.write_text("\n".join(json.dumps(d) for d in docs) + "\n")
        out = tmp_path / "out.jsonl"
        assert main(["schedule", "--cases", str(cases), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == len(docs)
        from reflexsched.cli import _spec_from_mapping

        for doc, line in zip(docs, lines):
            spec = _spec_from_mapping({k: v for k, v in doc.items() if k != "t"})
            expected = evaluate(spec, doc["t"]).delta
            got = json.loads(line)["delta"]
            assert got == expected  # exact, including the JSON round trip

    def test_plot_written(self, tmp_path):
        png = tmp_path / "wave.png"
        main(["schedule", "--kind", "cyclic", "--amplitude", "2", "--period", "40", "--steps", "80",
              "--out", str(tmp_path / "d.jsonl"), "--plot", str(png)])
        assert png.exists()

    def test_bad_cases_exit_2(self, tmp_path):
        cases = tmp_path / "cases.jsonl"
        cases.write_text('{"schedule_kind": "cyclic", "bogus": 1, "t": 0}\n')
        assert main(["schedule", "--cases", str(cases)]) == 2
