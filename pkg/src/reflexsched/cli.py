"""Operator surface: run decodes, parameter sweeps, scaling runs, analytics.

Subcommands: run, sweep, scale, analyze, schedule, serve. Every command is
deterministic given its input files; seeds come from configs or flags,
never the clock. Exit codes: 0 success, 2 invalid config, 3 scorer failure
(partial trace flushed), 4 malformed trace file.

Set REFLEXSCHED_LOG to error|info|debug to control logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from . import analytics, scaling, traceio
from .config import RunConfig, load_run_config, load_sweep_spec
from .engine import decode
from .errors import ConfigError, DecodeError, ReflexschedError, ScorerError
from .scaling import LogprobReward, OracleReward, RemoteReward
from .schedule import ScheduleKind, ScheduleSpec, evaluate
from .scorers import RemoteScorer, ScorerServer
from .traceio import TraceFormatError

logger = logging.getLogger("reflexsched")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCORER = 3
EXIT_TRACE = 4


def _setup_logging() -> None:
    level_name = os.environ.get("REFLEXSCHED_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level_name, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.decode = cfg.decode.with_seed(args.seed)
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg


def _out_path(cfg: RunConfig, args) -> str:
    path = getattr(args, "out", None) or cfg.output_path
    if not path:
        raise ConfigError("no output path: pass --out or set output_path in the config")
    return path if os.path.isabs(path) else os.path.abspath(path)


def cmd_run(args) -> int:
    try:
        cfg = _apply_overrides(load_run_config(args.config), args)
        out = _out_path(cfg, args)
        vocab = cfg.load_vocab()
        scorer = cfg.build_scorer(vocab)
    except (ConfigError, ScorerError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    prompt_ids = args.prompt_ids or cfg.prompt_ids
    try:
        trace = decode(scorer, prompt_ids, cfg.decode)
    except DecodeError as exc:
        traceio.write_partial_trace(exc.partial_steps, exc.prompt_ids, out)
        print(f"error: decode aborted: {exc} (partial trace at {out})", file=sys.stderr)
        return EXIT_SCORER
    traceio.write_trace(trace, out)
    if args.figdir:
        from . import figures

        os.makedirs(args.figdir, exist_ok=True)
        figures.plot_waveform(
            cfg.decode.schedule,
            max(trace.length_tokens, 1),
            os.path.join(args.figdir, "schedule_waveform.png"),
        )
    print(
        f"wrote {trace.length_tokens} steps to {out} "
        f"(finish={trace.finish_reason}, reflections={trace.reflection_count})"
    )
    return EXIT_OK


def _sweep_point_config(base: RunConfig, kind: str, point: dict):
    if kind == "cyclic":
        spec = ScheduleSpec(
            kind=ScheduleKind.CYCLIC,
            amplitude=point["amplitude"],
            period=point["period"],
            phase_shift=point.get("phase_shift", 0.0),
        )
    else:
        spec = ScheduleSpec(
            kind=ScheduleKind.TIP, alpha=point["alpha"], window=point["window"]
        )
    return replace(base.decode, schedule=spec)


def cmd_sweep(args) -> int:
    try:
        sweep = load_sweep_spec(args.config)
        if args.workers is not None:
            sweep.workers = args.workers
        vocab = sweep.base.load_vocab()
        scorer = sweep.base.build_scorer(vocab)
    except (ConfigError, ScorerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def run_item(point_index: int, item: dict):
        decode_cfg = _sweep_point_config(sweep.base, sweep.sweep_kind, sweep.grid[point_index])
        trace = decode(scorer, [int(i) for i in item["prompt_ids"]], decode_cfg)
        reward = OracleReward(str(item["answer"])).score(item["prompt_ids"], trace)
        return trace, reward

    jobs = [
        (pi, item) for pi in range(len(sweep.grid)) for item in sweep.dataset
    ]
    with ThreadPoolExecutor(max_workers=max(1, sweep.workers)) as pool:
        results = list(pool.map(lambda job: run_item(*job), jobs))

    rows = []
    per_point = len(sweep.dataset)
    for pi, point in enumerate(sweep.grid):
        chunk = results[pi * per_point : (pi + 1) * per_point]
        row = dict(point)
        row["accuracy"] = sum(r for _, r in chunk) / per_point
        row["mean_length"] = sum(t.length_tokens for t, _ in chunk) / per_point
        row["mean_reflections"] = sum(t.reflection_count for t, _ in chunk) / per_point
        rows.append(row)
    best_index = max(range(len(rows)), key=lambda i: (rows[i]["accuracy"], -i))
    for i, row in enumerate(rows):
        row["best"] = i == best_index

    columns = list(rows[0].keys())
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            writer.writerows(rows)
    _print_table(rows, columns)
    if args.figdir:
        from . import figures

        os.makedirs(args.figdir, exist_ok=True)
        figures.plot_sweep_heatmap(rows, os.path.join(args.figdir, "sweep_accuracy.png"))
    return EXIT_OK


def _print_table(rows: list[dict], columns: list[str]) -> None:
    def fmt(value):
        if isinstance(value, bool):
            return "*" if value else ""
        if isinstance(value, float):
            return f"{value:.4g}"
        return str(value)

    widths = {
        c: max(len(c), *(len(fmt(row[c])) for row in rows)) for c in columns
    }
    header = " | ".join(c.ljust(widths[c]) for c in columns)
    print(header)
    print("-+-".join("-" * widths[c] for c in columns))
    for row in rows:
        print(" | ".join(fmt(row[c]).ljust(widths[c]) for c in columns))


def _build_reward(args, cfg: RunConfig, scorer):
    kind = args.reward or cfg.reward_kind
    if kind == "logprob":
        return LogprobReward(scorer)
    if kind == "oracle":
        answer = args.answer if args.answer is not None else cfg.reward_answer
        if answer is None:
            raise ConfigError("oracle reward requires --answer or reward_answer in config")
        return OracleReward(answer)
    if kind == "remote":
        endpoint = args.reward_endpoint or cfg.reward_endpoint
        if not endpoint:
            raise ConfigError("remote reward requires --reward-endpoint or reward_endpoint")
        return RemoteReward(RemoteScorer(endpoint, scorer.vocab))
    raise ConfigError(f"unknown reward kind {kind!r}")


def cmd_scale(args) -> int:
    try:
        cfg = _apply_overrides(load_run_config(args.config), args)
        out = _out_path(cfg, args)
        vocab = cfg.load_vocab()
        scorer = cfg.build_scorer(vocab)
        reward = _build_reward(args, cfg, scorer)
    except (ConfigError, ScorerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    base_seed = args.seed if args.seed is not None else cfg.decode.seed
    prompt_ids = args.prompt_ids or cfg.prompt_ids
    try:
        if args.mode == "bon":
            candidates = scaling.generate_candidates(
                scorer, reward, prompt_ids, cfg.decode, args.n, base_seed, cfg.workers
            )
            best = candidates[0]
            for cand in candidates[1:]:
                if cand.reward > best.reward:
                    best = cand
            rewards = [c.reward for c in candidates]
            best_index = candidates.index(best)
        else:
            best = scaling.beam_search(
                scorer,
                reward,
                prompt_ids,
                cfg.decode,
                beam_width=args.beam_width,
                chunk_len=args.chunk_len,
                base_seed=base_seed,
                expansions_per_beam=args.expansions,
            )
            rewards = [best.reward]
            best_index = 0
    except (DecodeError, ReflexschedError) as exc:
        print(f"error: scaling failed: {exc}", file=sys.stderr)
        return EXIT_SCORER

    traceio.write_trace(best.trace, out)
    report = {
        "mode": args.mode,
        "rewards": rewards,
        "best_index": best_index,
        "best_reward": best.reward,
        "extracted_answer": best.extracted_answer,
        "length_tokens": best.trace.length_tokens,
        "reflection_count": best.trace.reflection_count,
    }
    print(json.dumps(report, indent=2))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    if args.figdir:
        from . import figures

        os.makedirs(args.figdir, exist_ok=True)
        figures.plot_candidate_rewards(
            rewards, best_index, os.path.join(args.figdir, "candidate_rewards.png")
        )
    return EXIT_OK


def _read_traces(paths):
    traces = []
    for path in paths:
        traces.append((path, traceio.read_trace(path)))
    return traces


def cmd_analyze(args) -> int:
    try:
        traces = _read_traces(args.traces)
    except TraceFormatError as exc:
        print(f"error: {args.traces}: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rows: list[dict] = []
    figdir = args.figdir
    if figdir:
        os.makedirs(figdir, exist_ok=True)

    if args.which == "segments":
        for path, trace in traces:
            hist = analytics.segment_distribution(trace, args.bin_width)
            for b, prop in enumerate(hist.proportions):
                rows.append({"trace": path, "bin": b, "proportion": prop})
            if figdir and hist.proportions:
                from . import figures

                name = os.path.splitext(os.path.basename(path))[0]
                figures.plot_segment_histogram(
                    hist.proportions,
                    hist.bin_width,
                    os.path.join(figdir, f"segments_{name}.png"),
                )
        columns = ["trace", "bin", "proportion"]
    elif args.which == "stats":
        for path, trace in traces:
            stats = analytics.reflection_stats(trace)
            rows.append(
                {
                    "trace": path,
                    "reflection_count": stats["count"],
                    "length_tokens": stats["length"],
                    "positions": ";".join(str(p) for p in stats["positions"]),
                }
            )
        columns = ["trace", "reflection_count", "length_tokens", "positions"]
    elif args.which == "cluster":
        points = [
            (float(trace.reflection_count), float(trace.length_tokens))
            for _, trace in traces
        ]
        try:
            result = analytics.difficulty_cluster(points, k=args.k, seed=args.cluster_seed)
        except ReflexschedError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for (path, _), assignment in zip(traces, result.assignments):
            rows.append(
                {
                    "trace": path,
                    "cluster": result.names[assignment],
                    "centroid_reflections": result.centroids[assignment][0],
                    "centroid_length": result.centroids[assignment][1],
                }
            )
        columns = ["trace", "cluster", "centroid_reflections", "centroid_length"]
        if figdir:
            from . import figures

            figures.plot_clusters(
                points,
                result.assignments,
                result.centroids,
                result.names,
                os.path.join(figdir, "difficulty_clusters.png"),
            )
    elif args.which == "distance":
        if not args.config:
            print("error: distance analysis requires --config (scorer)", file=sys.stderr)
            return EXIT_CONFIG
        try:
            cfg = load_run_config(args.config)
            vocab = cfg.load_vocab()
            scorer = cfg.build_scorer(vocab)
        except (ConfigError, ScorerError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for path, trace in traces:
            try:
                answer_ids, spans = _distance_inputs(trace, cfg, args)
            except ConfigError as exc:
                print(f"error: {path}: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            distances = []
            for i, span in enumerate(spans):
                context = list(trace.prompt_ids) + [
                    s.token_id for s in trace.steps[: span.end]
                ]
                logp = analytics.answer_log_probability(scorer, context, answer_ids)
                dist = analytics.thought_distance_from_logp(logp, len(answer_ids))
                distances.append(dist)
                rows.append(
                    {
                        "trace": path,
                        "step": i,
                        "start": span.start,
                        "end": span.end,
                        "log_p_answer": logp,
                        "distance": dist,
                    }
                )
            if figdir and distances:
                from . import figures

                name = os.path.splitext(os.path.basename(path))[0]
                figures.plot_distance_series(
                    distances, os.path.join(figdir, f"distance_{name}.png")
                )
        columns = ["trace", "step", "start", "end", "log_p_answer", "distance"]
    else:
        print(f"error: unknown analysis {args.which!r}", file=sys.stderr)
        return EXIT_CONFIG

    if rows:
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=columns)
                writer.writeheader()
                writer.writerows(rows)
        _print_table(rows, columns)
    else:
        print("(no rows)")
    return EXIT_OK


def _distance_inputs(trace, cfg: RunConfig, args):
    """Answer token ids and thought-step spans for distance analysis."""
    if args.answer_ids:
        answer_ids = [int(tok) for tok in args.answer_ids.split(",")]
        spans = analytics.thought_steps(trace)
        return answer_ids, spans
    think_end = cfg.decode.think_end_id
    if think_end is None:
        raise ConfigError("distance analysis needs --answer-ids or think_end_id in config")
    positions = [i for i, s in enumerate(trace.steps) if s.token_id == think_end]
    if not positions:
        raise ConfigError("trace has no think-end token; pass --answer-ids")
    cut = positions[0] + 1
    answer_ids = [
        s.token_id
        for s in trace.steps[cut:]
        if s.token_id not in cfg.decode.stop_ids
    ]
    if not answer_ids:
        raise ConfigError("no answer tokens after think-end marker")
    think_trace_steps = trace.steps[:cut]
    think_trace = type(trace)(
        prompt_ids=trace.prompt_ids, steps=think_trace_steps, finish_reason=trace.finish_reason
    )
    spans = analytics.thought_steps(think_trace)
    return answer_ids, spans


_SCHEDULE_FIELD_KEYS = (
    "schedule_kind",
    "amplitude",
    "period",
    "phase_shift",
    "alpha",
    "window",
    "decay_horizon",
    "noise_sigma",
    "noise_seed",
)


def _spec_from_mapping(doc: dict) -> ScheduleSpec:
    kinds = {k.value: k for k in ScheduleKind}
    kind_text = doc.get("schedule_kind", "none")
    if kind_text not in kinds:
        raise ConfigError(f"unknown schedule_kind {kind_text!r}")
    return ScheduleSpec(
        kind=kinds[kind_text],
        amplitude=float(doc.get("amplitude", 0.0)),
        period=float(doc.get("period", 1.0)),
        phase_shift=float(doc.get("phase_shift", 0.0)),
        alpha=float(doc.get("alpha", 0.0)),
        window=int(doc.get("window", 0)),
        decay_horizon=int(doc.get("decay_horizon", 1)),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        noise_seed=int(doc.get("noise_seed", 0)),
    )


def cmd_schedule(args) -> int:
    """Evaluate schedule deltas: a quick report or a batch parity surface."""
    out_lines = []
    try:
        if args.cases:
            with open(args.cases, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    doc = json.loads(line)
                    unknown = set(doc) - set(_SCHEDULE_FIELD_KEYS) - {"t"}
                    if unknown:
                        raise ConfigError(f"cases line {lineno}: unknown keys {sorted(unknown)}")
                    spec = _spec_from_mapping(doc)
                    delta = evaluate(spec, int(doc.get("t", 0))).delta
                    out_lines.append(json.dumps({"delta": delta}, separators=(",", ":")))
        else:
            spec = _spec_from_mapping(
                {
                    "schedule_kind": args.kind,
                    "amplitude": args.amplitude,
                    "period": args.period,
                    "phase_shift": args.phase_shift,
                    "alpha": args.alpha,
                    "window": args.window,
                    "decay_horizon": args.decay_horizon,
                    "noise_sigma": args.noise_sigma,
                    "noise_seed": args.noise_seed,
                }
            )
            for t in range(args.steps):
                delta = evaluate(spec, t).delta
                out_lines.append(
                    json.dumps({"t": t, "delta": delta}, separators=(",", ":"))
                )
    except (ConfigError, ReflexschedError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = "\n".join(out_lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.plot:
        if args.cases:
            print("error: --plot requires explicit schedule flags, not --cases", file=sys.stderr)
            return EXIT_CONFIG
        from . import figures

        figures.plot_waveform(spec, args.steps, args.plot)
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        cfg = load_run_config(args.config)
        vocab = cfg.load_vocab()
        scorer = cfg.build_scorer(vocab)
    except (ConfigError, ScorerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    server = ScorerServer(scorer, host=args.host, port=args.port)
    server.start()
    print(f"serving scorer on {server.endpoint}")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def _parse_prompt_ids(text: str) -> list[int]:
    text = text.strip()
    return [int(tok) for tok in text.split(",")] if text else []


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflexsched",
        description="Reflection-token logit scheduling: decode, sweep, scale, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="decode once and write a trace file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="trace output path (overrides config output_path)")
    run.add_argument("--seed", type=int, help="override config seed")
    run.add_argument("--workers", type=int)
    run.add_argument("--prompt-ids", type=_parse_prompt_ids, default=[], dest="prompt_ids")
    run.add_argument("--figdir", help="also render figures into this directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="grid-search schedule parameters over a dataset")
    sweep.add_argument("--config", required=True, help="sweep spec file")
    sweep.add_argument("--out", help="CSV output path")
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--figdir")
    sweep.set_defaults(func=cmd_sweep)

    scale = sub.add_parser("scale", help="best-of-N or beam search with a reward scorer")
    scale.add_argument("--config", required=True)
    scale.add_argument("--mode", choices=["bon", "beam"], required=True)
    scale.add_argument("-n", type=int, default=4, dest="n", help="best-of-N candidates")
    scale.add_argument("--beam-width", type=int, default=scaling.DEFAULT_BEAM_WIDTH)
    scale.add_argument("--chunk-len", type=int, default=scaling.DEFAULT_CHUNK_LEN)
    scale.add_argument("--expansions", type=int, default=None)
    scale.add_argument(
        "--reward", choices=["logprob", "oracle", "remote"], default=None,
        help="reward scorer (default: reward_kind from config, else logprob)",
    )
    scale.add_argument("--answer", help="answer key for the oracle reward")
    scale.add_argument("--reward-endpoint")
    scale.add_argument("--out", help="winning trace output path")
    scale.add_argument("--report", help="write the JSON report here as well")
    scale.add_argument("--seed", type=int)
    scale.add_argument("--workers", type=int)
    scale.add_argument("--prompt-ids", type=_parse_prompt_ids, default=[], dest="prompt_ids")
    scale.add_argument("--figdir")
    scale.set_defaults(func=cmd_scale)

    analyze = sub.add_parser("analyze", help="segment/cluster/distance/stats over traces")
    analyze.add_argument("--which", choices=["segments", "cluster", "distance", "stats"], required=True)
    analyze.add_argument("traces", nargs="+", help="trace JSONL files")
    analyze.add_argument("--out", help="CSV output path")
    analyze.add_argument("--bin-width", type=int, default=1000)
    analyze.add_argument("--k", type=int, default=3)
    analyze.add_argument("--cluster-seed", type=int, default=0)
    analyze.add_argument("--config", help="run config (scorer) for distance analysis")
    analyze.add_argument("--answer-ids", help="comma-separated answer token ids")
    analyze.add_argument("--figdir")
    analyze.set_defaults(func=cmd_analyze)

    schedule = sub.add_parser("schedule", help="evaluate schedule deltas (report or batch)")
    schedule.add_argument("--cases", help="JSONL of schedule fields + t, one case per line")
    schedule.add_argument("--kind", default="cyclic")
    schedule.add_argument("--amplitude", type=float, default=0.0)
    schedule.add_argument("--period", type=float, default=1.0)
    schedule.add_argument("--phase-shift", type=float, default=0.0, dest="phase_shift")
    schedule.add_argument("--alpha", type=float, default=0.0)
    schedule.add_argument("--window", type=int, default=0)
    schedule.add_argument("--decay-horizon", type=int, default=1, dest="decay_horizon")
    schedule.add_argument("--noise-sigma", type=float, default=0.0, dest="noise_sigma")
    schedule.add_argument("--noise-seed", type=int, default=0, dest="noise_seed")
    schedule.add_argument("--steps", type=int, default=100)
    schedule.add_argument("--out", help="JSONL output path (default stdout)")
    schedule.add_argument("--plot", help="waveform PNG path")
    schedule.set_defaults(func=cmd_schedule)

    serve = sub.add_parser("serve", help="serve the configured scorer over TCP")
    serve.add_argument("--config", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=0)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
