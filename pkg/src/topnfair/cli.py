"""Command-line entry point: ``topnfair generate | run | report | sweep``.

Exit codes: 0 success, 1 usage, 2 data error, 3 infeasible generator request or size guard.
The default output directory comes from ``TOPNFAIR_OUT`` (else ``./runs``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import (
    REGIMES,
    DataError,
    InfeasibleSpecError,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    new_user_ratings,
    write_ratings,
    write_services,
    write_trace,
)
from .model import ModelError, ParticipationTrace
from .simulator import MetricsLog, NewUser, ScenarioConfig, run_scenario
from .strategies import DEFAULT_EXACT_GUARD, STRATEGIES, SizeGuardError

log = logging.getLogger("topnfair")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GUARD = 0, 1, 2, 3
ENV_OUT = "TOPNFAIR_OUT"
DATASET_FILES = ("ratings.csv", "services.csv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_out() -> Path:
    return Path(os.environ.get(ENV_OUT, "runs"))


def fingerprint(directory: Path) -> str:
    h = hashlib.sha256()
    for name in DATASET_FILES:
        h.update(name.encode())
        h.update((directory / name).read_bytes())
    return h.hexdigest()


def write_manifest(path: Path, command: str, config: dict, data_dir: Path | None, seed, artifacts):
    manifest = {
        "command": command,
        "config": config,
        "dataset_fingerprint": fingerprint(data_dir) if data_dir else None,
        "seed": seed,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(directory: Path) -> dict | None:
    p = directory / "manifest.json"
    return json.loads(p.read_text()) if p.exists() else None


# generate ----------------------------------------------------------------


def cmd_generate(args) -> int:
    if (args.capacity_min is None) != (args.capacity_max is None):
        raise UsageError("--capacity-min and --capacity-max go together")
    cap = (args.capacity_min, args.capacity_max) if args.capacity_min is not None else None
    spec = SyntheticSpec(
        regime=args.regime,
        n_users=args.users,
        n_services=args.services,
        capacity_range=cap,
        topn=args.topn,
        seed=args.seed,
        ratings_per_user=args.ratings_per_user,
    )
    ds = generate_synthetic(spec)
    out = Path(args.out or default_out() / f"data-{args.regime}-seed{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    write_ratings(out / "ratings.csv", ds.ratings)
    write_services(out / "services.csv", ds.catalog)
    trace = _fraction_trace(sorted(ds.lists.full_lists), args.trace_rounds, args.trace_fraction, args.seed)
    write_trace(out / "participation.csv", trace)
    config = asdict(spec) | {"capacity_range": list(spec.resolved_capacity())}
    config |= {"trace_rounds": args.trace_rounds, "trace_fraction": args.trace_fraction}
    files = [out / "ratings.csv", out / "services.csv", out / "participation.csv"]
    write_manifest(out / "manifest.json", "generate", config, out, args.seed, files)
    print(out)
    return EXIT_OK


def _fraction_trace(users, rounds: int, fraction: float, seed: int) -> ParticipationTrace:
    rng = np.random.default_rng([seed, 1])
    out = {}
    for t in range(1, rounds + 1):
        keep = rng.random(len(users)) < fraction if fraction < 1 else np.ones(len(users), bool)
        out[t] = frozenset(u for u, k in zip(users, keep) if k)
    return ParticipationTrace(out)


# run ---------------------------------------------------------------------


def _load(data_dir: Path, topn: int | None, conversion_rate: float):
    for name in DATASET_FILES:
        if not (data_dir / name).exists():
            raise DataError(f"{data_dir / name} not found")
    manifest = read_manifest(data_dir)
    if manifest and manifest.get("dataset_fingerprint"):
        if manifest["dataset_fingerprint"] != fingerprint(data_dir):
            raise DataError(f"{data_dir}: dataset files do not match manifest fingerprint")
    if topn is None:
        topn = (manifest or {}).get("config", {}).get("topn", 5)
    return load_dataset(data_dir, topn, conversion_rate), topn


def _scenario(args, dataset, seed: int, strategy: str) -> ScenarioConfig:
    new_user = None
    if args.new_user_at is not None:
        new_user = NewUser(args.new_user_id, new_user_ratings(dataset, seed), args.new_user_at)
    return ScenarioConfig(
        strategy=strategy,
        rounds=args.rounds,
        participation=args.participation,
        new_user=new_user,
        track_users=tuple(args.track_user or ()),
        metric_every=args.metric_every,
        seed=seed,
        exact_guard=args.exact_guard,
    )


def cmd_run(args) -> int:
    data_dir = Path(args.data)
    dataset, topn = _load(data_dir, args.topn, args.conversion_rate)
    try:
        config = _scenario(args, dataset, args.seed, args.strategy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_scenario(config, dataset)
    out = Path(args.out or default_out() / f"{args.strategy}-seed{args.seed}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    result.write(out)
    cfg = _config_echo(config) | {"topn": topn, "data": str(data_dir), "conversion_rate": args.conversion_rate}
    write_manifest(out.with_suffix(".manifest.json"), "run", cfg, data_dir, args.seed, [out])
    print(out)
    return EXIT_OK


def _config_echo(config: ScenarioConfig) -> dict:
    d = asdict(config)
    if config.new_user is not None:
        d["new_user"] = {"user_id": config.new_user.user_id, "at_round": config.new_user.at_round}
    return d


# sweep -------------------------------------------------------------------


def _sweep_job(job):
    args_dict, strategy, seed, out = job
    args = argparse.Namespace(**args_dict)
    dataset, _ = _load(Path(args.data), args.topn, args.conversion_rate)
    result = run_scenario(_scenario(args, dataset, seed, strategy), dataset)
    result.write(out)
    return str(out)


def cmd_sweep(args) -> int:
    data_dir = Path(args.data)
    _, topn = _load(data_dir, args.topn, args.conversion_rate)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad:
        raise UsageError(f"unknown strategies: {', '.join(bad)}")
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = Path(args.out_dir or default_out() / "sweep")
    out_dir.mkdir(parents=True, exist_ok=True)
    base = vars(args) | {"topn": topn}
    base.pop("func", None)
    jobs = [(base, s, seed, out_dir / f"{s}-seed{seed}.csv") for s in strategies for seed in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            paths = list(pool.map(_sweep_job, jobs))
    else:
        paths = [_sweep_job(j) for j in jobs]
    cfg = {k: v for k, v in base.items() if k != "out_dir"} | {"strategies": strategies}
    write_manifest(out_dir / "manifest.json", "sweep", cfg, data_dir, seeds, paths)
    for p in paths:
        print(p)
    return EXIT_OK


# report ------------------------------------------------------------------

CHART_COLUMNS = {"variance": "variance", "quality": "total_quality", "mean-quality": "mean_quality"}


def summarize(logs: list[MetricsLog], names: list[str]) -> tuple[list[dict], int]:
    lengths = [len(lg.rows) for lg in logs]
    span = min(lengths) if lengths else 0
    if len(set(lengths)) > 1:
        log.warning("logs have different round counts %s; using the first %d rounds", lengths, span)
    rows = []
    for name, lg in zip(names, logs):
        rs = lg.rows[:span]
        rows.append(
            {
                "log": name,
                "strategy": lg.strategy,
                "rounds": span,
                "final_variance": rs[-1].variance if rs else float("nan"),
                "cumulative_quality": sum(r.total_quality for r in rs),
                "mean_quality": sum(r.mean_quality for r in rs) / span if span else float("nan"),
            }
        )
    return rows, span


def render_table(rows: list[dict]) -> str:
    head = f"{'log':<28} {'strategy':<12} {'rounds':>6} {'final_variance':>16} {'cum_quality':>14} {'mean_quality':>12}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['log']:<28} {r['strategy']:<12} {r['rounds']:>6} {r['final_variance']:>16.6g} "
            f"{r['cumulative_quality']:>14.2f} {r['mean_quality']:>12.4f}"
        )
    return "\n".join(lines)


def write_chart(path: Path, metric: str, logs: list[MetricsLog], names: list[str], span: int):
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "topnfair"
    import matplotlib.pyplot as plt

    col = CHART_COLUMNS[metric]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, lg in zip(names, logs):
        rs = lg.rows[:span]
        ax.plot([r.round for r in rs], [getattr(r, col) for r in rs], label=name)
    ax.set_xlabel("round")
    ax.set_ylabel(col)
    if metric == "variance":
        ax.set_yscale("symlog", linthresh=1e-6)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_report(args) -> int:
    paths = [Path(p) for p in args.logs]
    logs = [MetricsLog.read(p) for p in paths]
    names = [p.stem for p in paths]
    rows, span = summarize(logs, names)
    print(render_table(rows))
    if args.chart:
        out_dir = Path(args.out_dir or default_out() / "report")
        out_dir.mkdir(parents=True, exist_ok=True)
        for metric in args.chart:
            target = out_dir / f"{metric}.svg"
            write_chart(target, metric, logs, names, span)
            print(target)
    return EXIT_OK


# parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topnfair", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--regime", required=True, choices=REGIMES)
    g.add_argument("--users", type=int, default=800)
    g.add_argument("--services", type=int, default=50)
    g.add_argument("--topn", type=int, default=5)
    g.add_argument("--capacity-min", type=int)
    g.add_argument("--capacity-max", type=int)
    g.add_argument("--ratings-per-user", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trace-rounds", type=int, default=100, help="rounds in the written participation trace")
    g.add_argument("--trace-fraction", type=float, default=1.0, help="per-round participation probability in the trace")
    g.add_argument("--out", help="output directory")
    g.set_defaults(func=cmd_generate)

    def scenario_flags(q):
        q.add_argument("--data", required=True, help="dataset directory (ratings.csv, services.csv)")
        q.add_argument("--rounds", type=int, default=100)
        q.add_argument("--participation", default="fixed", help="fixed | bernoulli:<p> | trace:<path>")
        q.add_argument("--topn", type=int, help="default: value recorded in the dataset manifest, else 5")
        q.add_argument("--track-user", action="append", help="log this user's Top-N Fairness (repeatable)")
        q.add_argument("--new-user-at", type=int, help="inject a synthetic new user after this round")
        q.add_argument("--new-user-id", default="new-user")
        q.add_argument("--metric-every", type=int, default=1)
        q.add_argument("--exact-guard", type=int, default=DEFAULT_EXACT_GUARD)
        q.add_argument("--conversion-rate", type=float, default=1.0)

    r = sub.add_parser("run", help="run one scenario")
    scenario_flags(r)
    r.add_argument("--strategy", required=True, choices=STRATEGIES)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="metrics log path")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run several strategies and seeds, optionally in parallel")
    scenario_flags(s)
    s.add_argument("--strategies", default="f-fast,random,quality-max")
    s.add_argument("--seeds", default="0")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="summarise metrics logs")
    rep.add_argument("logs", nargs="+")
    rep.add_argument("--chart", action="append", choices=sorted(CHART_COLUMNS))
    rep.add_argument("--out-dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"topnfair: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleSpecError, SizeGuardError) as exc:
        print(f"topnfair: refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DataError, ModelError, FileNotFoundError) as exc:
        print(f"topnfair: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
