"""Shared plumbing for the experiment scripts."""

import argparse
from pathlib import Path

from topnfair.cli import default_out, render_table, summarize, write_chart


def parser(doc: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc.strip().splitlines()[0])
    p.add_argument("--seed", type=int, default=1, help="dataset seed")
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--out", type=Path, help="output directory (default $TOPNFAIR_OUT/<script>)")
    return p


def finish(out: Path, logs: dict, charts=("variance", "quality")):
    """Write each log, print the summary table and draw the charts."""
    out.mkdir(parents=True, exist_ok=True)
    names = list(logs)
    for name, lg in logs.items():
        lg.write(out / f"{name}.csv")
    rows, span = summarize(list(logs.values()), names)
    print(render_table(rows))
    for metric in charts:
        write_chart(out / f"{metric}.svg", metric, list(logs.values()), names, span)
    print(f"wrote {out}")


def out_dir(args, name: str) -> Path:
    return args.out or default_out() / name
