"""Effect of the list length N on quality and fairness variance."""

from topnfair.data import SyntheticSpec, generate_synthetic
from topnfair.simulator import ScenarioConfig, run_scenario

from _common import finish, out_dir, parser


def main():
    p = parser(__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[3, 5, 10])
    args = p.parse_args()
    # one rating matrix; only the window length changes
    base = generate_synthetic(SyntheticSpec(regime="popular", seed=args.seed))
    logs = {}
    for n in args.n:
        ds = base.with_topn(n)
        for s in ("f-fast", "quality-max"):
            logs[f"{s}-N{n}"] = run_scenario(ScenarioConfig(s, rounds=args.rounds), ds)
    finish(out_dir(args, "n-sweep"), logs)


if __name__ == "__main__":
    main()
