"""D-FAST and F-FAST when only a random fraction of users shows up each round."""

from topnfair.data import SyntheticSpec, generate_synthetic
from topnfair.simulator import ScenarioConfig, run_scenario

from _common import finish, out_dir, parser


def main():
    p = parser(__doc__)
    p.add_argument("--p", type=float, nargs="+", default=[0.2, 0.4, 0.6, 0.8])
    p.add_argument("--run-seed", type=int, default=0, help="participation seed")
    args = p.parse_args()
    ds = generate_synthetic(SyntheticSpec(regime="popular", seed=args.seed))
    logs = {"f-fast-fixed": run_scenario(ScenarioConfig("f-fast", rounds=args.rounds), ds)}
    for frac in args.p:
        for s in ("d-fast", "f-fast"):
            cfg = ScenarioConfig(s, rounds=args.rounds, participation=f"bernoulli:{frac}", seed=args.run_seed)
            logs[f"{s}-p{frac}"] = run_scenario(cfg, ds)
    finish(out_dir(args, "dynamics"), logs, charts=("variance", "mean-quality"))


if __name__ == "__main__":
    main()
