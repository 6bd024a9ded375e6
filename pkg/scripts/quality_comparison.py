"""Fairness and quality of every scalable strategy on the popular regime."""

from topnfair.data import SyntheticSpec, generate_synthetic
from topnfair.simulator import ScenarioConfig, run_scenario

from _common import finish, out_dir, parser


def main():
    p = parser(__doc__)
    p.add_argument("--regime", default="popular")
    args = p.parse_args()
    ds = generate_synthetic(SyntheticSpec(regime=args.regime, seed=args.seed))
    logs = {s: run_scenario(ScenarioConfig(s, rounds=args.rounds), ds) for s in ("f-fast", "d-fast", "quality-max", "random")}
    q = {s: lg.column("total_quality").sum() for s, lg in logs.items()}
    print(f"f-fast / quality-max = {q['f-fast'] / q['quality-max']:.4f}")
    print(f"f-fast / random      = {q['f-fast'] / q['random']:.4f}")
    finish(out_dir(args, f"quality-{args.regime}"), logs)


if __name__ == "__main__":
    main()
