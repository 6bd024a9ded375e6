"""Top-N Fairness of a user who joins mid-run, under D-FAST and quality-max."""

import math

from topnfair.data import SyntheticSpec, generate_synthetic, new_user_ratings
from topnfair.simulator import NewUser, ScenarioConfig, run_scenario

from _common import finish, out_dir, parser


def main():
    p = parser(__doc__)
    p.set_defaults(rounds=200)
    p.add_argument("--inject-at", type=int, default=100)
    args = p.parse_args()
    ds = generate_synthetic(SyntheticSpec(regime="popular", seed=args.seed))
    nu = NewUser("u_new", new_user_ratings(ds, seed=args.seed), args.inject_at)
    logs = {s: run_scenario(ScenarioConfig(s, rounds=args.rounds, new_user=nu), ds) for s in ("d-fast", "quality-max")}
    for s, lg in logs.items():
        series = lg.tracked_series("u_new")
        shown = [(t, f) for t, f in enumerate(series, start=1) if not math.isnan(f)][::10]
        print(s, " ".join(f"{t}:{f:+.3f}" for t, f in shown))
    finish(out_dir(args, "new-user"), logs)


if __name__ == "__main__":
    main()
