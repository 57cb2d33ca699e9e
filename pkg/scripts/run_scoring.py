"""Real-time one-week-ahead log scores of the true (coupled) and non-coupled models."""

import numpy as np

from _common import log, parser, sampler_config, save

from cmsnb.experiments import realtime_scores
from cmsnb.metrics import permutation_test
from cmsnb.simulation import params_from_named, selection_scenario, simulate_from_model, \
    synthetic_skeleton


def main():
    p = parser(__doc__, iters=10_000, burnin=2_500)
    p.add_argument("--weeks", type=int, default=10, help="score the last this many weeks")
    p.add_argument("--data-seed", type=int, default=900)
    p.add_argument("--rao-blackwell", action="store_true")
    args = p.parse_args()
    rng = np.random.default_rng(args.data_seed)
    skeleton = synthetic_skeleton(10, 113, rng)
    model, truth = selection_scenario(True)
    data, _ = simulate_from_model(params_from_named(truth, model, skeleton), skeleton, rng,
                                  model)
    weeks = list(range(data.T - args.weeks, data.T))
    cfg = sampler_config(args, waic="off")
    out = {"weeks": weeks}
    for name, m in (("coupled", model), ("non-coupled", model.non_coupled())):
        s = realtime_scores(data, m, weeks, cfg, rao_blackwell=args.rao_blackwell,
                            progress=lambda t: log(f"  {name} week {t}"))
        out[name] = s.tolist()
        log(f"{name}: mean log score {s.mean():.4f}")
    out["p_value"] = permutation_test(out["coupled"], out["non-coupled"],
                                      rng=np.random.default_rng(args.seed))
    log(f"paired permutation p-value {out['p_value']:.3f}")
    save(args, out)


if __name__ == "__main__":
    main()
