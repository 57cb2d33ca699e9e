"""Cluster outbreak benchmark: retrospective (and optionally real-time) detection metrics."""

from dataclasses import asdict

import numpy as np

from _common import log, parser, sampler_config, save

from cmsnb.experiments import evaluate_detection, fit, outbreak_probabilities, \
    realtime_detection
from cmsnb.simulation import BenchmarkConfig, benchmark_models, simulate_cluster_benchmark


def main():
    p = parser(__doc__)
    p.add_argument("--structure-seed", type=int, default=0)
    p.add_argument("--count-seed", type=int, default=1)
    p.add_argument("--realtime", action="store_true",
                   help="also refit through every week of the last outbreak cycle")
    args = p.parse_args()
    data, truth = simulate_cluster_benchmark(
        BenchmarkConfig(structure_seed=args.structure_seed, count_seed=args.count_seed))
    cfg = sampler_config(args)
    out = {}
    for name, model in zip(("coupled", "non-coupled"), benchmark_models()):
        draws = fit(data, model, cfg)
        res = evaluate_detection(outbreak_probabilities(draws, model), truth)
        out[name] = {"retrospective": asdict(res)}
        log(f"{name} retrospective: AUC={res.auc:.4f} sens={res.sensitivity:.3f} "
            f"spec={res.specificity:.3f} timeliness={res.timeliness:.2f}")
        if args.realtime:
            weeks = np.arange(data.T - 30, data.T)
            scores = realtime_detection(data, model, weeks, cfg,
                                        progress=lambda t: log(f"  real-time week {t}"))
            res = evaluate_detection(scores, truth, weeks=weeks, window=(weeks[0], data.T))
            out[name]["realtime"] = asdict(res)
            log(f"{name} real-time: AUC={res.auc:.4f} timeliness={res.timeliness:.2f}")
    save(args, out)


if __name__ == "__main__":
    main()
