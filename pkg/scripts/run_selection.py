"""WAIC model selection between coupled and non-coupled fits under both truths."""

from _common import log, parser, sampler_config, save

from cmsnb.experiments import selection_replication


def main():
    p = parser(__doc__)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--margin", type=float, default=5.0)
    args = p.parse_args()
    cfg = sampler_config(args)
    out = {}
    for truth, offset in (("coupled", 100), ("non-coupled", 200)):
        deltas = []
        for k in range(args.reps):
            r = selection_replication(args.seed + offset + k, truth == "coupled", cfg)
            deltas.append(r.delta)
            log(f"{truth} truth rep {k}: WAIC coupled={r.waic_coupled:.1f} "
                f"non-coupled={r.waic_noncoupled:.1f} delta={r.delta:.1f}")
        out[truth] = {"delta": deltas,
                      "coupled_chosen": sum(d > args.margin for d in deltas),
                      "noncoupled_chosen": sum(d < -args.margin for d in deltas)}
    log(f"coupled truth: coupled chosen {out['coupled']['coupled_chosen']}/{args.reps}; "
        f"non-coupled truth: largest delta {max(out['non-coupled']['delta']):.1f}")
    save(args, out)


if __name__ == "__main__":
    main()
