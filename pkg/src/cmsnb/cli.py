"""Command-line interface.

Every subcommand reads the flat config file (``--config`` or ``$CMSNB_CONFIG``)
and lets flags override it. Errors print ``error: <category>: <message>`` to
stderr and exit nonzero: 3 input, 4 config, 5 sampler, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import RunConfig, load_config
from .diagnostics import convergence_gate, diagnose
from .experiments import evaluate_detection
from .inference import (
    forecast_summary, multivariate_log_score, posterior_predictive, state_probabilities,
    waic_from_draws,
)
from .io import (
    PanelFormatError, load_draws, load_panel, neighbours_from_distributions,
    patient_distributions, persist_draws, read_csv, write_csv, write_neighbors, write_panel,
)
from .model import PanelData
from .priors import PriorSpec, default_priors
from .samplers import FilterDegeneracyError, gibbs_run
from .simulation import (
    BenchmarkConfig, BenchmarkTruth, params_from_named, recovery_scenario, selection_scenario,
    simulate_cluster_benchmark, simulate_from_model, synthetic_skeleton,
)

EXIT = {"input": 3, "config": 4, "sampler": 5, "internal": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# shared helpers


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "chains", "iters", "burnin", "variant", "out", "counts", "covariates",
                "neighbors", "thin", "through_week"):
        val = getattr(args, key, None)
        if val is not None:
            out[{"iters": "iterations"}.get(key, key)] = str(val)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError("config", f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args) -> RunConfig:
    try:
        return load_config(args.config, _overrides(args))
    except (ValueError, TypeError, OSError) as e:
        raise CliError("config", str(e)) from None


def _panel(cfg: RunConfig, truncate: bool = True) -> PanelData:
    """The configured panel, cut after ``through_week`` unless ``truncate`` is off."""
    if not cfg.counts:
        raise CliError("config", "no counts file given (config key 'counts' or --counts)")
    data = load_panel(cfg.counts, cfg.covariates or None, cfg.neighbors or None,
                      emission_covariates=cfg.emission_covariates or None,
                      transition_covariates=cfg.transition_covariates or None,
                      standardize=cfg.standardize)
    if truncate and cfg.through_week:
        if not 2 <= cfg.through_week <= data.T:
            raise CliError("config", f"through_week must be in 2..{data.T}")
        data = data.truncated(cfg.through_week)
    return data


def _prior_spec(cfg: RunConfig, data: PanelData) -> PriorSpec:
    kw = cfg.prior_overrides()
    by_t = {}
    for k in list(kw):
        if k.startswith("spat_sd."):
            by_t[k.split(".", 1)[1]] = float(kw.pop(k))
    if by_t:
        kw["spat_sd_by_transition"] = by_t
    try:
        return default_priors(data, **kw)
    except TypeError as e:
        raise CliError("config", f"bad prior setting: {e}") from None


def _draws_dir(args, cfg: RunConfig) -> str:
    return args.draws or os.path.join(cfg.out, "draws")


def _load_draws(path):
    if not os.path.exists(os.path.join(path, "meta.json")):
        raise CliError("input", f"no draws found in {path}")
    return load_draws(path)


def _outfile(args, cfg: RunConfig, name: str) -> str:
    return args.output or os.path.join(cfg.out, name)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    if args.kind == "benchmark":
        bc = BenchmarkConfig(structure_seed=cfg.seed, count_seed=cfg.seed + 1)
        data, truth = simulate_cluster_benchmark(bc)
        states = truth.states
        write_csv(os.path.join(out, "outbreaks.csv"), ("area_id", "start_week", "end_week"),
                  [(data.area_ids[i], s + 1, e + 1) for i in range(data.N)
                   for s, e in zip(truth.starts[i], truth.ends[i])])
    else:
        rng = np.random.default_rng(cfg.seed)
        skeleton = synthetic_skeleton(args.areas, args.weeks, rng)
        if args.scenario == "recovery":
            model, values = recovery_scenario(skeleton)
        else:
            model, values = selection_scenario(args.scenario == "coupled")
        v = params_from_named(values, model, skeleton)
        data, S = simulate_from_model(v, skeleton, rng, model)
        states = S.collapsed(model.states)
        write_csv(os.path.join(out, "truth_params.csv"), ("name", "value"),
                  sorted(values.items()))
    write_panel(data, os.path.join(out, "counts.csv"), os.path.join(out, "covariates.csv"),
                os.path.join(out, "neighbors.csv"))
    write_csv(os.path.join(out, "truth_states.csv"), ("area_id", "week", "state"),
              [(data.area_ids[i], t + 1, int(states[i, t])) for i in range(data.N)
               for t in range(data.T)])
    print(f"simulated N={data.N} T={data.T} into {out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    data = _panel(cfg)
    if not cfg.emission_covariates and not cfg.en_covariates and data.x_names:
        names = tuple(data.x_names)
        cfg = replace(cfg, en_covariates=names, ob_covariates=names)
    model = cfg.model()
    spec = _prior_spec(cfg, data)
    sampler = cfg.sampler()
    progress = None
    if args.progress:
        step = max(1, sampler.n_iterations // 20)

        def progress(it):
            if (it + 1) % step == 0:
                print(f"iteration {it + 1}/{sampler.n_iterations}", file=sys.stderr)
    draws = gibbs_run(data, spec, sampler, model=model, progress=progress)
    path = _draws_dir(args, cfg)
    persist_draws(draws, path, model.states.K)
    with open(os.path.join(path, "run.cfg"), "w") as fh:
        fh.write(cfg.to_text())
    gate = convergence_gate(draws) if draws.n_chains > 1 and draws.n_kept >= 10 else None
    print(f"wrote {draws.n_chains} chains x {draws.n_kept} draws to {path}")
    if gate is not None:
        print(gate.verdict())
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    draws = _load_draws(_draws_dir(args, cfg))
    names, ess, rhat = diagnose(draws)
    gate = convergence_gate(names=names, ess=ess, rhat=rhat, min_ess=args.min_ess,
                            max_rhat=args.max_rhat)
    write_csv(_outfile(args, cfg, "diagnostics.csv"), ("parameter", "ess", "rhat"),
              [(n, float(e), float(r)) for n, e, r in zip(names, ess, rhat)])
    print(gate.verdict())
    return 0 if gate.passed or not args.strict else 6


def cmd_states(args) -> int:
    cfg = _config(args)
    draws = _load_draws(_draws_dir(args, cfg))
    p = state_probabilities(draws)
    N, T, _ = p.shape
    ids = _area_ids(cfg, N)
    write_csv(_outfile(args, cfg, "states.csv"),
              ("area_id", "week", "p_absence", "p_endemic", "p_outbreak"),
              [(ids[i], t + 1, *map(float, p[i, t])) for i in range(N) for t in range(T)])
    print(f"wrote state probabilities for {N} areas x {T} weeks")
    return 0


def _area_ids(cfg: RunConfig, N: int):
    if cfg.counts and os.path.exists(cfg.counts):
        ids = load_panel(cfg.counts, standardize=False).area_ids
        if len(ids) == N:
            return ids
    return tuple(str(i + 1) for i in range(N))


def cmd_forecast(args) -> int:
    cfg = _config(args)
    data = _panel(cfg)
    draws = _load_draws(_draws_dir(args, cfg))
    rng = np.random.default_rng(cfg.seed)
    fc = posterior_predictive(draws, data, args.horizon, rng, max_draws=args.max_draws)
    from .config import model_from_dict
    collapse = model_from_dict(draws.config["model"]).states.collapse
    rows = [(data.area_ids[i], data.T + k, float(m), float(lo), float(hi), float(p))
            for i, k, m, lo, hi, p in forecast_summary(fc, collapse)]
    write_csv(_outfile(args, cfg, "forecast.csv"),
              ("area_id", "week", "mean", "q025", "q975", "p_outbreak"), rows)
    print(f"wrote {args.horizon}-week forecasts for {data.N} areas")
    return 0


def cmd_waic(args) -> int:
    cfg = _config(args)
    res = waic_from_draws(_load_draws(_draws_dir(args, cfg)))
    print(json.dumps(res, sort_keys=True))
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    data = _panel(cfg, truncate=False)
    draws = _load_draws(_draws_dir(args, cfg))
    week = args.week - 1
    if not 1 <= week < data.T:
        raise CliError("input", f"week {args.week} outside the panel")
    fitted_T = draws.states[0].shape[2]
    if fitted_T != week:
        raise CliError("input", f"the fit covers {fitted_T} weeks; scoring week {args.week} "
                       f"needs a fit through week {week}")
    rng = np.random.default_rng(cfg.seed)
    s = multivariate_log_score(draws, data, week, rng, max_draws=args.max_draws,
                               rao_blackwell=args.rao_blackwell)
    print(json.dumps({"week": args.week, "log_score": s}))
    return 0


def _truth_from_csv(states_path, outbreaks_path):
    _, rows = read_csv(states_path)
    ids = list(dict.fromkeys(str(r[0]) for r in rows))
    T = max(int(r[1]) for r in rows)
    states = np.zeros((len(ids), T), dtype=np.int64)
    pos = {a: i for i, a in enumerate(ids)}
    for a, w, s in rows:
        states[pos[str(a)], int(w) - 1] = int(s)
    starts, ends = [[] for _ in ids], [[] for _ in ids]
    if outbreaks_path:
        _, orows = read_csv(outbreaks_path)
        for a, s, e in orows:
            starts[pos[str(a)]].append(int(s) - 1)
            ends[pos[str(a)]].append(int(e) - 1)
    else:
        for i in range(len(ids)):
            ob = np.r_[False, states[i] == 3, False].astype(int)
            d = np.diff(ob)
            starts[i] = list(np.flatnonzero(d == 1))
            ends[i] = list(np.flatnonzero(d == -1) - 1)
    return ids, BenchmarkTruth(states, starts, ends)


def cmd_eval_detect(args) -> int:
    ids, truth = _truth_from_csv(args.truth, args.outbreaks)
    _, rows = read_csv(args.scores)
    pos = {a: i for i, a in enumerate(ids)}
    scores = np.full(truth.states.shape, np.nan)
    for r in rows:
        if str(r[0]) not in pos:
            raise CliError("input", f"{args.scores}: unknown area id {r[0]!r}")
        scores[pos[str(r[0])], int(r[1]) - 1] = float(r[-1])
    weeks = np.flatnonzero(np.isfinite(scores).all(axis=0))
    if args.first_week:
        weeks = weeks[weeks >= args.first_week - 1]
    window = (args.first_week - 1, truth.states.shape[1]) if args.first_week else None
    res = evaluate_detection(scores, truth, weeks, args.threshold, window)
    print(json.dumps({"auc": res.auc, "sensitivity": res.sensitivity,
                      "specificity": res.specificity, "timeliness": res.timeliness,
                      "n_detected": res.n_detected, "n_missed": res.n_missed}, sort_keys=True))
    return 0


def cmd_weights(args) -> int:
    areas, P = patient_distributions(args.patients)
    W = neighbours_from_distributions(P, args.k)
    write_neighbors(args.output, W, areas)
    print(f"wrote {int(np.count_nonzero(W))} weighted edges for {len(areas)} areas")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmsnb", description="Coupled Markov-switching negative "
                                 "binomial models for areal count surveillance.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fit_flags=False):
        p.add_argument("--config", help="config file (default $CMSNB_CONFIG)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--counts")
        p.add_argument("--covariates")
        p.add_argument("--neighbors")
        if fit_flags:
            p.add_argument("--chains", type=int)
            p.add_argument("--iters", type=int)
            p.add_argument("--burnin", type=int)
            p.add_argument("--thin", type=int)
            p.add_argument("--variant", choices=("coupled", "non-coupled", "no-absence-clone"))
            p.add_argument("--through-week", type=int, help="fit only weeks 1..W")
        return p

    p = common(sub.add_parser("simulate", help="simulate a panel"))
    p.add_argument("--kind", choices=("model", "benchmark"), default="model")
    p.add_argument("--scenario", choices=("recovery", "coupled", "non-coupled"),
                   default="recovery")
    p.add_argument("--areas", type=int, default=10)
    p.add_argument("--weeks", type=int, default=113)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("fit", help="run the Gibbs sampler"), fit_flags=True)
    p.add_argument("--draws", help="output directory for draws (default OUT/draws)")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("diagnose", help="R-hat, ESS and the convergence gate"))
    p.add_argument("--draws")
    p.add_argument("--output")
    p.add_argument("--min-ess", type=float, default=1000.0)
    p.add_argument("--max-rhat", type=float, default=1.05)
    p.add_argument("--strict", action="store_true", help="exit 6 when the gate fails")
    p.set_defaults(func=cmd_diagnose)

    p = common(sub.add_parser("states", help="retrospective state probabilities"))
    p.add_argument("--draws")
    p.add_argument("--output")
    p.set_defaults(func=cmd_states)

    p = common(sub.add_parser("forecast", help="posterior predictive forecasts"))
    p.add_argument("--draws")
    p.add_argument("--output")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--max-draws", type=int)
    p.set_defaults(func=cmd_forecast)

    p = common(sub.add_parser("waic", help="WAIC from a fit"))
    p.add_argument("--draws")
    p.set_defaults(func=cmd_waic)

    p = common(sub.add_parser("score", help="one-week-ahead multivariate log score"))
    p.add_argument("--draws")
    p.add_argument("--week", type=int, required=True,
                   help="1-based week to score; the fit must end the week before")
    p.add_argument("--max-draws", type=int)
    p.add_argument("--rao-blackwell", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-detect", help="AUC, sensitivity, specificity and timeliness")
    p.add_argument("--scores", required=True, help="CSV area_id,week,...,p_outbreak")
    p.add_argument("--truth", required=True, help="CSV area_id,week,state")
    p.add_argument("--outbreaks", help="CSV area_id,start_week,end_week")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--first-week", type=int, help="evaluate weeks from this one on")
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("weights", help="neighbour weights from patient samples")
    p.add_argument("--patients", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_weights)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        category, msg = e.category, str(e)
    except (PanelFormatError, FileNotFoundError, IsADirectoryError) as e:
        category, msg = "input", str(e)
    except FilterDegeneracyError as e:
        category, msg = "sampler", str(e)
    except ValueError as e:
        category, msg = "input", str(e)
    except RuntimeError as e:
        category, msg = "sampler", str(e)
    print(f"error: {category}: {msg}", file=sys.stderr)
    return EXIT[category]


if __name__ == "__main__":
    sys.exit(main())
