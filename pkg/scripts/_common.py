"""Shared command-line plumbing for the experiment scripts."""

import argparse
import json
import time
from pathlib import Path

from cmsnb.samplers import SamplerConfig


def parser(description, iters=20_000, burnin=5_000):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--chains", type=int, default=3)
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write results as JSON here")
    return p


def sampler_config(args, **kw):
    return SamplerConfig(n_chains=args.chains, n_iterations=args.iters, burn_in=args.burnin,
                         thin=args.thin, seed=args.seed, **kw)


def log(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def save(args, result):
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
        log(f"wrote {args.out}")
