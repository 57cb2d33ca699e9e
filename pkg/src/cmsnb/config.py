"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments. Lists are comma separated. Keys with a
``prior.`` prefix override fields of :class:`~cmsnb.priors.PriorSpec`. The
environment variable ``CMSNB_CONFIG`` names a default config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .model import ModelSpec, StateSpace, TRANSITIONS
from .samplers import SamplerConfig

ENV_VAR = "CMSNB_CONFIG"
VARIANTS = ("coupled", "non-coupled", "no-absence-clone")


def model_to_dict(m: ModelSpec) -> dict:
    return {
        "n_endemic": m.states.n_endemic, "n_outbreak": m.states.n_outbreak,
        "absence": m.states.absence, "en_covariates": list(m.en_covariates),
        "ob_covariates": list(m.ob_covariates), "p12_covariates": list(m.p12_covariates),
        "p21_covariates": list(m.p21_covariates), "p23_covariates": list(m.p23_covariates),
        "p33_covariates": list(m.p33_covariates), "spatial": list(m.spatial),
        "random_intercepts": m.random_intercepts,
        "shared_overdispersion": m.shared_overdispersion,
    }


def model_from_dict(d: dict) -> ModelSpec:
    space = StateSpace(int(d["n_endemic"]), int(d["n_outbreak"]), bool(d["absence"]))
    return ModelSpec(
        states=space,
        en_covariates=tuple(d["en_covariates"]), ob_covariates=tuple(d["ob_covariates"]),
        p12_covariates=tuple(d["p12_covariates"]), p21_covariates=tuple(d["p21_covariates"]),
        p23_covariates=tuple(d["p23_covariates"]), p33_covariates=tuple(d["p33_covariates"]),
        spatial=tuple(d["spatial"]), random_intercepts=bool(d["random_intercepts"]),
        shared_overdispersion=bool(d["shared_overdispersion"]),
    )


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


@dataclass
class RunConfig:
    """Everything a command needs. Defaults are the full-scale settings."""

    chains: int = 3
    iterations: int = 200_000
    burnin: int = 50_000
    thin: int = 10
    seed: int = 0
    adapt_target: float = 0.44
    adapt_interval: int = 50
    adapt_decay: float = 0.5
    waic: str = "partial"
    jobs: int = 1
    variant: str = "coupled"
    n_endemic: int = 2
    n_outbreak: int = 4
    en_covariates: tuple = ()
    ob_covariates: tuple = ()
    p12_covariates: tuple = ()
    p21_covariates: tuple = ()
    p23_covariates: tuple = ()
    p33_covariates: tuple = ()
    spatial: tuple = TRANSITIONS
    random_intercepts: bool = False
    shared_overdispersion: bool = False
    constraint: str = "strong"
    eps_rate: float = 0.01
    eps_rho: float = 0.05
    eps_intercept: float = 0.1
    standardize: bool = True
    counts: str = ""
    covariates: str = ""
    neighbors: str = ""
    emission_covariates: tuple = ()
    transition_covariates: tuple = ()
    through_week: int = 0
    out: str = "out"
    prior: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("need 0 <= burnin < iterations")
        if self.through_week < 0:
            raise ValueError("through_week must be >= 0 (0 means every week)")
        bad = set(self.spatial) - set(TRANSITIONS)
        if bad:
            raise ValueError(f"unknown transitions in spatial: {sorted(bad)}")

    def model(self) -> ModelSpec:
        if self.variant == "no-absence-clone":
            space = StateSpace(1, 1, absence=False)
            spatial = tuple(lk for lk in self.spatial if lk in ("23", "33"))
        else:
            space = StateSpace(self.n_endemic, self.n_outbreak, absence=True)
            spatial = self.spatial
        if self.variant == "non-coupled":
            spatial = ()
        return ModelSpec(states=space, en_covariates=self.en_covariates,
                         ob_covariates=self.ob_covariates, p12_covariates=self.p12_covariates,
                         p21_covariates=self.p21_covariates, p23_covariates=self.p23_covariates,
                         p33_covariates=self.p33_covariates, spatial=spatial,
                         random_intercepts=self.random_intercepts,
                         shared_overdispersion=self.shared_overdispersion)

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(n_chains=self.chains, n_iterations=self.iterations,
                             burn_in=self.burnin, thin=self.thin, seed=self.seed,
                             target_accept=self.adapt_target, adapt_interval=self.adapt_interval,
                             adapt_decay=self.adapt_decay, waic=self.waic, n_jobs=self.jobs)

    def prior_overrides(self) -> dict:
        out = dict(self.prior)
        out.update(constraint=self.constraint, eps_rate=self.eps_rate, eps_rho=self.eps_rho,
                   eps_intercept=self.eps_intercept)
        return out

    @classmethod
    def from_mapping(cls, kv: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw, prior = {}, {}
        for key, raw in kv.items():
            if key.startswith("prior."):
                prior[key[6:]] = _prior_value(raw)
                continue
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            t = cls.__dataclass_fields__[key].default
            if isinstance(t, bool):
                kw[key] = _bool(raw)
            elif isinstance(t, int):
                kw[key] = int(raw)
            elif isinstance(t, float):
                kw[key] = float(raw)
            elif isinstance(t, tuple):
                kw[key] = _list(raw)
            else:
                kw[key] = raw.strip()
        if prior:
            kw["prior"] = prior
        return cls(**kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "prior":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name} = {v}")
        for k, v in sorted(self.prior.items()):
            lines.append(f"prior.{k} = {v}")
        return "\n".join(lines) + "\n"


def _prior_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    kv = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ValueError(f"{source}:{n}: expected key = value")
        k, v = s.split("=", 1)
        kv[k.strip()] = v.strip()
    return kv


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a config file (or ``$CMSNB_CONFIG``), then apply string overrides."""
    path = path or os.environ.get(ENV_VAR)
    kv = {}
    if path:
        with open(path) as fh:
            kv = parse_config_text(fh.read(), path)
    kv.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_mapping(kv)
