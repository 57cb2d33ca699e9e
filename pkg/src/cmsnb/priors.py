"""Prior distributions and their truncation by the transmission-ordering constraint."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import (ModelSpec, PanelData, Param, ParamVector, TRANSITIONS, constraints_satisfied,
                    free_parameters, get_param, set_param)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Prior:
    """A univariate prior: ``normal(mu, sd)``, ``cauchy(loc, scale)``,
    ``uniform(low, high)`` or ``gamma(shape, rate)``."""

    family: str
    a: float
    b: float

    def __post_init__(self):
        if self.family not in ("normal", "cauchy", "uniform", "gamma"):
            raise ValueError(f"unknown prior family {self.family!r}")
        if self.family == "uniform":
            if not self.a < self.b:
                raise ValueError("uniform bounds must be ordered")
        elif not self.b > 0:
            raise ValueError(f"{self.family} prior needs a positive scale")

    def logpdf(self, v: float) -> float:
        a, b = self.a, self.b
        if self.family == "normal":
            z = (v - a) / b
            return -0.5 * z * z - math.log(b) - 0.5 * LOG_2PI
        if self.family == "cauchy":
            z = (v - a) / b
            return -math.log(math.pi * b) - math.log1p(z * z)
        if self.family == "uniform":
            return -math.log(b - a) if a < v < b else -math.inf
        if v <= 0:
            return -math.inf
        return a * math.log(b) - math.lgamma(a) + (a - 1) * math.log(v) - b * v

    def sample(self, rng: np.random.Generator) -> float:
        if self.family == "normal":
            return float(rng.normal(self.a, self.b))
        if self.family == "cauchy":
            return float(self.a + self.b * rng.standard_cauchy())
        if self.family == "uniform":
            return float(rng.uniform(self.a, self.b))
        return float(rng.gamma(self.a, 1.0 / self.b))


@dataclass
class PriorSpec:
    """Hyperparameters for every parameter family.

    ``alpha_scales`` maps a transition covariate name to its Cauchy scale and
    ``spat_sd`` is the normal sd of every coupling effect unless overridden per
    transition in ``spat_sd_by_transition``.
    """

    beta_sd: float = 10.0
    sigma_shape: float = 1.0
    sigma_rate: float = 0.5
    rho_low: float = 0.0
    rho_high: float = 1.0
    r_en_max: float = 10.0
    r_ob_max: float = 50.0
    r_shared_max: float = 50.0
    alpha0_scale: float = 10.0
    alpha0_shrinkage: bool = False
    alpha0_shrinkage_sd: float = 2.5
    alpha_scales: dict = field(default_factory=dict)
    spat_sd: float = 0.36
    spat_sd_by_transition: dict = field(default_factory=dict)
    constraint: str = "strong"
    eps_rate: float = 0.01
    eps_rho: float = 0.05
    eps_intercept: float = 0.1

    def __post_init__(self):
        for name in ("beta_sd", "sigma_shape", "sigma_rate", "alpha0_scale",
                     "alpha0_shrinkage_sd", "spat_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.rho_low < self.rho_high and self.r_en_max > 0 and self.r_ob_max > 0
                and self.r_shared_max > 0):
            raise ValueError("prior bounds must be ordered")
        if self.constraint not in ("strong", "weak", "none"):
            raise ValueError("constraint must be strong, weak or none")
        if any(not s > 0 for s in self.alpha_scales.values()) or any(
                not s > 0 for s in self.spat_sd_by_transition.values()):
            raise ValueError("prior scales must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown prior keys: {sorted(extra)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def prior_for(self, p: Param) -> Prior:
        if p.kind in ("beta0", "beta0_mean", "beta"):
            return Prior("normal", 0.0, self.beta_sd)
        if p.kind == "sigma":
            return Prior("gamma", self.sigma_shape, self.sigma_rate)
        if p.kind == "rho":
            return Prior("uniform", self.rho_low, self.rho_high)
        if p.kind == "r":
            top = {"en": self.r_en_max, "ob": self.r_ob_max, "shared": self.r_shared_max}[p.part]
            return Prior("uniform", 0.0, top)
        if p.kind == "alpha0":
            if self.alpha0_shrinkage:
                return Prior("normal", 0.0, self.alpha0_shrinkage_sd)
            return Prior("cauchy", 0.0, self.alpha0_scale)
        if p.kind == "alpha":
            name = p.name[p.name.index("[") + 1:-1]
            if name not in self.alpha_scales:
                raise ValueError(f"no Cauchy scale for transition covariate {name!r}")
            return Prior("cauchy", 0.0, self.alpha_scales[name])
        if p.kind == "alpha_spat":
            return Prior("normal", 0.0, self.spat_sd_by_transition.get(p.part, self.spat_sd))
        raise ValueError(f"no prior for parameter kind {p.kind!r}")


def default_priors(data: PanelData, **overrides) -> PriorSpec:
    """Weakly informative defaults scaled to the data.

    Transition covariate effects get Cauchy(0, 2.5 / (2 sd(z))) and coupling
    effects Normal(0, (0.36 / max weight)^2).
    """
    scales = {}
    for q, name in enumerate(data.z_names):
        sd = float(np.std(data.z[:, :, q]))
        if not sd > 0:
            raise ValueError(f"transition covariate {name!r} has zero variance")
        scales[name] = 2.5 / (2.0 * sd)
    wmax = float(data.W.max()) if data.W.size else 0.0
    spat_sd = 0.36 / wmax if wmax > 0 else 0.36
    kw = dict(alpha_scales=scales, spat_sd=spat_sd)
    kw.update(overrides)
    return PriorSpec(**kw)


def _default_model(data: PanelData) -> ModelSpec:
    allz = tuple(data.z_names)
    return ModelSpec(en_covariates=tuple(data.x_names), ob_covariates=tuple(data.x_names),
                     p12_covariates=allz, p21_covariates=allz, p23_covariates=allz,
                     p33_covariates=allz)


def in_support(params: ParamVector, spec: PriorSpec, data: PanelData) -> bool:
    return constraints_satisfied(params.count, data, spec.eps_rate, spec.eps_rho,
                                 spec.constraint, spec.eps_intercept)


def hierarchy_logpdf(params: ParamVector, model: ModelSpec, part: str | None = None) -> float:
    """Sum of log N(beta0_i | beta0_mean, sigma^2) for random intercepts."""
    if not model.random_intercepts:
        return 0.0
    c = params.count
    total = 0.0
    for reg in (("en", "ob") if part is None else (part,)):
        s = getattr(c, f"sigma_{reg}")
        if not s > 0:
            return -math.inf
        z = (getattr(c, f"beta0_{reg}") - getattr(c, f"beta0_mean_{reg}")) / s
        total += float(-0.5 * (z @ z) - z.size * (math.log(s) + 0.5 * LOG_2PI))
    return total


def log_prior(params: ParamVector, spec: PriorSpec, data: PanelData,
              model: ModelSpec | None = None) -> float:
    """Log prior density of all free parameters (truncated; normaliser omitted).

    Returns -inf when a bound or the transmission-ordering constraint fails.
    Random intercepts contribute their hierarchical normal density; their
    means and sds get ordinary component priors.
    """
    model = _default_model(data) if model is None else model
    total = 0.0
    for p in free_parameters(model, data):
        if p.kind == "beta0_i":
            continue
        lp = spec.prior_for(p).logpdf(get_param(params, p))
        if lp == -math.inf:
            return -math.inf
        total += lp
    total += hierarchy_logpdf(params, model)
    if total == -math.inf or not in_support(params, spec, data):
        return -math.inf
    return total


def sample_from_prior(spec: PriorSpec, data: PanelData, model: ModelSpec | None = None,
                      rng: np.random.Generator | None = None,
                      max_tries: int = 10_000) -> ParamVector:
    """A prior draw conditioned on the constraint (rejection, then EN/OB swap)."""
    model = _default_model(data) if model is None else model
    rng = np.random.default_rng() if rng is None else rng
    layout = free_parameters(model, data)
    for _ in range(max_tries):
        v = ParamVector.zeros(data)
        for p in layout:
            if p.kind != "beta0_i":
                set_param(v, p, spec.prior_for(p).sample(rng))
        if model.random_intercepts:
            for reg in ("en", "ob"):
                c = v.count
                b = getattr(c, f"beta0_{reg}")
                b[:] = rng.normal(getattr(c, f"beta0_mean_{reg}"), getattr(c, f"sigma_{reg}"),
                                  size=b.size)
        if in_support(v, spec, data):
            return v
        swapped = swap_regimes(v)
        if in_support(swapped, spec, data) and np.isfinite(log_prior(swapped, spec, data, model)):
            return swapped
    raise RuntimeError(f"no prior draw satisfied the constraints in {max_tries} attempts")


def swap_regimes(v: ParamVector) -> ParamVector:
    """Exchange the endemic and outbreak transmission parameters."""
    w = v.copy()
    c = w.count
    c.beta0_en, c.beta0_ob = c.beta0_ob, c.beta0_en
    c.beta_en, c.beta_ob = c.beta_ob, c.beta_en
    c.rho_en, c.rho_ob = c.rho_ob, c.rho_en
    c.beta0_mean_en, c.beta0_mean_ob = c.beta0_mean_ob, c.beta0_mean_en
    c.sigma_en, c.sigma_ob = c.sigma_ob, c.sigma_en
    return w


__all__ = ["Prior", "PriorSpec", "default_priors", "log_prior", "sample_from_prior",
           "hierarchy_logpdf", "in_support", "swap_regimes", "TRANSITIONS"]
