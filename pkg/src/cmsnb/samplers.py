"""Hybrid Gibbs sampler: scalar adaptive Metropolis for parameters, iFFBS for states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .draws import PosteriorDraws, WaicAccumulator
from .model import (LatentStates, ModelSpec, PanelData, ParamVector, StateSpace, emission_table,
                    free_parameters, get_param, joint_loglik, linear_predictors, set_param,
                    tidx, to_flat)
from .priors import PriorSpec, hierarchy_logpdf, in_support, log_prior, swap_regimes


class FilterDegeneracyError(RuntimeError):
    """All filtered weights vanished; usually an impossible observation."""

    def __init__(self, area, t):
        super().__init__(f"filter degenerated at area {area}, time {t}")
        self.area, self.t = area, t


@dataclass
class SamplerConfig:
    n_chains: int = 3
    n_iterations: int = 200_000
    burn_in: int = 50_000
    thin: int = 10
    seed: int = 0
    target_accept: float = 0.44
    adapt_interval: int = 50
    adapt_decay: float = 0.5
    state_sampler: str = "iffbs"
    waic: str = "partial"
    fixed_params: ParamVector | None = None
    max_init_tries: int = 10_000
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("need 0 <= burn_in < n_iterations")
        if self.n_chains < 1 or self.thin < 1 or self.adapt_interval < 1:
            raise ValueError("n_chains, thin and adapt_interval must be positive")
        if self.state_sampler not in ("iffbs", "single"):
            raise ValueError("state_sampler must be 'iffbs' or 'single'")
        if self.waic not in ("partial", "conditional", "off"):
            raise ValueError("waic must be 'partial', 'conditional' or 'off'")

    def echo(self) -> dict:
        return {"n_chains": self.n_chains, "n_iterations": self.n_iterations,
                "burn_in": self.burn_in, "thin": self.thin, "seed": self.seed,
                "target_accept": self.target_accept, "adapt_interval": self.adapt_interval,
                "adapt_decay": self.adapt_decay, "state_sampler": self.state_sampler,
                "waic": self.waic, "fixed_params": self.fixed_params is not None}


# ---------------------------------------------------------------------------
# kernel plumbing


@dataclass
class KernelInputs:
    em: np.ndarray
    lin: np.ndarray
    spat: np.ndarray
    W: np.ndarray
    rev_ptr: np.ndarray
    rev_idx: np.ndarray
    init: np.ndarray
    reg: np.ndarray
    has_abs: int
    m_en: int
    K: int
    coupled: bool


def reverse_neighbours(W: np.ndarray):
    """CSR arrays listing, for every area i, the areas j with i in NE(j)."""
    lists = [np.flatnonzero(W[:, i]) for i in range(W.shape[0])]
    ptr = np.zeros(W.shape[0] + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    idx = np.concatenate(lists).astype(np.int64) if lists else np.zeros(0, np.int64)
    return ptr, idx


def kernel_inputs(data: PanelData, params: ParamVector, model: ModelSpec) -> KernelInputs:
    space = model.states
    reg, has_abs, m_en = space.kernel_args()
    ptr, idx = reverse_neighbours(data.W)
    spat = np.asarray(params.chain.alpha_spat, dtype=float).copy()
    if not model.coupled:
        spat[:] = 0.0
    return KernelInputs(emission_table(params.count, data), linear_predictors(params.chain, data),
                        spat, data.W, ptr, idx, np.ascontiguousarray(data.init_dist(space)),
                        reg, has_abs, m_en, space.K, model.coupled)


def _filter_area(i, S, ki: KernelInputs):
    T = S.shape[1]
    R = np.zeros((T, 7))
    fp = np.zeros(T)
    filt = np.zeros((T, ki.K))
    lpd = np.zeros(T)
    rev = ki.rev_idx[ki.rev_ptr[i]:ki.rev_ptr[i + 1]]
    nsum = kern.current_nsum(S, ki.reg, ki.W, ki.coupled)
    bad = kern.forward_area(i, S, nsum, ki.em, ki.lin, ki.spat, ki.W, rev, ki.init[i], ki.reg,
                            ki.has_abs, ki.m_en, ki.K, R, fp, filt, lpd, ki.coupled)
    if bad >= 0:
        raise FilterDegeneracyError(i, bad)
    P = np.zeros((T, ki.K, ki.K))
    for t in range(1, T):
        kern.rows_to_matrix(R[t], ki.has_abs, ki.m_en, ki.K, P[t])
    return filt, P, fp, lpd, R


@dataclass
class FilteredProbs:
    """Filtered probabilities ``probs[t, k]`` for one area plus the pieces the
    backward pass needs (transition matrices, relative forward products and
    one-step predictive log densities)."""

    probs: np.ndarray
    transitions: np.ndarray
    forward_product: np.ndarray
    predictive_logdens: np.ndarray
    row_params: np.ndarray
    kernel_args: tuple


def forward_filter_area(i: int, data: PanelData, states: LatentStates, params: ParamVector,
                        model: ModelSpec = ModelSpec()) -> FilteredProbs:
    """Filtered probabilities of area i given every other area's current states."""
    ki = kernel_inputs(data, params, model)
    filt, P, fp, lpd, R = _filter_area(i, states.codes().copy(), ki)
    return FilteredProbs(filt, P, fp, lpd, R, (ki.has_abs, ki.m_en))


def iffbs_sample_area(i: int, data: PanelData, states: LatentStates, params: ParamVector,
                      rng: np.random.Generator, model: ModelSpec = ModelSpec()) -> np.ndarray:
    """An exact draw of area i's whole state sequence from its full conditional (labels)."""
    f = forward_filter_area(i, data, states, params, model)
    out = np.zeros(data.T, dtype=np.int64)
    kern.backward_sample(f.probs, f.row_params, *f.kernel_args, rng.random(data.T), out)
    return out + 1


def iffbs_sequence_logprob(seq, f: FilteredProbs) -> float:
    """log probability that the backward pass returns ``seq`` (labels)."""
    s = np.asarray(seq) - 1
    T = s.size
    with np.errstate(divide="ignore"):
        lp = math.log(f.probs[T - 1, s[T - 1]]) if f.probs[T - 1, s[T - 1]] > 0 else -math.inf
        for t in range(T - 2, -1, -1):
            w = f.transitions[t + 1, :, s[t + 1]] * f.probs[t]
            tot = w.sum()
            if not tot > 0 or w[s[t]] == 0:
                return -math.inf
            lp += math.log(w[s[t]] / tot)
    return lp


# ---------------------------------------------------------------------------
# initialisation


def init_latent_chains(data: PanelData, rng: np.random.Generator,
                       space: StateSpace = StateSpace(), stay: float = 0.8) -> LatentStates:
    """Starting states from a chain over the count states only (no absence).

    Exit rows stay with probability ``stay``; corridor rows are deterministic.
    """
    K = space.K
    counts = np.arange(space.n_absence + 1, K + 1)
    en_last = space.endemic_states[-1]
    ob_first, ob_last = space.outbreak_states[0], space.outbreak_states[-1]
    en_first = space.endemic_states[0]
    S = np.zeros((data.N, data.T), dtype=np.int64)
    S[:, 0] = rng.choice(counts, size=data.N)
    u = rng.random((data.N, data.T))
    for t in range(1, data.T):
        prev = S[:, t - 1]
        nxt = prev + 1
        nxt = np.where(prev == en_last, np.where(u[:, t] < stay, en_last, ob_first), nxt)
        nxt = np.where(prev == ob_last, np.where(u[:, t] < stay, ob_last, en_first), nxt)
        S[:, t] = nxt
    return LatentStates(S)


def random_start(data: PanelData, model: ModelSpec, spec: PriorSpec, rng: np.random.Generator,
                 max_tries: int = 10_000) -> ParamVector:
    """A dispersed starting point inside the constrained parameter space.

    Values are drawn from moderate ranges rather than the wide priors so the
    first likelihood evaluations are well behaved. Regime intercepts are
    jittered around the lower and upper count levels so that the first state
    sweep does not hand every week to one regime. Failures are retried and
    order-fixed by swapping the endemic and outbreak blocks.
    """
    layout = free_parameters(model, data)
    xsd = np.std(data.x, axis=(0, 1)) if data.x.shape[2] else np.zeros(0)
    zsd = np.std(data.z, axis=(0, 1)) if data.z.shape[2] else np.zeros(0)
    # typical endemic and outbreak count levels
    pos = data.y[data.y > 0]
    level = dict(zip(("en", "ob"), np.quantile(pos, [0.3, 0.9]) if pos.size else (1.0, 2.0)))
    for attempt in range(max_tries):
        v = ParamVector.zeros(data)
        intercepts = []
        for p in layout:
            if p.kind in ("beta0", "beta0_mean"):
                intercepts.append(p)
                continue
            elif p.kind == "sigma":
                val = rng.uniform(0.1, 1.0)
            elif p.kind == "beta0_i":
                continue
            elif p.kind == "beta":
                val = rng.normal(0.0, 0.1 / max(xsd[p.index], 1e-12))
            elif p.kind == "rho":
                val = rng.uniform(0.1, 0.9)
            elif p.kind == "r":
                top = {"en": spec.r_en_max, "ob": spec.r_ob_max, "shared": spec.r_shared_max}
                val = rng.uniform(1.0, min(10.0, top[p.part]))
            elif p.kind == "alpha0":
                val = rng.uniform(-3.0, 1.0) if p.part != "33" else rng.uniform(0.0, 3.0)
            elif p.kind == "alpha":
                val = rng.normal(0.0, 0.2 / max(zsd[p.index], 1e-12))
            else:
                val = rng.uniform(-0.5, 0.5) * spec.spat_sd_by_transition.get(p.part, spec.spat_sd)
            set_param(v, p, val)
        # intercepts put each regime's stationary mean near its count level
        for p in intercepts:
            rho = v.count.rho_en if p.part == "en" else v.count.rho_ob
            m = level[p.part]
            set_param(v, p, np.log(m) - rho * np.log1p(m) + rng.uniform(-0.5, 0.5))
        if model.random_intercepts:
            c = v.count
            c.beta0_en[:] = c.beta0_mean_en + c.sigma_en * rng.normal(size=data.N)
            c.beta0_ob[:] = c.beta0_mean_ob + c.sigma_ob * rng.normal(size=data.N)
        for cand in (v, swap_regimes(v)):
            if np.isfinite(log_prior(cand, spec, data, model)):
                return cand
    raise RuntimeError(f"could not find a valid starting point in {max_tries} attempts")


# ---------------------------------------------------------------------------
# adaptive random-walk Metropolis


@dataclass
class AdaptState:
    """Per-coordinate proposal log-sds adapted toward a target acceptance rate.

    Every ``interval`` iterations each log-sd moves by
    ``round ** -decay * (acceptance - target)``; ``frozen`` stops adaptation.
    """

    log_sd: np.ndarray
    target: float = 0.44
    interval: int = 50
    decay: float = 0.5
    accepted: np.ndarray = None
    rounds: int = 0
    count: int = 0
    frozen: bool = False

    def __post_init__(self):
        self.log_sd = np.asarray(self.log_sd, dtype=float).copy()
        if self.accepted is None:
            self.accepted = np.zeros(self.log_sd.shape, dtype=np.int64)

    @property
    def sd(self) -> np.ndarray:
        return np.exp(self.log_sd)

    def record(self, j: int, accepted: bool) -> None:
        self.accepted[j] += int(accepted)

    def end_iteration(self) -> None:
        if self.frozen:
            return
        self.count += 1
        if self.count == self.interval:
            self.rounds += 1
            rate = self.accepted / self.interval
            self.log_sd += self.rounds ** -self.decay * (rate - self.target)
            self.accepted[:] = 0
            self.count = 0


def metropolis_scalar(x: float, logp_x: float, logpost, sd: float, rng: np.random.Generator):
    """One random-walk Metropolis update of a scalar. Returns (x, logp, accepted)."""
    prop = x + sd * rng.standard_normal()
    lp = logpost(prop)
    if math.log(rng.random()) < lp - logp_x:
        return prop, lp, True
    return x, logp_x, False


def adaptive_rwm_step(j: int, current: ParamVector, states: LatentStates, data: PanelData,
                      spec: PriorSpec, adapt: AdaptState, rng: np.random.Generator,
                      model: ModelSpec = ModelSpec()):
    """Update free parameter ``j`` against the full log posterior.

    This reference path re-evaluates the whole joint likelihood; ``gibbs_run``
    uses cached local likelihood differences instead. Returns
    (new ParamVector, accepted).
    """
    p = free_parameters(model, data)[j]
    work = current.copy()

    def logpost(val):
        set_param(work, p, val)
        lpr = log_prior(work, spec, data, model)
        if lpr == -math.inf:
            return -math.inf
        return lpr + joint_loglik(data, states, work, model.states)

    x0 = get_param(current, p)
    lp0 = logpost(x0)
    x, _, acc = metropolis_scalar(x0, lp0, logpost, float(np.exp(adapt.log_sd[j])), rng)
    adapt.record(j, acc)
    set_param(work, p, x)
    return work, acc


def initial_log_sd(layout, data: PanelData) -> np.ndarray:
    xsd = np.std(data.x, axis=(0, 1)) if data.x.shape[2] else np.zeros(0)
    zsd = np.std(data.z, axis=(0, 1)) if data.z.shape[2] else np.zeros(0)
    out = []
    for p in layout:
        if p.kind in ("beta0", "beta0_i", "beta0_mean", "sigma"):
            s = 0.1
        elif p.kind == "beta":
            s = 0.1 / max(xsd[p.index], 1e-12)
        elif p.kind == "rho":
            s = 0.05
        elif p.kind == "r":
            s = 1.0
        elif p.kind == "alpha":
            s = 0.3 / max(zsd[p.index], 1e-12)
        else:
            s = 0.3
        out.append(math.log(s))
    return np.array(out)


# ---------------------------------------------------------------------------
# the Gibbs chain


class _Cells:
    __slots__ = ("y", "ly", "x", "areas", "outcome", "z", "nsum")


class _ChainState:
    """Current parameters, states and cached log-likelihood pieces of one chain."""

    def __init__(self, data: PanelData, model: ModelSpec, spec: PriorSpec, v: ParamVector,
                 S: np.ndarray):
        self.data, self.model, self.spec = data, model, spec
        space = model.states
        self.reg, self.has_abs, self.m_en = space.kernel_args()
        self.K = space.K
        self.en_first = self.has_abs
        self.en_last = self.has_abs + self.m_en - 1
        self.ob_first = self.has_abs + self.m_en
        self.ly = data.log_prev
        self.v = v
        self.S = S
        self.layout = free_parameters(model, data)
        self.prior_of = [spec.prior_for(p) if p.kind != "beta0_i" else None for p in self.layout]
        self.affects = [self._affected(p) for p in self.layout]
        self.regather()

    def _affected(self, p):
        if p.kind in ("beta0", "beta", "rho"):
            return ("em", 1 if p.part == "en" else 2)
        if p.kind == "beta0_i":
            return ("em_area", 1 if p.part == "en" else 2)
        if p.kind == "r":
            return ("em", {"en": 1, "ob": 2, "shared": 0}[p.part])
        if p.kind in ("beta0_mean", "sigma"):
            return ("hier", None)
        lk = p.part
        if lk == "12":
            return ("row", 0)
        if lk == "33":
            return ("row", 3)
        return ("row", 2 if self.has_abs else 4)

    def regather(self):
        S, d = self.S, self.data
        prev, cur = S[:, :-1], S[:, 1:]
        rc = self.reg[cur]
        ly, y, x, z = self.ly[:, 1:], d.y[:, 1:], d.x[:, 1:], d.z[:, 1:]
        areas = np.broadcast_to(np.arange(d.N)[:, None], cur.shape)
        self.em_cells = {}
        for r in (1, 2):
            m = rc == r
            c = _Cells()
            c.y, c.ly, c.x, c.areas = (y[m].astype(float), ly[m], np.ascontiguousarray(x[m]),
                                       np.ascontiguousarray(areas[m]))
            self.em_cells[r] = c
        nsum = kern.neighbour_sums(S, self.reg, d.W)[:, 1:] if self.model.coupled else \
            np.zeros(cur.shape)
        self.row_cells = {}
        groups = []
        if self.has_abs:
            groups.append((0, prev == 0, (cur == self.en_first).astype(np.int64)))
            out2 = np.where(cur == 0, 1, np.where(cur == self.ob_first, 2, 0))
            groups.append((2, prev == self.en_last, out2))
        else:
            groups.append((4, prev == self.en_last, (cur == self.ob_first).astype(np.int64)))
        groups.append((3, prev == self.K - 1, (cur == self.K - 1).astype(np.int64)))
        for kind, m, outcome in groups:
            c = _Cells()
            c.outcome = np.ascontiguousarray(outcome[m])
            c.z = np.ascontiguousarray(z[m])
            c.nsum = np.ascontiguousarray(nsum[m])
            self.row_cells[kind] = c
        self.ll_mean = {r: self.em_mean(r) for r in (1, 2)}
        self.ll_count = {r: self.em_count(r) for r in (1, 2)}
        self.ll_row = {k: self.row_ll(k) for k in self.row_cells}

    def _regime_args(self, r):
        c = self.v.count
        if r == 1:
            return c.beta0_en, c.beta_en, c.rho_en, c.r_en
        return c.beta0_ob, c.beta_ob, c.rho_ob, c.r_ob

    def em_mean(self, r, only=-1):
        g = self.em_cells[r]
        b0, b, rho, rr = self._regime_args(r)
        return kern.regime_mean_part(g.y, g.ly, g.x, g.areas, b0, b, rho, rr, only, self.data.N)

    def em_count(self, r):
        return kern.regime_count_part(self.em_cells[r].y, self._regime_args(r)[3])

    def em_ll(self, r, only=-1):
        """Full NB log-likelihood of one regime's cells (optionally one area)."""
        m = self.em_mean(r, only)
        if only >= 0:
            return float(m[only])
        return float(m.sum()) + self.em_count(r)

    def row_ll(self, kind):
        ch, g = self.v.chain, self.row_cells[kind]
        sp = ch.alpha_spat
        if kind == 0:
            k = tidx("12")
            return kern.rows_loglik(0, g.outcome, g.z, g.nsum, ch.alpha0[k], ch.alpha[k], sp[k],
                                    0.0, ch.alpha[k], 0.0)
        if kind == 3:
            k = tidx("33")
            return kern.rows_loglik(3, g.outcome, g.z, g.nsum, ch.alpha0[k], ch.alpha[k], sp[k],
                                    0.0, ch.alpha[k], 0.0)
        a, b = tidx("21"), tidx("23")
        return kern.rows_loglik(kind, g.outcome, g.z, g.nsum, ch.alpha0[a], ch.alpha[a], sp[a],
                                ch.alpha0[b], ch.alpha[b], sp[b])

    def _local(self, j):
        """Recomputed likelihood pieces touched by parameter j, keyed like the caches."""
        what, which = self.affects[j]
        p = self.layout[j]
        if what == "em":
            regs = (1, 2) if which == 0 else (which,)
            out = {("mean", r): self.em_mean(r) for r in regs}
            if p.kind == "r":
                out.update({("count", r): self.em_count(r) for r in regs})
            return out
        if what == "em_area":
            return {("area", which, p.index): self.em_mean(which, p.index)[p.index]}
        if what == "row":
            return {("row", which): self.row_ll(which)}
        return {}

    def _cached(self, key):
        if key[0] == "mean":
            return self.ll_mean[key[1]].sum()
        if key[0] == "count":
            return self.ll_count[key[1]]
        if key[0] == "area":
            return self.ll_mean[key[1]][key[2]]
        return self.ll_row[key[1]]

    def _store(self, key, val):
        if key[0] == "mean":
            self.ll_mean[key[1]] = val
        elif key[0] == "count":
            self.ll_count[key[1]] = val
        elif key[0] == "area":
            self.ll_mean[key[1]][key[2]] = val
        else:
            self.ll_row[key[1]] = val

    def _hier(self, p):
        if not self.model.random_intercepts:
            return 0.0
        if p.kind in ("beta0_i", "beta0_mean", "sigma"):
            return hierarchy_logpdf(self.v, self.model, p.part)
        return 0.0

    def update_param(self, j: int, z: float, logu: float, sd: float) -> bool:
        p = self.layout[j]
        old = get_param(self.v, p)
        new = old + sd * z
        prior = self.prior_of[j]
        lp_old = 0.0 if prior is None else prior.logpdf(old)
        lp_new = 0.0 if prior is None else prior.logpdf(new)
        if lp_new == -math.inf:
            return False
        h_old = self._hier(p)
        set_param(self.v, p, new)
        if p.kind in ("beta0", "beta0_i", "beta0_mean", "beta", "rho") and \
                not in_support(self.v, self.spec, self.data):
            set_param(self.v, p, old)
            return False
        h_new = self._hier(p)
        after = self._local(j)
        delta = lp_new - lp_old + h_new - h_old
        for key, val in after.items():
            new_ll = val.sum() if key[0] == "mean" else val
            delta += new_ll - self._cached(key)
        if logu < delta:
            for key, val in after.items():
                self._store(key, val)
            return True
        set_param(self.v, p, old)
        return False


def _store_dtype(K):
    return np.int8 if K < 127 else np.int16


def run_chain(data: PanelData, spec: PriorSpec, config: SamplerConfig, model: ModelSpec,
              seed_seq: np.random.SeedSequence, progress=None):
    """One chain; returns (params, states, last_states, waic accumulator, acceptance)."""
    rng = np.random.default_rng(seed_seq)
    space = model.states
    fixed = config.fixed_params is not None
    if fixed:
        v = config.fixed_params.copy()
    else:
        v = random_start(data, model, spec, rng, config.max_init_tries)
    S = init_latent_chains(data, rng, space).codes().copy()
    chain = _ChainState(data, model, spec, v, S)
    layout = chain.layout
    P = len(layout)
    adapt = AdaptState(initial_log_sd(layout, data), config.target_accept, config.adapt_interval,
                       config.adapt_decay)
    Q, M = config.n_iterations, config.burn_in
    n_keep = Q - M
    dtype = _store_dtype(space.K)
    kept = np.zeros((n_keep, P))
    n_store = (n_keep + config.thin - 1) // config.thin
    stored = np.zeros((n_store, data.N, data.T), dtype=dtype)
    last = np.zeros((n_keep, data.N), dtype=dtype)
    waic = WaicAccumulator.empty((data.N, data.T)) if config.waic != "off" else None
    acc_total = np.zeros(P, dtype=np.int64)
    ptr, idx = reverse_neighbours(data.W)
    init = np.ascontiguousarray(data.init_dist(space))
    reg, has_abs, m_en = chain.reg, chain.has_abs, chain.m_en
    sweep_lpd = np.zeros((data.N, data.T))
    for it in range(Q):
        if it == M:
            adapt.frozen = True
        if not fixed:
            z = rng.standard_normal(P)
            logu = np.log(rng.random(P))
            sd = adapt.sd
            for j in range(P):
                a = chain.update_param(j, z[j], logu[j], sd[j])
                adapt.record(j, a)
                if it >= M:
                    acc_total[j] += a
            adapt.end_iteration()
        em = emission_table(v.count, data)
        lin = linear_predictors(v.chain, data)
        spat = v.chain.alpha_spat if model.coupled else np.zeros(4)
        u = rng.random((data.N, data.T))
        if config.state_sampler == "iffbs":
            bad = kern.iffbs_sweep(S, em, lin, spat, data.W, ptr, idx, init, reg, has_abs,
                                   m_en, u, model.coupled, sweep_lpd)
            if bad[0] >= 0:
                raise FilterDegeneracyError(*bad)
        else:
            kern.single_site_sweep(S, em, lin, spat, data.W, init, reg, has_abs, m_en, u,
                                   model.coupled)
        if not fixed:
            chain.regather()
        if it >= M:
            k = it - M
            kept[k] = to_flat(v, layout)
            last[k] = S[:, -1] + 1
            if k % config.thin == 0:
                stored[k // config.thin] = S + 1
            if waic is not None:
                if config.waic == "partial" and config.state_sampler == "iffbs":
                    # densities from each area's own filter inside the sweep
                    ll = sweep_lpd
                elif config.waic == "partial":
                    ll = kern.predictive_logdens(S, em, lin, spat, data.W, ptr, idx, init, reg,
                                                 has_abs, m_en, model.coupled)
                else:
                    ll = np.take_along_axis(em, reg[S][:, :, None], axis=2)[:, :, 0]
                waic.update(ll)
        if progress is not None:
            progress(it)
    rate = acc_total / max(n_keep, 1)
    return kept, stored, last, waic, rate


def _run_chain_star(args):
    return run_chain(*args)


def gibbs_run(data: PanelData, spec: PriorSpec, config: SamplerConfig,
              rng: np.random.Generator | None = None, model: ModelSpec = ModelSpec(),
              progress=None) -> PosteriorDraws:
    """Run ``config.n_chains`` independent chains and collect their kept draws.

    Each iteration updates every free parameter by adaptive scalar Metropolis,
    then every area's state sequence (iFFBS, or FFBS for areas no other area
    listens to). Chains are seeded from ``config.seed`` unless ``rng`` is given.
    """
    root = np.random.SeedSequence(config.seed if rng is None else
                                  int(rng.integers(0, 2**63 - 1)))
    seeds = root.spawn(config.n_chains)
    jobs = [(data, spec, config, model, s) for s in seeds]
    if config.n_jobs > 1 and config.n_chains > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.n_chains)) as ex:
            results = list(ex.map(_run_chain_star, jobs))
    else:
        results = [run_chain(*job, progress=progress) for job in jobs]
    layout = free_parameters(model, data)
    from .config import model_to_dict
    echo = {"sampler": config.echo(), "model": model_to_dict(model), "priors": spec.to_dict()}
    return PosteriorDraws(
        param_names=tuple(p.name for p in layout),
        params=[r[0] for r in results],
        states=[r[1] for r in results],
        last_states=[r[2] for r in results],
        thin=config.thin,
        config=echo,
        waic=[r[3] for r in results if r[3] is not None],
        acceptance=[r[4] for r in results],
    )


def single_site_run(data: PanelData, params: ParamVector, model: ModelSpec, n_iter: int,
                    rng: np.random.Generator, init: LatentStates | None = None) -> np.ndarray:
    """Fixed-parameter one-at-a-time state Gibbs sampler (test utility).

    Only sensible without clone states, where single-site moves can reach
    every configuration. Returns (n_iter, N, T) labels.
    """
    ki = kernel_inputs(data, params, model)
    S = (init.codes() if init is not None else
         init_latent_chains(data, rng, model.states).codes()).copy()
    out = np.zeros((n_iter, data.N, data.T), dtype=np.int64)
    for m in range(n_iter):
        kern.single_site_sweep(S, ki.em, ki.lin, ki.spat, ki.W, ki.init, ki.reg, ki.has_abs,
                               ki.m_en, rng.random((data.N, data.T)), ki.coupled)
        out[m] = S + 1
    return out


def iffbs_run(data: PanelData, params: ParamVector, model: ModelSpec, n_iter: int,
              rng: np.random.Generator, init: LatentStates | None = None) -> np.ndarray:
    """Fixed-parameter iFFBS state sampler; returns (n_iter, N, T) labels."""
    ki = kernel_inputs(data, params, model)
    S = (init.codes() if init is not None else
         init_latent_chains(data, rng, model.states).codes()).copy()
    out = np.zeros((n_iter, data.N, data.T), dtype=np.int64)
    for m in range(n_iter):
        bad = kern.iffbs_sweep(S, ki.em, ki.lin, ki.spat, ki.W, ki.rev_ptr, ki.rev_idx, ki.init,
                               ki.reg, ki.has_abs, ki.m_en, rng.random((data.N, data.T)),
                               ki.coupled, np.zeros((data.N, data.T)))
        if bad[0] >= 0:
            raise FilterDegeneracyError(*bad)
        out[m] = S + 1
    return out
