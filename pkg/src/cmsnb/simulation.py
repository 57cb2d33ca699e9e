"""Synthetic data: forward simulation of the model and the cluster outbreak benchmark."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .model import (LatentStates, ModelSpec, PanelData, ParamVector, StateSpace, TRANSITIONS,
                    free_parameters, linear_predictors, set_param)


def nb_sample(rng: np.random.Generator, mean, r):
    """Negative binomial draws with the given mean and overdispersion."""
    mean = np.asarray(mean, dtype=float)
    return rng.negative_binomial(r, r / (r + mean))


def simulate_from_model(params: ParamVector, skeleton: PanelData, rng: np.random.Generator,
                        model: ModelSpec = ModelSpec()):
    """Jointly simulate states and counts for every area, week by week.

    The first week's state comes from the initial distribution; its count is
    drawn from the state's emission without the autoregressive term (zero in
    absence). Neighbour terms use the simulated previous week.
    Returns (PanelData with the simulated counts, LatentStates).
    """
    space = model.states
    N, T, K = skeleton.N, skeleton.T, space.K
    reg, has_abs, m_en = space.kernel_args()
    init = skeleton.init_dist(space)
    c = params.count
    xb_en = c.beta0_en[:, None] + skeleton.x @ c.beta_en
    xb_ob = c.beta0_ob[:, None] + skeleton.x @ c.beta_ob
    lin = linear_predictors(params.chain, skeleton)
    spat = params.chain.alpha_spat if model.coupled else np.zeros(4)
    S = np.zeros((N, T), dtype=np.int64)
    y = np.zeros((N, T), dtype=np.int64)
    for i in range(N):
        S[i, 0] = rng.choice(K, p=init[i])
    y[:, 0] = _emit(rng, reg[S[:, 0]], np.exp(xb_en[:, 0]), np.exp(xb_ob[:, 0]), c.r_en, c.r_ob)
    row = np.zeros(K)
    for t in range(1, T):
        ob_prev = (reg[S[:, t - 1]] == 2).astype(float)
        nsum = skeleton.W @ ob_prev if model.coupled else np.zeros(N)
        u = rng.random(N)
        for i in range(N):
            e = lin[:, i, t] + spat * nsum[i]
            kern.fill_row(S[i, t - 1], e[0], e[1], e[2], e[3], has_abs, m_en, K, row)
            S[i, t] = kern._draw(row, u[i])
        ly = np.log1p(y[:, t - 1])
        y[:, t] = _emit(rng, reg[S[:, t]], np.exp(xb_en[:, t] + c.rho_en * ly),
                        np.exp(xb_ob[:, t] + c.rho_ob * ly), c.r_en, c.r_ob)
    data = PanelData(y=y, x=skeleton.x, z=skeleton.z, W=skeleton.W, x_names=skeleton.x_names,
                     z_names=skeleton.z_names, initial_state_dist=skeleton.initial_state_dist,
                     area_ids=skeleton.area_ids, transforms=dict(skeleton.transforms))
    return data, LatentStates(S + 1)


def _emit(rng, regime, lam_en, lam_ob, r_en, r_ob):
    out = np.zeros(regime.shape, dtype=np.int64)
    en, ob = regime == 1, regime == 2
    out[en] = nb_sample(rng, lam_en[en], r_en)
    out[ob] = nb_sample(rng, lam_ob[ob], r_ob)
    return out


# ---------------------------------------------------------------------------
# synthetic covariates and neighbour graphs


def synthetic_skeleton(N: int, T: int, rng: np.random.Generator, n_counties: int = 6,
                       n_neighbours: int = 5, grid: int = 12) -> PanelData:
    """Covariates and weights resembling a hospital-catchment surveillance panel.

    x = z = (beds, mobility, newv): ``beds`` is a centred area size in
    hundreds, ``mobility`` a centred county-level percent series (sd about
    20), ``newv`` flags two 8-week windows after new-variant introductions.
    Weights are Bhattacharyya overlaps of synthetic patient-origin
    distributions, keeping each area's ``n_neighbours`` largest.
    """
    from .io import neighbours_from_distributions

    beds = rng.normal(0.0, 1.0, N)
    beds -= beds.mean()
    county = rng.integers(0, n_counties, N)
    tt = np.arange(T)
    mob_c = np.empty((n_counties, T))
    for c in range(n_counties):
        phase = rng.uniform(0, 2 * np.pi)
        e = np.zeros(T)
        for t in range(1, T):
            e[t] = 0.7 * e[t - 1] + rng.normal(0, 6.0)
        mob_c[c] = 22.0 * np.sin(2 * np.pi * tt / 52.0 + phase) + e
    mob = mob_c[county]
    mob -= mob.mean()
    newv = np.zeros(T)
    for start in (int(0.35 * T), int(0.8 * T)):
        newv[start:start + 8] = 1.0
    x = np.stack([np.repeat(beds[:, None], T, axis=1), mob, np.tile(newv, (N, 1))], axis=2)
    locs = rng.uniform(0, 1, (N, 2))
    cells = (np.stack(np.meshgrid(np.arange(grid), np.arange(grid)), -1).reshape(-1, 2) + 0.5) / grid
    d2 = ((locs[:, None, :] - cells[None, :, :]) ** 2).sum(-1)
    logits = -d2 / (2 * 0.12 ** 2)
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    W = neighbours_from_distributions(p, n_neighbours)
    names = ("beds", "mob", "newv")
    return PanelData(y=np.zeros((N, T), dtype=np.int64), x=x, z=x.copy(), W=W, x_names=names,
                     z_names=names)


def cluster_graph(n_clusters: int, cluster_size: int, weight: float = 1.0) -> np.ndarray:
    """Every area neighbours every other area in its cluster with a common weight."""
    N = n_clusters * cluster_size
    W = np.zeros((N, N))
    for c in range(n_clusters):
        sl = slice(c * cluster_size, (c + 1) * cluster_size)
        W[sl, sl] = weight
    np.fill_diagonal(W, 0.0)
    return W


def params_from_named(values: dict, model: ModelSpec, data: PanelData) -> ParamVector:
    """Build a ParamVector from ``{parameter name: value}``; missing free parameters raise."""
    v = ParamVector.zeros(data)
    layout = free_parameters(model, data)
    missing = [p.name for p in layout if p.name not in values and p.kind != "beta0_i"]
    if missing:
        raise ValueError(f"missing parameter values: {missing}")
    for p in layout:
        if p.name in values:
            set_param(v, p, values[p.name])
    return v


def recovery_scenario(data: PanelData):
    """Truth for the parameter-recovery design: coupled outbreak emergence and persistence.

    Returns (ModelSpec, {name: value}). Emission covariates are beds and
    mobility; shared overdispersion; no random intercepts.
    """
    model = ModelSpec(en_covariates=("beds", "mob"), ob_covariates=("beds", "mob"),
                      p12_covariates=("beds",), p21_covariates=("beds", "mob"),
                      p23_covariates=("mob", "newv"), p33_covariates=("mob",),
                      spatial=("23", "33"), shared_overdispersion=True)
    truth = {"beta0_en": 0.0, "beta_en[beds]": 0.17, "beta_en[mob]": 0.003, "rho_en": 0.65,
             "beta0_ob": 0.78, "beta_ob[beds]": 0.06, "beta_ob[mob]": 0.007, "rho_ob": 0.75,
             "r": 10.0, "alpha12_0": -0.76, "alpha12[beds]": 0.45, "alpha21_0": -3.6,
             "alpha21[beds]": -0.9, "alpha21[mob]": -0.035, "alpha23_0": -4.15,
             "alpha23[mob]": 0.025, "alpha23[newv]": 2.5, "alpha23_spat": 1.15,
             "alpha33_0": 2.0, "alpha33[mob]": 0.025, "alpha33_spat": 0.45}
    return model, truth


def selection_scenario(spatial: bool):
    """Truth for the WAIC model-selection design (coupled in every transition or none)."""
    base = dict(en_covariates=("beds", "mob"), ob_covariates=("beds", "mob"),
                p12_covariates=("beds",), p21_covariates=("beds",),
                p23_covariates=("mob", "newv"), p33_covariates=("mob",),
                shared_overdispersion=True)
    truth = {"beta0_en": 0.0, "beta_en[beds]": 0.1, "beta_en[mob]": 0.0, "rho_en": 0.5,
             "beta0_ob": 0.75, "beta_ob[beds]": 0.05, "beta_ob[mob]": 0.007, "rho_ob": 0.75,
             "r": 10.0, "alpha12_0": -1.0, "alpha12[beds]": 0.5, "alpha21_0": -3.0,
             "alpha21[beds]": -1.0, "alpha23_0": -3.5, "alpha23[mob]": 0.04,
             "alpha23[newv]": 1.0, "alpha33_0": 2.5, "alpha33[mob]": 0.02}
    if spatial:
        truth.update({"alpha12_spat": 0.25, "alpha21_spat": -0.25, "alpha23_0": -4.0,
                      "alpha23_spat": 1.2, "alpha33_0": 2.0, "alpha33_spat": 0.5})
        return ModelSpec(spatial=TRANSITIONS, **base), truth
    return ModelSpec(spatial=(), **base), truth


# ---------------------------------------------------------------------------
# cluster benchmark


@dataclass
class BenchmarkConfig:
    n_clusters: int = 5
    cluster_size: int = 6
    window: int = 15
    n_cycles: int = 4
    start_jitter: int = 4
    absence_prob: float = 0.4
    absence_len: int = 7
    r: float = 10.0
    en_coef: tuple = (0.0, 0.1, 0.5)
    ob_coef: tuple = (0.75, 0.05, 0.75)
    structure_seed: int = 0
    count_seed: int = 1

    @property
    def N(self) -> int:
        return self.n_clusters * self.cluster_size

    @property
    def T(self) -> int:
        return 2 * self.window * self.n_cycles


@dataclass
class BenchmarkTruth:
    """True collapsed states (1 absence, 2 endemic, 3 outbreak) and outbreak timing.

    ``starts[i]`` and ``ends[i]`` list each outbreak's first and last week
    (0-based, inclusive) in area i.
    """

    states: np.ndarray
    starts: list
    ends: list
    cluster: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def outbreak(self) -> np.ndarray:
        return self.states == 3


def benchmark_structure(cfg: BenchmarkConfig, rng: np.random.Generator) -> BenchmarkTruth:
    N, T, w = cfg.N, cfg.T, cfg.window
    states = np.full((N, T), 2, dtype=np.int64)
    starts, ends = [[] for _ in range(N)], [[] for _ in range(N)]
    mid = (w - cfg.absence_len) // 2
    for i in range(N):
        for c in range(cfg.n_cycles):
            e0 = 2 * c * w
            if rng.random() < cfg.absence_prob:
                states[i, e0 + mid:e0 + mid + cfg.absence_len] = 1
            o0 = e0 + w
            s = o0 + int(rng.integers(0, cfg.start_jitter))
            states[i, s:o0 + w] = 3
            starts[i].append(s)
            ends[i].append(o0 + w - 1)
    cluster = np.repeat(np.arange(cfg.n_clusters), cfg.cluster_size)
    return BenchmarkTruth(states, starts, ends, cluster)


def simulate_cluster_benchmark(cfg: BenchmarkConfig = BenchmarkConfig(),
                               rng: np.random.Generator | None = None):
    """The fixed-outbreak cluster benchmark.

    Outbreak timing and absence periods come from a stream seeded by
    ``structure_seed``; beds and counts from a stream seeded by
    ``count_seed``, so the truth does not depend on the count stream. When
    ``rng`` is given both seeds are drawn from it. Returns (PanelData, truth);
    the panel's only covariate is ``beds`` and W links areas within a cluster.
    """
    if rng is not None:
        s1, s2 = rng.integers(0, 2**63 - 1, size=2)
    else:
        s1, s2 = cfg.structure_seed, cfg.count_seed
    truth = benchmark_structure(cfg, np.random.default_rng(s1))
    crng = np.random.default_rng(s2)
    N, T = cfg.N, cfg.T
    beds = crng.normal(0.0, 1.0, N)
    beds -= beds.mean()
    y = np.zeros((N, T), dtype=np.int64)
    b_en, b_ob = cfg.en_coef, cfg.ob_coef
    for t in range(T):
        prev = np.log1p(y[:, t - 1]) if t > 0 else np.zeros(N)
        lam_en = np.exp(b_en[0] + b_en[1] * beds + b_en[2] * prev)
        lam_ob = np.exp(b_ob[0] + b_ob[1] * beds + b_ob[2] * prev)
        y[:, t] = _emit(crng, truth.states[:, t] - 1, lam_en, lam_ob, cfg.r, cfg.r)
    x = np.repeat(beds[:, None], T, axis=1)[:, :, None]
    data = PanelData(y=y, x=x, z=np.zeros((N, T, 0)), W=cluster_graph(cfg.n_clusters,
                                                                      cfg.cluster_size),
                     x_names=("beds",), z_names=())
    return data, truth


def benchmark_models():
    """(spatial, non-spatial) fitting models for the benchmark."""
    common = dict(en_covariates=("beds",), ob_covariates=("beds",))
    return (ModelSpec(spatial=("23",), **common), ModelSpec(spatial=(), **common))
