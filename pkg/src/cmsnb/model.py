"""Generative model: state space, data, parameters and likelihood pieces.

Expanded latent states are labelled ``1..K`` in every public array (state 1 is
absence when the model has an absence state). Time indices are 0-based array
columns; column 0 carries no emission and no transition term.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import _kernels as kern

TRANSITIONS = ("12", "21", "23", "33")
ABSENCE, ENDEMIC, OUTBREAK = 1, 2, 3


@dataclass(frozen=True)
class StateSpace:
    """CMSNB(1, m_EN, m_OB) expanded state space.

    With ``absence=False`` the absence state is dropped and the model is a
    plain endemic/outbreak switching model (use one clone each for the
    two-state variant).
    """

    n_endemic: int = 2
    n_outbreak: int = 4
    absence: bool = True

    def __post_init__(self):
        if self.n_endemic < 1 or self.n_outbreak < 1:
            raise ValueError("each count regime needs at least one state")

    @property
    def n_absence(self) -> int:
        return int(self.absence)

    @property
    def K(self) -> int:
        return self.n_absence + self.n_endemic + self.n_outbreak

    @property
    def collapse(self) -> np.ndarray:
        """Collapsed label (1 absence, 2 endemic, 3 outbreak) indexed by ``label - 1``."""
        return np.array([ABSENCE] * self.n_absence + [ENDEMIC] * self.n_endemic
                        + [OUTBREAK] * self.n_outbreak, dtype=np.int64)

    @property
    def regime_codes(self) -> np.ndarray:
        return self.collapse - 1

    @property
    def endemic_states(self) -> np.ndarray:
        return np.arange(self.n_absence + 1, self.n_absence + self.n_endemic + 1)

    @property
    def outbreak_states(self) -> np.ndarray:
        return np.arange(self.n_absence + self.n_endemic + 1, self.K + 1)

    def kernel_args(self):
        return self.regime_codes, int(self.absence), self.n_endemic

    def allowed(self, a: int, b: int) -> bool:
        """Whether label ``a -> b`` is structurally possible."""
        lp = kern.trans_logp(a - 1, b - 1, 0.0, 0.0, 0.0, 0.0, int(self.absence),
                             self.n_endemic, self.K)
        return bool(np.isfinite(lp))


@dataclass
class PanelData:
    """Counts, covariates and the neighbour graph.

    ``W[i, j]`` is the weight of area j on area i (``omega_ji``); it is zero
    unless j is in NE(i).
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    W: np.ndarray
    x_names: tuple = ()
    z_names: tuple = ()
    initial_state_dist: np.ndarray | None = None
    area_ids: tuple = ()
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.ndim != 2:
            raise ValueError("y must be an N x T matrix")
        if (self.y < 0).any():
            raise ValueError("counts must be non-negative")
        N, T = self.y.shape
        self.x = _covariate_cube(self.x, N, T, "x")
        self.z = _covariate_cube(self.z, N, T, "z")
        self.x_names = tuple(self.x_names) or tuple(f"x{q}" for q in range(self.x.shape[2]))
        self.z_names = tuple(self.z_names) or tuple(f"z{q}" for q in range(self.z.shape[2]))
        if len(self.x_names) != self.x.shape[2] or len(self.z_names) != self.z.shape[2]:
            raise ValueError("covariate names do not match covariate columns")
        self.W = np.zeros((N, N)) if self.W is None else np.asarray(self.W, dtype=float)
        if self.W.shape != (N, N):
            raise ValueError("W must be N x N")
        if (self.W < 0).any() or (self.W > 1).any():
            raise ValueError("neighbour weights must lie in (0, 1]")
        if np.any(np.diag(self.W) != 0):
            raise ValueError("an area cannot be its own neighbour")
        if self.initial_state_dist is not None:
            p = np.asarray(self.initial_state_dist, dtype=float)
            if p.ndim == 1:
                p = np.tile(p, (N, 1))
            if p.shape[0] != N or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9) or (p < 0).any():
                raise ValueError("initial state distribution rows must be probability vectors")
            self.initial_state_dist = p
        self.area_ids = tuple(self.area_ids) or tuple(str(i + 1) for i in range(N))

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def log_prev(self) -> np.ndarray:
        """log(y_{i,t-1} + 1); column 0 is zero."""
        out = np.zeros(self.y.shape)
        out[:, 1:] = np.log1p(self.y[:, :-1])
        return out

    def neighbours(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.W[i])

    def reverse_neighbours(self, i: int) -> np.ndarray:
        """Areas j with i in NE(j)."""
        return np.flatnonzero(self.W[:, i])

    def init_dist(self, space: StateSpace) -> np.ndarray:
        if self.initial_state_dist is None:
            return np.full((self.N, space.K), 1.0 / space.K)
        if self.initial_state_dist.shape[1] != space.K:
            raise ValueError("initial state distribution does not match the state space")
        return self.initial_state_dist

    def truncated(self, T: int) -> "PanelData":
        """The first T weeks (for real-time refits)."""
        return replace(self, y=self.y[:, :T], x=self.x[:, :T], z=self.z[:, :T])


def _covariate_cube(a, N, T, name):
    if a is None:
        return np.zeros((N, T, 0))
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.shape[:2] != (N, T):
        raise ValueError(f"{name} must have shape (N, T, p)")
    return a


@dataclass(frozen=True)
class ModelSpec:
    """Which covariates and couplings enter each part of the model.

    Covariates are referenced by name: emission covariates from
    ``PanelData.x_names`` and transition covariates from ``PanelData.z_names``.
    ``spatial`` lists the transitions with a neighbour-outbreak term.
    """

    states: StateSpace = StateSpace()
    en_covariates: tuple = ()
    ob_covariates: tuple = ()
    p12_covariates: tuple = ()
    p21_covariates: tuple = ()
    p23_covariates: tuple = ()
    p33_covariates: tuple = ()
    spatial: tuple = TRANSITIONS
    random_intercepts: bool = False
    shared_overdispersion: bool = False

    @property
    def coupled(self) -> bool:
        return len(self.spatial) > 0

    def transitions(self) -> tuple:
        """Transitions that exist in this state space."""
        if self.states.absence:
            return TRANSITIONS
        return ("23", "33")

    def transition_covariates(self, lk: str) -> tuple:
        return getattr(self, f"p{lk}_covariates")

    def non_coupled(self) -> "ModelSpec":
        return replace(self, spatial=())


@dataclass
class CountParams:
    beta0_en: np.ndarray
    beta0_ob: np.ndarray
    beta_en: np.ndarray
    beta_ob: np.ndarray
    rho_en: float = 0.5
    rho_ob: float = 0.6
    r_en: float = 5.0
    r_ob: float = 5.0
    beta0_mean_en: float = 0.0
    beta0_mean_ob: float = 0.0
    sigma_en: float = 1.0
    sigma_ob: float = 1.0

    def copy(self) -> "CountParams":
        return replace(self, beta0_en=self.beta0_en.copy(), beta0_ob=self.beta0_ob.copy(),
                       beta_en=self.beta_en.copy(), beta_ob=self.beta_ob.copy())


@dataclass
class ChainParams:
    alpha0: np.ndarray
    alpha: np.ndarray
    alpha_spat: np.ndarray

    def copy(self) -> "ChainParams":
        return ChainParams(self.alpha0.copy(), self.alpha.copy(), self.alpha_spat.copy())


@dataclass
class ParamVector:
    count: CountParams
    chain: ChainParams

    def copy(self) -> "ParamVector":
        return ParamVector(self.count.copy(), self.chain.copy())

    @classmethod
    def zeros(cls, data: PanelData) -> "ParamVector":
        N, px, pz = data.N, data.x.shape[2], data.z.shape[2]
        count = CountParams(np.zeros(N), np.zeros(N), np.zeros(px), np.zeros(px))
        chain = ChainParams(np.zeros(4), np.zeros((4, pz)), np.zeros(4))
        return cls(count, chain)


def tidx(lk: str) -> int:
    return TRANSITIONS.index(lk)


@dataclass
class LatentStates:
    S_star: np.ndarray

    def __post_init__(self):
        self.S_star = np.asarray(self.S_star, dtype=np.int64)

    def collapsed(self, space: StateSpace) -> np.ndarray:
        return space.collapse[self.S_star - 1]

    def codes(self) -> np.ndarray:
        return self.S_star - 1

    def respects(self, space: StateSpace) -> bool:
        """No within-area transition hits a structural zero."""
        S = self.S_star
        if S.min() < 1 or S.max() > space.K:
            return False
        ok = np.array([[space.allowed(a, b) for b in range(1, space.K + 1)]
                       for a in range(1, space.K + 1)])
        return bool(ok[S[:, :-1] - 1, S[:, 1:] - 1].all())


# ---------------------------------------------------------------------------
# density and transition pieces


def nb_logpmf(y, mean, r):
    """Negative binomial log-pmf in mean/overdispersion form, Var = mean (1 + mean / r)."""
    y, mean, r = np.broadcast_arrays(np.asarray(y, float), np.asarray(mean, float),
                                     np.asarray(r, float))
    if not (np.isfinite(y).all() and np.isfinite(mean).all() and np.isfinite(r).all()):
        raise ValueError("nb_logpmf: non-finite input")
    if (mean <= 0).any() or (r <= 0).any() or (y < 0).any():
        raise ValueError("nb_logpmf: need mean > 0, r > 0, y >= 0")
    d = np.logaddexp(0.0, np.log(mean) - np.log(r))
    out = (gammaln(y + r) - gammaln(r) - gammaln(y + 1) - r * d
           + y * (np.log(mean) - np.log(r) - d))
    return out if out.ndim else float(out)


def log_rates(params: CountParams, data: PanelData):
    """Per-cell log transmission rates (without the autoregressive term) for EN and OB."""
    xb_en = params.beta0_en[:, None] + data.x @ params.beta_en
    xb_ob = params.beta0_ob[:, None] + data.x @ params.beta_ob
    return xb_en, xb_ob


def emission_means(params: CountParams, data: PanelData):
    """(lambda_EN, lambda_OB), each N x T; column 0 is undefined (nan)."""
    xb_en, xb_ob = log_rates(params, data)
    ly = data.log_prev
    lam_en = np.exp(xb_en + params.rho_en * ly)
    lam_ob = np.exp(xb_ob + params.rho_ob * ly)
    lam_en[:, 0] = lam_ob[:, 0] = np.nan
    return lam_en, lam_ob


def emission_table(params: CountParams, data: PanelData) -> np.ndarray:
    xb_en, xb_ob = log_rates(params, data)
    return kern.emission_table(data.y, data.log_prev, xb_en, xb_ob, float(params.rho_en),
                               float(params.rho_ob), float(params.r_en), float(params.r_ob))


def emission_logdensity(i: int, t: int, s_star: int, params: CountParams, data: PanelData,
                        space: StateSpace = StateSpace()) -> float:
    """log p(y_it | S*_it = s_star, y_i,t-1)."""
    if t < 1:
        raise ValueError("the first time point has no emission term")
    if not 1 <= s_star <= space.K:
        raise ValueError(f"state {s_star} outside 1..{space.K}")
    regime = space.collapse[s_star - 1]
    y = int(data.y[i, t])
    if regime == ABSENCE:
        return 0.0 if y == 0 else -np.inf
    ly = np.log1p(data.y[i, t - 1])
    if regime == ENDEMIC:
        eta = params.beta0_en[i] + data.x[i, t] @ params.beta_en + params.rho_en * ly
        return nb_logpmf(y, np.exp(eta), params.r_en)
    eta = params.beta0_ob[i] + data.x[i, t] @ params.beta_ob + params.rho_ob * ly
    return nb_logpmf(y, np.exp(eta), params.r_ob)


def neighbor_outbreak_sum(i: int, t_prev: int, states: LatentStates, data: PanelData,
                          space: StateSpace = StateSpace()) -> float:
    """sum_{j in NE(i)} omega_ji 1[S_j,t_prev in outbreak]."""
    ob = states.collapsed(space)[:, t_prev] == OUTBREAK
    return float(data.W[i] @ ob)


def linear_predictors(chain: ChainParams, data: PanelData) -> np.ndarray:
    """Non-spatial transition linear predictors, shape (4, N, T)."""
    return chain.alpha0[:, None, None] + np.einsum("ntp,kp->knt", data.z, chain.alpha)


def transition_row(i: int, t: int, from_state: int, chain: ChainParams, states: LatentStates,
                   data: PanelData, space: StateSpace = StateSpace()) -> np.ndarray:
    """P(S*_it = k | S*_i,t-1 = from_state, S_(-i),t-1) for k = 1..K."""
    if t < 1:
        raise ValueError("transitions start at the second time point")
    ns = neighbor_outbreak_sum(i, t - 1, states, data, space)
    e = chain.alpha0 + chain.alpha @ data.z[i, t] + chain.alpha_spat * ns
    out = np.zeros(space.K)
    kern.fill_row(from_state - 1, e[0], e[1], e[2], e[3], int(space.absence), space.n_endemic,
                  space.K, out)
    return out


def constraints_satisfied(params: CountParams, data: PanelData, eps_rate: float = 0.01,
                          eps_rho: float = 0.05, kind: str = "strong",
                          eps_intercept: float = 0.1) -> bool:
    """Transmission ordering between the endemic and outbreak regimes.

    ``strong``: the full OB log rate exceeds the EN one by ``eps_rate`` at every
    area and t >= 1, and rho_EN + eps_rho < rho_OB. ``weak``: only the
    intercepts (by ``eps_intercept``) and rho. ``none`` always holds.
    """
    if kind == "none":
        return True
    if not params.rho_en + eps_rho < params.rho_ob:
        return False
    if kind == "weak":
        return bool(params.beta0_mean_en + eps_intercept < params.beta0_mean_ob)
    if data.T < 2:
        return True
    gap = kern.min_rate_gap(data.x, params.beta0_en, params.beta0_ob, params.beta_en,
                            params.beta_ob, -1)
    return bool(gap > eps_rate)


def joint_loglik(data: PanelData, states: LatentStates, params: ParamVector,
                 space: StateSpace = StateSpace()) -> float:
    """log L(y, S* | v): emissions and transitions from t = 1, plus log p(S*_i0)."""
    S = states.codes()
    if S.shape != data.y.shape:
        raise ValueError("state matrix does not match the data")
    reg, has_abs, m_en = space.kernel_args()
    em = emission_table(params.count, data)
    init = data.init_dist(space)
    with np.errstate(divide="ignore"):
        total = float(np.log(init[np.arange(data.N), S[:, 0]]).sum())
    N, T = S.shape
    total += float(em[np.arange(N)[:, None], np.arange(1, T)[None, :], reg[S[:, 1:]]].sum())
    lin = linear_predictors(params.chain, data)
    total += kern_transitions_loglik(S, lin, params.chain.alpha_spat, data.W, reg, has_abs,
                                     m_en, space.K)
    return total


def kern_transitions_loglik(S, lin, spat, W, reg, has_abs, m_en, K) -> float:
    nsum = kern.neighbour_sums(S, reg, W)
    return float(_transitions_sum(S, lin, spat, nsum, has_abs, m_en, K))


@kern.njit(cache=True)
def _transitions_sum(S, lin, spat, nsum, has_abs, m_en, K):
    N, T = S.shape
    acc = 0.0
    for i in range(N):
        for t in range(1, T):
            ns = nsum[i, t]
            acc += kern.trans_logp(S[i, t - 1], S[i, t], lin[0, i, t] + spat[0] * ns,
                                   lin[1, i, t] + spat[1] * ns, lin[2, i, t] + spat[2] * ns,
                                   lin[3, i, t] + spat[3] * ns, has_abs, m_en, K)
    return acc


# ---------------------------------------------------------------------------
# free-parameter layout


@dataclass(frozen=True)
class Param:
    """One sampled scalar: its display name and where it lives in a ParamVector."""

    name: str
    kind: str
    part: str
    index: int = -1


def free_parameters(model: ModelSpec, data: PanelData) -> list:
    """Every sampled scalar of ``model`` in a fixed declaration order."""
    out = []
    xpos = {n: q for q, n in enumerate(data.x_names)}
    zpos = {n: q for q, n in enumerate(data.z_names)}
    for reg, covs in (("en", model.en_covariates), ("ob", model.ob_covariates)):
        if model.random_intercepts:
            out.append(Param(f"beta0_mean_{reg}", "beta0_mean", reg))
            out.append(Param(f"sigma_{reg}", "sigma", reg))
            out += [Param(f"beta0_{reg}[{a}]", "beta0_i", reg, i)
                    for i, a in enumerate(data.area_ids)]
        else:
            out.append(Param(f"beta0_{reg}", "beta0", reg))
        for c in covs:
            if c not in xpos:
                raise ValueError(f"unknown emission covariate {c!r}")
            out.append(Param(f"beta_{reg}[{c}]", "beta", reg, xpos[c]))
        out.append(Param(f"rho_{reg}", "rho", reg))
    if model.shared_overdispersion:
        out.append(Param("r", "r", "shared"))
    else:
        out += [Param("r_en", "r", "en"), Param("r_ob", "r", "ob")]
    for lk in model.transitions():
        out.append(Param(f"alpha{lk}_0", "alpha0", lk))
        for c in model.transition_covariates(lk):
            if c not in zpos:
                raise ValueError(f"unknown transition covariate {c!r}")
            out.append(Param(f"alpha{lk}[{c}]", "alpha", lk, zpos[c]))
        if lk in model.spatial:
            out.append(Param(f"alpha{lk}_spat", "alpha_spat", lk))
    names = [p.name for p in out]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter names")
    return out


def get_param(v: ParamVector, p: Param) -> float:
    c, ch = v.count, v.chain
    if p.kind == "beta0":
        return float(getattr(c, f"beta0_mean_{p.part}"))
    if p.kind == "beta0_i":
        return float(getattr(c, f"beta0_{p.part}")[p.index])
    if p.kind == "beta0_mean":
        return float(getattr(c, f"beta0_mean_{p.part}"))
    if p.kind == "sigma":
        return float(getattr(c, f"sigma_{p.part}"))
    if p.kind == "beta":
        return float(getattr(c, f"beta_{p.part}")[p.index])
    if p.kind == "rho":
        return float(getattr(c, f"rho_{p.part}"))
    if p.kind == "r":
        return float(c.r_en if p.part in ("en", "shared") else c.r_ob)
    k = tidx(p.part)
    if p.kind == "alpha0":
        return float(ch.alpha0[k])
    if p.kind == "alpha":
        return float(ch.alpha[k, p.index])
    return float(ch.alpha_spat[k])


def set_param(v: ParamVector, p: Param, value: float) -> None:
    c, ch = v.count, v.chain
    value = float(value)
    if p.kind == "beta0":
        setattr(c, f"beta0_mean_{p.part}", value)
        getattr(c, f"beta0_{p.part}")[:] = value
    elif p.kind == "beta0_i":
        getattr(c, f"beta0_{p.part}")[p.index] = value
    elif p.kind == "beta0_mean":
        setattr(c, f"beta0_mean_{p.part}", value)
    elif p.kind == "sigma":
        setattr(c, f"sigma_{p.part}", value)
    elif p.kind == "beta":
        getattr(c, f"beta_{p.part}")[p.index] = value
    elif p.kind == "rho":
        setattr(c, f"rho_{p.part}", value)
    elif p.kind == "r":
        if p.part in ("en", "shared"):
            c.r_en = value
        if p.part in ("ob", "shared"):
            c.r_ob = value
    elif p.kind == "alpha0":
        ch.alpha0[tidx(p.part)] = value
    elif p.kind == "alpha":
        ch.alpha[tidx(p.part), p.index] = value
    else:
        ch.alpha_spat[tidx(p.part)] = value


def to_flat(v: ParamVector, layout: list) -> np.ndarray:
    return np.array([get_param(v, p) for p in layout])


def from_flat(values, layout: list, data: PanelData) -> ParamVector:
    v = ParamVector.zeros(data)
    for p, val in zip(layout, values):
        set_param(v, p, val)
    return v
