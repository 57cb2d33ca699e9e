"""Posterior summaries: state probabilities, forecasts, WAIC and log scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels as kern
from .draws import PosteriorDraws, WaicAccumulator
from .model import ModelSpec, PanelData, ParamVector, free_parameters, tidx
from .samplers import kernel_inputs

__all__ = ["PosteriorDraws", "WaicAccumulator", "state_probabilities",
           "current_state_probabilities", "posterior_predictive", "forecast_summary",
           "marginal_loglik_forward", "partial_marginal_loglik", "waic", "waic_from_draws",
           "multivariate_log_score", "ParamArrays", "param_arrays"]


# ---------------------------------------------------------------------------
# state probabilities


def _collapse_freq(labels: np.ndarray, collapse: np.ndarray) -> np.ndarray:
    """Frequencies of collapsed states along axis 0; result (..., 3)."""
    if labels.shape[0] == 0:
        raise ValueError("no latent-state draws available")
    c = collapse[labels.astype(np.int64) - 1]
    return np.stack([(c == s).mean(axis=0) for s in (1, 2, 3)], axis=-1)


def _collapse_map(draws: PosteriorDraws, model: ModelSpec | None) -> np.ndarray:
    if model is not None:
        return model.states.collapse
    from .config import model_from_dict
    return model_from_dict(draws.config["model"]).states.collapse


def state_probabilities(draws: PosteriorDraws, t_range=None,
                        model: ModelSpec | None = None) -> np.ndarray:
    """P(S_it = absence, endemic, outbreak | y) from the stored (thinned) states.

    Returns (N, T', 3); ``t_range`` is a slice or index array over weeks.
    """
    S = draws.stacked_states()
    if t_range is not None:
        S = S[:, :, t_range]
    return _collapse_freq(S, _collapse_map(draws, model))


def current_state_probabilities(draws: PosteriorDraws,
                                model: ModelSpec | None = None) -> np.ndarray:
    """P(S_iT = s | y) for the final week from every kept iteration; (N, 3)."""
    return _collapse_freq(draws.stacked_last_states(), _collapse_map(draws, model))


# ---------------------------------------------------------------------------
# bulk parameter access


@dataclass
class ParamArrays:
    """Parameters of M draws as arrays (leading axis = draw)."""

    beta0_en: np.ndarray
    beta0_ob: np.ndarray
    beta_en: np.ndarray
    beta_ob: np.ndarray
    rho_en: np.ndarray
    rho_ob: np.ndarray
    r_en: np.ndarray
    r_ob: np.ndarray
    alpha0: np.ndarray
    alpha: np.ndarray
    alpha_spat: np.ndarray


def param_arrays(rows: np.ndarray, model: ModelSpec, data: PanelData) -> ParamArrays:
    rows = np.atleast_2d(rows)
    M, N = rows.shape[0], data.N
    px, pz = data.x.shape[2], data.z.shape[2]
    out = ParamArrays(np.zeros((M, N)), np.zeros((M, N)), np.zeros((M, px)), np.zeros((M, px)),
                      np.zeros(M), np.zeros(M), np.zeros(M), np.zeros(M), np.zeros((M, 4)),
                      np.zeros((M, 4, pz)), np.zeros((M, 4)))
    for col, p in enumerate(free_parameters(model, data)):
        v = rows[:, col]
        if p.kind == "beta0":
            getattr(out, f"beta0_{p.part}")[:] = v[:, None]
        elif p.kind == "beta0_i":
            getattr(out, f"beta0_{p.part}")[:, p.index] = v
        elif p.kind == "beta":
            getattr(out, f"beta_{p.part}")[:, p.index] = v
        elif p.kind == "rho":
            setattr(out, f"rho_{p.part}", v.copy())
        elif p.kind == "r":
            if p.part in ("en", "shared"):
                out.r_en = v.copy()
            if p.part in ("ob", "shared"):
                out.r_ob = v.copy()
        elif p.kind == "alpha0":
            out.alpha0[:, tidx(p.part)] = v
        elif p.kind == "alpha":
            out.alpha[:, tidx(p.part), p.index] = v
        elif p.kind == "alpha_spat":
            out.alpha_spat[:, tidx(p.part)] = v
    return out


def _draw_model(draws: PosteriorDraws, model: ModelSpec | None) -> ModelSpec:
    if model is not None:
        return model
    from .config import model_from_dict
    return model_from_dict(draws.config["model"])


def _select(n: int, max_draws: int | None) -> np.ndarray:
    if max_draws is None or max_draws >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_draws).round().astype(np.int64))


# ---------------------------------------------------------------------------
# forecasting


def _transition_probs(cur: np.ndarray, e: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Rows P(cur -> k) for arrays of current codes; ``e`` is (..., 4) linear predictors."""
    space = model.states
    K, has_abs, m_en = space.K, int(space.absence), space.n_endemic
    en_first, en_last, ob_first = has_abs, has_abs + m_en - 1, has_abs + m_en
    P = np.zeros(cur.shape + (K,))
    e12, e21, e23, e33 = (e[..., k] for k in range(4))
    fixed = np.ones(cur.shape, dtype=bool)
    if has_abs:
        m = cur == 0
        p12 = 1.0 / (1.0 + np.exp(-e12))
        P[..., 0] += np.where(m, 1.0 - p12, 0.0)
        P[..., en_first] += np.where(m, p12, 0.0)
        fixed &= ~m
    m = cur == en_last
    if has_abs:
        mx = np.maximum(0.0, np.maximum(e21, e23))
        a, b, c = np.exp(-mx), np.exp(e21 - mx), np.exp(e23 - mx)
        tot = a + b + c
        P[..., en_last] += np.where(m, a / tot, 0.0)
        P[..., 0] += np.where(m, b / tot, 0.0)
        P[..., ob_first] += np.where(m, c / tot, 0.0)
    else:
        p23 = 1.0 / (1.0 + np.exp(-e23))
        P[..., en_last] += np.where(m, 1.0 - p23, 0.0)
        P[..., ob_first] += np.where(m, p23, 0.0)
    fixed &= ~m
    m = cur == K - 1
    p33 = 1.0 / (1.0 + np.exp(-e33))
    P[..., en_first] += np.where(m, 1.0 - p33, 0.0)
    P[..., K - 1] += np.where(m, p33, 0.0)
    fixed &= ~m
    idx = np.nonzero(fixed)
    P[idx + (cur[idx] + 1,)] = 1.0
    return P


def _categorical(P: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = np.cumsum(P, axis=-1)
    k = (u[..., None] * c[..., -1:] >= c).sum(axis=-1)
    return np.minimum(k, P.shape[-1] - 1)


def _linear(pa: ParamArrays, zt: np.ndarray, nsum: np.ndarray, model: ModelSpec) -> np.ndarray:
    """(M, N, 4) transition linear predictors at one week."""
    e = pa.alpha0[:, None, :] + np.einsum("np,mkp->mnk", zt, pa.alpha)
    if model.coupled:
        e = e + pa.alpha_spat[:, None, :] * nsum[:, :, None]
    return e


def _log_means(pa: ParamArrays, xt: np.ndarray, yprev: np.ndarray):
    ly = np.log1p(yprev)
    le = pa.beta0_en + (pa.beta_en @ xt.T) + pa.rho_en[:, None] * ly
    lo = pa.beta0_ob + (pa.beta_ob @ xt.T) + pa.rho_ob[:, None] * ly
    return le, lo


def _nb_logpmf_arr(y, log_mean, r):
    d = np.logaddexp(0.0, log_mean - np.log(r))
    return gammaln(y + r) - gammaln(r) - gammaln(y + 1.0) - r * d + y * (log_mean - np.log(r) - d)


def _nb_draw(rng, log_mean, r):
    mean = np.exp(log_mean)
    return rng.negative_binomial(r, r / (r + mean))


@dataclass
class ForecastDraws:
    """Posterior predictive draws; states (labels) and counts are (M, N, H)."""

    states: np.ndarray
    counts: np.ndarray

    def state_probabilities(self, collapse: np.ndarray) -> np.ndarray:
        """(N, H, 3) frequencies of collapsed forecast states."""
        return _collapse_freq(self.states, collapse)


def _future_cov(cube: np.ndarray, future, H: int) -> np.ndarray:
    if future is not None:
        future = np.asarray(future, dtype=float)
        if future.ndim == 2:
            future = future[:, :, None]
        if future.shape[1] < H:
            raise ValueError("future covariates shorter than the horizon")
        return future
    return np.repeat(cube[:, -1:, :], H, axis=1)


def posterior_predictive(draws: PosteriorDraws, data: PanelData, horizon: int,
                         rng: np.random.Generator, model: ModelSpec | None = None,
                         future_x=None, future_z=None, max_draws: int | None = None
                         ) -> ForecastDraws:
    """Simulate states then counts forward ``horizon`` weeks for each kept draw.

    Each draw starts from its sampled final-week states and the observed
    final-week counts. Future covariates default to the last observed week
    held fixed.
    """
    model = _draw_model(draws, model)
    rows = draws.stacked_params()
    last = draws.stacked_last_states().astype(np.int64) - 1
    sel = _select(rows.shape[0], max_draws)
    rows, cur = rows[sel], last[sel]
    pa = param_arrays(rows, model, data)
    M, N = cur.shape
    fx = _future_cov(data.x, future_x, horizon)
    fz = _future_cov(data.z, future_z, horizon)
    reg = model.states.regime_codes
    yprev = np.repeat(data.y[None, :, -1].astype(float), M, axis=0)
    S_out = np.zeros((M, N, horizon), dtype=np.int64)
    y_out = np.zeros((M, N, horizon), dtype=np.int64)
    for k in range(horizon):
        ob = (reg[cur] == 2).astype(float)
        nsum = ob @ data.W.T
        e = _linear(pa, fz[:, k], nsum, model)
        P = _transition_probs(cur, e, model)
        cur = _categorical(P, rng.random((M, N)))
        le, lo = _log_means(pa, fx[:, k], yprev)
        r = reg[cur]
        y = np.zeros((M, N), dtype=np.int64)
        en, ob_ = r == 1, r == 2
        y[en] = _nb_draw(rng, le[en], np.broadcast_to(pa.r_en[:, None], (M, N))[en])
        y[ob_] = _nb_draw(rng, lo[ob_], np.broadcast_to(pa.r_ob[:, None], (M, N))[ob_])
        S_out[:, :, k] = cur + 1
        y_out[:, :, k] = y
        yprev = y.astype(float)
    return ForecastDraws(S_out, y_out)


def forecast_summary(fc: ForecastDraws, collapse: np.ndarray):
    """Rows (area index, k, mean, q2.5, q97.5, p_outbreak) for k = 1..H."""
    probs = fc.state_probabilities(collapse)
    mean = fc.counts.mean(axis=0)
    lo, hi = np.quantile(fc.counts, [0.025, 0.975], axis=0)
    rows = []
    N, H = mean.shape
    for i in range(N):
        for k in range(H):
            rows.append((i, k + 1, mean[i, k], lo[i, k], hi[i, k], probs[i, k, 2]))
    return rows


# ---------------------------------------------------------------------------
# WAIC ingredients


def marginal_loglik_forward(data: PanelData, params: ParamVector,
                            model: ModelSpec = ModelSpec()) -> np.ndarray:
    """log p(y_it | y_(1:t-1), v) per cell by the HMM forward recursion (non-coupled only).

    Column 0 is zero (the first week is conditioned on).
    """
    if model.coupled and np.any(params.chain.alpha_spat[[tidx(lk) for lk in model.spatial]] != 0):
        raise ValueError("the forward marginal needs a model without coupling")
    ki = kernel_inputs(data, params, model.non_coupled())
    S = np.zeros(data.y.shape, dtype=np.int64)
    out = kern.predictive_logdens(S, ki.em, ki.lin, ki.spat, ki.W, ki.rev_ptr, ki.rev_idx,
                                  ki.init, ki.reg, ki.has_abs, ki.m_en, False)
    return out


def partial_marginal_loglik(data: PanelData, params: ParamVector, states: np.ndarray,
                            model: ModelSpec = ModelSpec()) -> np.ndarray:
    """log p(y_it | S_(-i)(1:t), y_(1:t-1), v) per cell at one latent draw.

    ``states`` are labels (N x T); only other areas' states enter area i's
    term. Uses the same filter as the block sampler.
    """
    if states is None:
        raise ValueError("partial marginal needs a latent-state draw")
    ki = kernel_inputs(data, params, model)
    S = np.ascontiguousarray(np.asarray(states, dtype=np.int64) - 1)
    return kern.predictive_logdens(S, ki.em, ki.lin, ki.spat, ki.W, ki.rev_ptr, ki.rev_idx,
                                   ki.init, ki.reg, ki.has_abs, ki.m_en, ki.coupled)


def waic(per_draw_loglik) -> dict:
    """lpdd, pwaic and WAIC = -2 (lpdd - pwaic) from a (draws x cells) matrix."""
    ll = np.asarray(per_draw_loglik, dtype=float)
    ll = ll.reshape(ll.shape[0], -1)
    S = ll.shape[0]
    if S < 2:
        raise ValueError("WAIC needs at least two draws")
    lpd = logsumexp(ll, axis=0) - np.log(S)
    pw = ll.var(axis=0, ddof=1)
    lpdd, pwaic = float(lpd.sum()), float(pw.sum())
    return {"lpdd": lpdd, "pwaic": pwaic, "waic": -2.0 * (lpdd - pwaic)}


def waic_from_accumulator(acc: WaicAccumulator, first_week: int = 1) -> dict:
    """WAIC from the online accumulator, skipping the conditioned-on first week(s)."""
    lpd, pw = acc.pointwise()
    lpdd, pwaic = float(lpd[:, first_week:].sum()), float(pw[:, first_week:].sum())
    return {"lpdd": lpdd, "pwaic": pwaic, "waic": -2.0 * (lpdd - pwaic)}


def waic_from_draws(draws: PosteriorDraws) -> dict:
    acc = draws.merged_waic()
    if acc is None:
        raise ValueError("no WAIC accumulators stored with these draws")
    return waic_from_accumulator(acc)


# ---------------------------------------------------------------------------
# multivariate log score


def multivariate_log_score(draws: PosteriorDraws, data: PanelData, T_obs: int,
                           rng: np.random.Generator, model: ModelSpec | None = None,
                           observed=None, max_draws: int | None = None,
                           rao_blackwell: bool = False) -> float:
    """-log p(y_T^obs | y_(1:T-1)) / N for a fit through week ``T_obs - 1``.

    Forecast states at ``T_obs`` are drawn from each kept draw's final states
    and the joint density is the draw average of the product of emission
    densities at those states. ``rao_blackwell`` averages over the forecast
    state analytically instead (same target, lower variance).
    """
    model = _draw_model(draws, model)
    obs = np.asarray(data.y[:, T_obs] if observed is None else observed, dtype=float)
    rows = draws.stacked_params()
    last = draws.stacked_last_states().astype(np.int64) - 1
    sel = _select(rows.shape[0], max_draws)
    rows, cur = rows[sel], last[sel]
    pa = param_arrays(rows, model, data)
    M, N = cur.shape
    reg = model.states.regime_codes
    nsum = (reg[cur] == 2).astype(float) @ data.W.T
    e = _linear(pa, data.z[:, T_obs], nsum, model)
    P = _transition_probs(cur, e, model)
    le, lo = _log_means(pa, data.x[:, T_obs], np.repeat(data.y[None, :, T_obs - 1], M, 0))
    em = np.stack([np.where(obs == 0, 0.0, -np.inf) * np.ones((M, N)),
                   _nb_logpmf_arr(obs, le, pa.r_en[:, None]),
                   _nb_logpmf_arr(obs, lo, pa.r_ob[:, None])], axis=-1)
    if rao_blackwell:
        with np.errstate(divide="ignore"):
            per = logsumexp(np.log(P) + em[..., reg], axis=-1)
    else:
        s = _categorical(P, rng.random((M, N)))
        per = np.take_along_axis(em, reg[s][..., None], axis=-1)[..., 0]
    logp = logsumexp(per.sum(axis=1)) - np.log(M)
    return float(-logp / N)


def log_score_from_logdens(per_draw_joint_logdens, N: int) -> float:
    """-log(mean_m exp(l_m)) / N for per-draw joint log densities l_m."""
    ld = np.asarray(per_draw_joint_logdens, dtype=float)
    return float(-(logsumexp(ld) - np.log(ld.size)) / N)
