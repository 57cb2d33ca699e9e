"""Convergence diagnostics: split-chain R-hat, effective sample size and a pass/fail gate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .draws import PosteriorDraws


def _as_chains(chains) -> np.ndarray:
    a = np.asarray(chains, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError("chains must be (chains, draws) or (chains, draws, parameters)")
    return a


def gelman_rubin(chains) -> np.ndarray:
    """Split-chain potential scale reduction per parameter.

    ``chains`` is (m, n) or (m, n, p). Each chain is halved (dropping the
    middle draw of odd lengths) before the usual between/within comparison.
    When both variances vanish the statistic is 1.
    """
    a = _as_chains(chains)
    m, n, _ = a.shape
    if m < 2:
        raise ValueError("R-hat needs at least two chains")
    if n < 10:
        raise ValueError("R-hat needs at least ten draws per chain")
    h = n // 2
    split = np.concatenate([a[:, :h], a[:, n - h:]], axis=0)
    means = split.mean(axis=1)
    var = split.var(axis=1, ddof=1)
    W = var.mean(axis=0)
    B = h * means.var(axis=0, ddof=1)
    vhat = (h - 1) / h * W + B / h
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(vhat / W)
    r = np.where((W == 0) & (B == 0), 1.0, r)
    r = np.where((W == 0) & (B > 0), np.inf, r)
    return r


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row via FFT."""
    n = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[..., :n] / n


@dataclass
class ESSResult:
    ess: np.ndarray
    degenerate: np.ndarray


def effective_sample_size(chains, return_flags: bool = False):
    """Multi-chain ESS with Geyer's initial positive (and monotone) sequence.

    Constant parameters get ESS 0 and a degeneracy flag (returned when
    ``return_flags`` is set).
    """
    a = _as_chains(chains)
    m, n, p = a.shape
    if n < 4:
        raise ValueError("ESS needs at least four draws per chain")
    ess = np.zeros(p)
    flags = np.zeros(p, dtype=bool)
    total = m * n
    for k in range(p):
        x = a[:, :, k]
        acov = _autocov(x)
        var_chain = acov[:, 0] * n / (n - 1)
        W = var_chain.mean()
        vplus = W * (n - 1) / n + (x.mean(axis=1).var(ddof=1) if m > 1 else 0.0)
        if not vplus > 0 or not np.isfinite(vplus):
            flags[k] = True
            continue
        rho = 1.0 - (W - acov.mean(axis=0)) / vplus
        rho[0] = 1.0
        # pair sums Gamma_t = rho_2t + rho_2t+1, truncated at the first non-positive one
        npairs = n // 2
        gam = rho[0:2 * npairs:2] + rho[1:2 * npairs:2]
        stop = np.flatnonzero(gam <= 0)
        last = stop[0] if stop.size else npairs
        gam = np.minimum.accumulate(gam[:last]) if last > 0 else gam[:0]
        tau = -1.0 + 2.0 * gam.sum()
        tau = max(tau, 1.0 / np.log10(total))
        ess[k] = total / tau
    if return_flags:
        return ESSResult(ess, flags)
    return ess


@dataclass
class GateResult:
    passed: bool
    min_ess: float
    max_rhat: float
    offending: list = field(default_factory=list)
    table: list = field(default_factory=list)

    def verdict(self) -> str:
        if self.passed:
            return f"PASS min_ess={self.min_ess:.0f} max_rhat={self.max_rhat:.4f}"
        return (f"FAIL min_ess={self.min_ess:.0f} max_rhat={self.max_rhat:.4f} "
                f"offending={','.join(self.offending)}")


def diagnose(draws: PosteriorDraws):
    """(names, ess, rhat) over all sampled parameters."""
    arr = np.stack(draws.params)
    return list(draws.param_names), effective_sample_size(arr), gelman_rubin(arr)


def convergence_gate(draws=None, *, names=None, ess=None, rhat=None, min_ess: float = 1000.0,
                     max_rhat: float = 1.05) -> GateResult:
    """Pass iff every monitored parameter has ESS > min_ess and R-hat < max_rhat.

    Pass either PosteriorDraws or precomputed ``names``/``ess``/``rhat``.
    """
    if draws is not None:
        names, ess, rhat = diagnose(draws)
    ess, rhat = np.asarray(ess, dtype=float), np.asarray(rhat, dtype=float)
    names = list(names) if names is not None else [f"p{k}" for k in range(ess.size)]
    bad = [nm for nm, e, r in zip(names, ess, rhat) if not (e > min_ess and r < max_rhat)]
    table = list(zip(names, ess.tolist(), rhat.tolist()))
    return GateResult(not bad, float(ess.min()), float(rhat.max()), bad, table)
