"""Detection-quality metrics and a paired permutation test."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


def _flat(scores, labels):
    labels = getattr(labels, "outbreak", labels)
    s = np.asarray(scores, dtype=float).ravel()
    lab = np.asarray(labels).ravel().astype(bool)
    if s.shape != lab.shape:
        raise ValueError("scores and labels must align")
    mask = np.isfinite(s)
    return s[mask], lab[mask]


def roc_auc(scores, labels) -> float:
    """P(score of a random positive > score of a random negative), ties count one half."""
    s, lab = _flat(scores, labels)
    n1, n0 = int(lab.sum()), int((~lab).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both outbreak and non-outbreak weeks")
    ranks = rankdata(s)
    return float((ranks[lab].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def sens_spec(scores, labels, threshold: float = 0.5):
    """(sensitivity, specificity) of ``score > threshold``."""
    s, lab = _flat(scores, labels)
    if lab.all() or not lab.any():
        raise ValueError("sensitivity and specificity need both classes")
    alarm = s > threshold
    return float(alarm[lab].mean()), float((~alarm[~lab]).mean())


@dataclass
class Timeliness:
    mean: float
    per_outbreak: list
    n_detected: int
    n_missed: int


def timeliness(scores, starts, ends=None, threshold: float = 0.5, window=None) -> Timeliness:
    """Weeks into each outbreak (starting at one) when the score first exceeds the threshold.

    ``scores`` is N x T; ``starts[i]``/``ends[i]`` (or a BenchmarkTruth) list outbreak weeks
    (0-based, inclusive). Outbreaks never crossing the threshold are
    excluded from the mean and counted in ``n_missed``. ``window`` (lo, hi)
    keeps only outbreaks starting in [lo, hi); their later weeks must be scored.
    """
    if ends is None:
        starts, ends = starts.starts, starts.ends
    scores = np.asarray(scores, dtype=float)
    per, missed, total = [], 0, 0
    for i, (ss, ee) in enumerate(zip(starts, ends)):
        for s, e in zip(ss, ee):
            if window is not None and not (window[0] <= s < window[1]):
                continue
            total += 1
            seg = scores[i, s:e + 1]
            hit = np.flatnonzero(np.nan_to_num(seg, nan=-np.inf) > threshold)
            if hit.size:
                per.append(int(hit[0]) + 1)
            else:
                missed += 1
    if total == 0:
        raise ValueError("no outbreaks to evaluate")
    mean = float(np.mean(per)) if per else float("nan")
    return Timeliness(mean, per, len(per), missed)


def permutation_test(scores_a, scores_b, n_perm: int = 10_000, rng=None,
                     exhaustive: bool | None = None) -> float:
    """Two-sided paired test of equal mean score by random sign flips of the differences.

    With ``exhaustive`` (default when 2**T <= n_perm) every flip pattern is
    enumerated and the exact p-value returned; otherwise Monte Carlo with
    add-one smoothing.
    """
    a, b = np.asarray(scores_a, dtype=float), np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score series must be equal-length vectors")
    if a.size < 2:
        raise ValueError("need at least two paired scores")
    d = a - b
    obs = abs(d.mean())
    tol = 1e-12 * max(1.0, obs)
    if exhaustive is None:
        exhaustive = 2 ** d.size <= n_perm
    if exhaustive:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=d.size)))
        stats = np.abs(signs @ d / d.size)
        return float(np.mean(stats >= obs - tol))
    rng = np.random.default_rng() if rng is None else rng
    signs = rng.choice((-1.0, 1.0), size=(n_perm, d.size))
    stats = np.abs(signs @ d / d.size)
    return float((1 + np.sum(stats >= obs - tol)) / (n_perm + 1))
