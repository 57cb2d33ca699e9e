"""Compiled inner loops.

Conventions shared by every kernel:

* expanded states are 0-based codes ``0..K-1``; ``reg[s]`` maps a code to its
  regime (0 absence, 1 endemic, 2 outbreak)
* time is 0-based; the first time point has no emission and no transition
* ``lin`` has shape (4, N, T) and holds the non-spatial linear predictors of
  the transitions in the order 12, 21, 23, 33; ``spat`` the four coupling
  coefficients
* ``W[i, j]`` is the weight of area j on area i (zero when j is not a
  neighbour of i)
"""

import math

import numpy as np
from numba import njit

ROW_ABSENCE = 0
ROW_FIXED = 1
ROW_ENDEMIC_EXIT = 2
ROW_OUTBREAK_EXIT = 3


@njit(cache=True)
def softplus(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def log_expit(x):
    return -softplus(-x)


@njit(cache=True)
def nb_logpmf_scalar(y, log_mean, r):
    # log(r + mean) - log(r) = softplus(log_mean - log r)
    d = softplus(log_mean - math.log(r))
    return (
        math.lgamma(y + r)
        - math.lgamma(r)
        - math.lgamma(y + 1.0)
        - r * d
        + y * (log_mean - math.log(r) - d)
    )


@njit(cache=True)
def row_kind(s, has_abs, m_en, K):
    en_last = has_abs + m_en - 1
    if has_abs == 1 and s == 0:
        return ROW_ABSENCE
    if s < en_last:
        return ROW_FIXED
    if s == en_last:
        return ROW_ENDEMIC_EXIT
    if s < K - 1:
        return ROW_FIXED
    return ROW_OUTBREAK_EXIT


@njit(cache=True)
def fill_row(s, e12, e21, e23, e33, has_abs, m_en, K, out):
    for k in range(K):
        out[k] = 0.0
    en_first = has_abs
    ob_first = has_abs + m_en
    kind = row_kind(s, has_abs, m_en, K)
    if kind == ROW_ABSENCE:
        out[0] = math.exp(log_expit(-e12))
        out[en_first] = math.exp(log_expit(e12))
    elif kind == ROW_FIXED:
        out[s + 1] = 1.0
    elif kind == ROW_ENDEMIC_EXIT:
        if has_abs == 1:
            mx = max(0.0, max(e21, e23))
            a = math.exp(-mx)
            b = math.exp(e21 - mx)
            c = math.exp(e23 - mx)
            tot = a + b + c
            out[s] = a / tot
            out[0] = b / tot
            out[ob_first] = c / tot
        else:
            out[s] = math.exp(log_expit(-e23))
            out[ob_first] = math.exp(log_expit(e23))
    else:
        out[en_first] = math.exp(log_expit(-e33))
        out[K - 1] = math.exp(log_expit(e33))


@njit(cache=True)
def trans_logp(a, b, e12, e21, e23, e33, has_abs, m_en, K):
    """log P(a -> b) for one step."""
    en_first = has_abs
    ob_first = has_abs + m_en
    kind = row_kind(a, has_abs, m_en, K)
    if kind == ROW_ABSENCE:
        if b == 0:
            return log_expit(-e12)
        if b == en_first:
            return log_expit(e12)
        return -np.inf
    if kind == ROW_FIXED:
        return 0.0 if b == a + 1 else -np.inf
    if kind == ROW_ENDEMIC_EXIT:
        if has_abs == 1:
            mx = max(0.0, max(e21, e23))
            lse = mx + math.log(math.exp(-mx) + math.exp(e21 - mx) + math.exp(e23 - mx))
            if b == a:
                return -lse
            if b == 0:
                return e21 - lse
            if b == ob_first:
                return e23 - lse
            return -np.inf
        if b == a:
            return log_expit(-e23)
        if b == ob_first:
            return log_expit(e23)
        return -np.inf
    if b == en_first:
        return log_expit(-e33)
    if b == K - 1:
        return log_expit(e33)
    return -np.inf


@njit(cache=True)
def neighbour_sums(S, reg, W):
    """nsum[i, t] = sum_j W[i, j] * 1[S[j, t-1] in outbreak]; column 0 is zero."""
    N, T = S.shape
    nsum = np.zeros((N, T))
    for t in range(1, T):
        for i in range(N):
            acc = 0.0
            for j in range(N):
                w = W[i, j]
                if w != 0.0 and reg[S[j, t - 1]] == 2:
                    acc += w
            nsum[i, t] = acc
    return nsum


@njit(cache=True)
def emission_table(y, ly1, xb_en, xb_ob, rho_en, rho_ob, r_en, r_ob):
    """Log emission density per regime, shape (N, T, 3); time 0 is all zeros."""
    N, T = y.shape
    em = np.zeros((N, T, 3))
    for i in range(N):
        for t in range(1, T):
            yy = y[i, t]
            em[i, t, 0] = 0.0 if yy == 0 else -np.inf
            em[i, t, 1] = nb_logpmf_scalar(yy, xb_en[i, t] + rho_en * ly1[i, t], r_en)
            em[i, t, 2] = nb_logpmf_scalar(yy, xb_ob[i, t] + rho_ob * ly1[i, t], r_ob)
    return em


@njit(cache=True)
def fill_row_params(e12, e21, e23, e33, has_abs, R):
    """The seven probabilities that define every probabilistic row.

    R = (abs stay, abs -> endemic, endemic stay, endemic -> abs,
    endemic -> outbreak, outbreak -> endemic, outbreak stay).
    """
    if has_abs == 1:
        R[0] = math.exp(log_expit(-e12))
        R[1] = math.exp(log_expit(e12))
        mx = max(0.0, max(e21, e23))
        a = math.exp(-mx)
        b = math.exp(e21 - mx)
        c = math.exp(e23 - mx)
        tot = a + b + c
        R[2] = a / tot
        R[3] = b / tot
        R[4] = c / tot
    else:
        R[0] = 0.0
        R[1] = 0.0
        R[2] = math.exp(log_expit(-e23))
        R[3] = 0.0
        R[4] = math.exp(log_expit(e23))
    R[5] = math.exp(log_expit(-e33))
    R[6] = math.exp(log_expit(e33))


@njit(cache=True)
def trans_prob(a, b, R, has_abs, m_en, K):
    """P(a -> b) from row parameters R."""
    en_first = has_abs
    ob_first = has_abs + m_en
    kind = row_kind(a, has_abs, m_en, K)
    if kind == ROW_FIXED:
        return 1.0 if b == a + 1 else 0.0
    if kind == ROW_ABSENCE:
        if b == 0:
            return R[0]
        return R[1] if b == en_first else 0.0
    if kind == ROW_ENDEMIC_EXIT:
        if b == a:
            return R[2]
        if has_abs == 1 and b == 0:
            return R[3]
        return R[4] if b == ob_first else 0.0
    if b == K - 1:
        return R[6]
    return R[5] if b == en_first else 0.0


@njit(cache=True)
def predict(f, R, has_abs, m_en, K, pred):
    """pred[s] = sum_k f[k] P(k -> s) using the sparse row structure."""
    en_first = has_abs
    ob_first = has_abs + m_en
    for s in range(K):
        pred[s] = 0.0
    for k in range(K):
        w = f[k]
        if w == 0.0:
            continue
        kind = row_kind(k, has_abs, m_en, K)
        if kind == ROW_FIXED:
            pred[k + 1] += w
        elif kind == ROW_ABSENCE:
            pred[0] += w * R[0]
            pred[en_first] += w * R[1]
        elif kind == ROW_ENDEMIC_EXIT:
            pred[k] += w * R[2]
            if has_abs == 1:
                pred[0] += w * R[3]
            pred[ob_first] += w * R[4]
        else:
            pred[en_first] += w * R[5]
            pred[K - 1] += w * R[6]


@njit(cache=True)
def rows_to_matrix(R, has_abs, m_en, K, P):
    for a in range(K):
        for b in range(K):
            P[a, b] = trans_prob(a, b, R, has_abs, m_en, K)


@njit(cache=True)
def area_row_params(i, nsum, lin, spat, has_abs, R):
    """R[t] for area i, t = 1..T-1, from the neighbour-outbreak sums."""
    T = R.shape[0]
    for t in range(1, T):
        ns = nsum[i, t]
        fill_row_params(lin[0, i, t] + spat[0] * ns, lin[1, i, t] + spat[1] * ns,
                        lin[2, i, t] + spat[2] * ns, lin[3, i, t] + spat[3] * ns, has_abs, R[t])


@njit(cache=True)
def area_transitions(i, S, lin, spat, W, reg, has_abs, m_en, K, P, use_nsum):
    """Dense P[t] (K x K) for area i, t = 1..T-1 (reference and reporting use)."""
    N, T = S.shape
    R = np.zeros(7)
    for t in range(1, T):
        ns = 0.0
        if use_nsum:
            for j in range(N):
                w = W[i, j]
                if w != 0.0 and reg[S[j, t - 1]] == 2:
                    ns += w
        fill_row_params(lin[0, i, t] + spat[0] * ns, lin[1, i, t] + spat[1] * ns,
                        lin[2, i, t] + spat[2] * ns, lin[3, i, t] + spat[3] * ns, has_abs, R)
        rows_to_matrix(R, has_abs, m_en, K, P[t])


@njit(cache=True)
def forward_product(i, S, nsum, lin, spat, W, rev, reg, has_abs, m_en, K, fp):
    """fp[t] = log prod_j p(S_j,t+1 | ., i in outbreak) - log prod_j p(. | i not in outbreak).

    Only reverse neighbours j (areas with i in NE(j)) contribute. Entry T-1 is 0.
    ``nsum`` holds the current neighbour-outbreak sums of every area.
    """
    N, T = S.shape
    for t in range(T):
        fp[t] = 0.0
    for t in range(T - 1):
        acc = 0.0
        ob_i = 1.0 if reg[S[i, t]] == 2 else 0.0
        for jj in range(rev.shape[0]):
            j = rev[jj]
            a = S[j, t]
            if row_kind(a, has_abs, m_en, K) == ROW_FIXED:
                continue
            b = S[j, t + 1]
            wji = W[j, i]
            ns0 = nsum[j, t + 1] - wji * ob_i
            ns1 = ns0 + wji
            l0 = trans_logp(a, b,
                            lin[0, j, t + 1] + spat[0] * ns0,
                            lin[1, j, t + 1] + spat[1] * ns0,
                            lin[2, j, t + 1] + spat[2] * ns0,
                            lin[3, j, t + 1] + spat[3] * ns0,
                            has_abs, m_en, K)
            l1 = trans_logp(a, b,
                            lin[0, j, t + 1] + spat[0] * ns1,
                            lin[1, j, t + 1] + spat[1] * ns1,
                            lin[2, j, t + 1] + spat[2] * ns1,
                            lin[3, j, t + 1] + spat[3] * ns1,
                            has_abs, m_en, K)
            acc += l1 - l0
        fp[t] = acc


@njit(cache=True)
def filter_pass(em_i, R, init, fp, reg, use_fp, has_abs, m_en, filt, lpd):
    """Forward filter for one area.

    em_i: (T, 3) log emissions; R: (T, 7) row parameters; fp: (T,) relative
    log forward product applied to outbreak codes when ``use_fp``. Fills
    ``filt`` (T, K) and ``lpd`` (T,) with log p(y_t | past, neighbours) for
    t >= 1 (lpd[0] = 0). Returns -1 on success, otherwise the offending time.
    """
    T = em_i.shape[0]
    K = init.shape[0]
    # t = 0: initial distribution times the forward product
    mx = -np.inf
    for s in range(K):
        if init[s] > 0.0:
            g = fp[0] if (use_fp and reg[s] == 2 and T > 1) else 0.0
            if g > mx:
                mx = g
    tot = 0.0
    for s in range(K):
        g = fp[0] if (use_fp and reg[s] == 2 and T > 1) else 0.0
        v = init[s] * math.exp(g - mx) if init[s] > 0.0 else 0.0
        filt[0, s] = v
        tot += v
    if not tot > 0.0:
        return 0
    for s in range(K):
        filt[0, s] = filt[0, s] / tot
    lpd[0] = 0.0
    pred = np.empty(K)
    for t in range(1, T):
        predict(filt[t - 1], R[t], has_abs, m_en, K, pred)
        # one-step predictive density of y_t
        emx = -np.inf
        for s in range(K):
            if pred[s] > 0.0 and em_i[t, reg[s]] > emx:
                emx = em_i[t, reg[s]]
        if emx == -np.inf:
            return t
        dens = 0.0
        for s in range(K):
            if pred[s] > 0.0:
                dens += pred[s] * math.exp(em_i[t, reg[s]] - emx)
        lpd[t] = emx + math.log(dens)
        last = t == T - 1
        mx = -np.inf
        for s in range(K):
            if pred[s] > 0.0:
                g = em_i[t, reg[s]]
                if use_fp and reg[s] == 2 and not last:
                    g = g + fp[t]
                if g > mx:
                    mx = g
        if mx == -np.inf:
            return t
        tot = 0.0
        for s in range(K):
            if pred[s] > 0.0:
                g = em_i[t, reg[s]]
                if use_fp and reg[s] == 2 and not last:
                    g = g + fp[t]
                v = pred[s] * math.exp(g - mx)
            else:
                v = 0.0
            filt[t, s] = v
            tot += v
        if not tot > 0.0:
            return t
        for s in range(K):
            filt[t, s] = filt[t, s] / tot
    return -1


@njit(cache=True)
def _draw(w, u):
    tot = 0.0
    for k in range(w.shape[0]):
        tot += w[k]
    target = u * tot
    acc = 0.0
    last = 0
    for k in range(w.shape[0]):
        if w[k] > 0.0:
            last = k
            acc += w[k]
            if target < acc:
                return k
    return last


@njit(cache=True)
def backward_sample(filt, R, has_abs, m_en, u, out):
    T, K = filt.shape
    w = np.empty(K)
    out[T - 1] = _draw(filt[T - 1], u[T - 1])
    for t in range(T - 2, -1, -1):
        nxt = out[t + 1]
        for s in range(K):
            w[s] = trans_prob(s, nxt, R[t + 1], has_abs, m_en, K) * filt[t, s]
        out[t] = _draw(w, u[t])


@njit(cache=True)
def forward_area(i, S, nsum, em, lin, spat, W, rev, init, reg, has_abs, m_en, K,
                 R, fp, filt, lpd, coupled):
    """Row parameters, forward product and filter for area i.

    Areas with no reverse neighbours skip the forward product (plain FFBS).
    """
    area_row_params(i, nsum, lin, spat, has_abs, R)
    use_fp = coupled and rev.shape[0] > 0
    if use_fp:
        forward_product(i, S, nsum, lin, spat, W, rev, reg, has_abs, m_en, K, fp)
    else:
        for t in range(fp.shape[0]):
            fp[t] = 0.0
    return filter_pass(em[i], R, init, fp, reg, use_fp, has_abs, m_en, filt, lpd)


@njit(cache=True)
def current_nsum(S, reg, W, coupled):
    if coupled:
        return neighbour_sums(S, reg, W)
    return np.zeros(S.shape)


@njit(cache=True)
def iffbs_sweep(S, em, lin, spat, W, rev_ptr, rev_idx, init, reg, has_abs, m_en,
                u, coupled, lpd_out):
    """One block-Gibbs sweep over all areas in order; updates S in place.

    ``lpd_out[i]`` receives area i's one-step predictive log densities from
    its filter (conditioning on the other areas' states at that moment).
    Returns (-1, -1) or the (area, time) where the filter degenerated.
    """
    N, T = S.shape
    K = init.shape[1]
    nsum = current_nsum(S, reg, W, coupled)
    R = np.zeros((T, 7))
    fp = np.zeros(T)
    filt = np.zeros((T, K))
    lpd = np.zeros(T)
    seq = np.zeros(T, dtype=np.int64)
    for i in range(N):
        rev = rev_idx[rev_ptr[i]:rev_ptr[i + 1]]
        bad = forward_area(i, S, nsum, em, lin, spat, W, rev, init[i], reg, has_abs, m_en, K,
                           R, fp, filt, lpd, coupled)
        if bad >= 0:
            return i, bad
        backward_sample(filt, R, has_abs, m_en, u[i], seq)
        if coupled:
            for jj in range(rev.shape[0]):
                j = rev[jj]
                wji = W[j, i]
                for t in range(T - 1):
                    d = (1.0 if reg[seq[t]] == 2 else 0.0) - (1.0 if reg[S[i, t]] == 2 else 0.0)
                    if d != 0.0:
                        nsum[j, t + 1] += wji * d
        for t in range(T):
            S[i, t] = seq[t]
            lpd_out[i, t] = lpd[t]
    return -1, -1


@njit(cache=True)
def predictive_logdens(S, em, lin, spat, W, rev_ptr, rev_idx, init, reg, has_abs, m_en,
                       coupled):
    """Per-cell log p(y_it | S_(-i)(1:t), y_i(1:t-1)) at fixed states; (N, T)."""
    N, T = S.shape
    K = init.shape[1]
    nsum = current_nsum(S, reg, W, coupled)
    R = np.zeros((T, 7))
    fp = np.zeros(T)
    filt = np.zeros((T, K))
    lpd = np.zeros(T)
    out = np.zeros((N, T))
    for i in range(N):
        rev = rev_idx[rev_ptr[i]:rev_ptr[i + 1]]
        bad = forward_area(i, S, nsum, em, lin, spat, W, rev, init[i], reg, has_abs, m_en, K,
                           R, fp, filt, lpd, coupled)
        if bad >= 0:
            for t in range(T):
                out[i, t] = -np.inf
        else:
            for t in range(T):
                out[i, t] = lpd[t]
    return out


@njit(cache=True)
def single_site_sweep(S, em, lin, spat, W, init, reg, has_abs, m_en, u, coupled):
    """One-at-a-time Gibbs update of every S[i, t] from its full conditional."""
    N, T = S.shape
    K = init.shape[1]
    lw = np.empty(K)
    w = np.empty(K)
    for i in range(N):
        for t in range(T):
            for s in range(K):
                S[i, t] = s
                acc = 0.0
                if t == 0:
                    acc += math.log(init[i, s]) if init[i, s] > 0.0 else -np.inf
                else:
                    acc += em[i, t, reg[s]]
                    ns = 0.0
                    if coupled:
                        for j in range(N):
                            if W[i, j] != 0.0 and reg[S[j, t - 1]] == 2:
                                ns += W[i, j]
                    acc += trans_logp(S[i, t - 1], s,
                                      lin[0, i, t] + spat[0] * ns, lin[1, i, t] + spat[1] * ns,
                                      lin[2, i, t] + spat[2] * ns, lin[3, i, t] + spat[3] * ns,
                                      has_abs, m_en, K)
                if t < T - 1:
                    # own next transition and every area whose next step sees S[i, t]
                    for j in range(N):
                        if j != i and not (coupled and W[j, i] != 0.0):
                            continue
                        ns = 0.0
                        if coupled:
                            for k in range(N):
                                if W[j, k] != 0.0 and reg[S[k, t]] == 2:
                                    ns += W[j, k]
                        acc += trans_logp(S[j, t], S[j, t + 1],
                                          lin[0, j, t + 1] + spat[0] * ns,
                                          lin[1, j, t + 1] + spat[1] * ns,
                                          lin[2, j, t + 1] + spat[2] * ns,
                                          lin[3, j, t + 1] + spat[3] * ns,
                                          has_abs, m_en, K)
                lw[s] = acc
            mx = -np.inf
            for s in range(K):
                if lw[s] > mx:
                    mx = lw[s]
            for s in range(K):
                w[s] = math.exp(lw[s] - mx) if lw[s] > -np.inf else 0.0
            S[i, t] = _draw(w, u[i, t])


@njit(cache=True)
def regime_loglik(y, ly1, xcell, areas, beta0, beta, rho, r, only_area):
    """Sum of NB log-pmfs over gathered cells of one regime (optionally one area)."""
    n = y.shape[0]
    p = beta.shape[0]
    acc = 0.0
    for c in range(n):
        a = areas[c]
        if only_area >= 0 and a != only_area:
            continue
        eta = beta0[a] + rho * ly1[c]
        for q in range(p):
            eta += xcell[c, q] * beta[q]
        acc += nb_logpmf_scalar(y[c], eta, r)
    return acc


@njit(cache=True)
def regime_mean_part(y, ly1, xcell, areas, beta0, beta, rho, r, only_area, n_areas):
    """Per-area sums of the mean-dependent NB terms over one regime's cells.

    Adding ``regime_count_part`` gives the full log-likelihood. Only the
    entry of ``only_area`` is filled when it is >= 0.
    """
    n = y.shape[0]
    p = beta.shape[0]
    lr = math.log(r)
    out = np.zeros(n_areas)
    for c in range(n):
        a = areas[c]
        if only_area >= 0 and a != only_area:
            continue
        eta = beta0[a] + rho * ly1[c]
        for q in range(p):
            eta += xcell[c, q] * beta[q]
        u = eta - lr
        d = softplus(u)
        out[a] += y[c] * (u - d) - r * d
    return out


@njit(cache=True)
def regime_count_part(y, r):
    """sum over cells of lgamma(y + r) - lgamma(r) - lgamma(y + 1)."""
    acc = 0.0
    lg = math.lgamma(r)
    for c in range(y.shape[0]):
        acc += math.lgamma(y[c] + r) - lg - math.lgamma(y[c] + 1.0)
    return acc


@njit(cache=True)
def min_rate_gap(x, beta0_en, beta0_ob, beta_en, beta_ob, only_area):
    """min over areas i (or one area) and t >= 1 of OB minus EN log transmission rate."""
    N, T, p = x.shape
    best = np.inf
    for i in range(N):
        if only_area >= 0 and i != only_area:
            continue
        d0 = beta0_ob[i] - beta0_en[i]
        for t in range(1, T):
            g = d0
            for q in range(p):
                g += x[i, t, q] * (beta_ob[q] - beta_en[q])
            if g < best:
                best = g
    return best


@njit(cache=True)
def rows_loglik(kind, outcome, zcell, nsum, a0, a, sp, b0, b, sb):
    """Log-likelihood of observed transitions out of one probabilistic row kind.

    kind 0 (absence row, outcome 1 = emergence), kind 3 (outbreak exit,
    outcome 1 = persistence) use (a0, a, sp). kind 2 (endemic exit) uses
    (a0, a, sp) for extinction and (b0, b, sb) for outbreak emergence with
    outcome 0 stay, 1 absence, 2 outbreak. kind 4 is the two-state endemic
    exit (outcome 1 = outbreak) with (b0, b, sb).
    """
    n = outcome.shape[0]
    p = zcell.shape[1]
    acc = 0.0
    for c in range(n):
        if kind == 2:
            e1 = a0 + sp * nsum[c]
            e2 = b0 + sb * nsum[c]
            for q in range(p):
                e1 += zcell[c, q] * a[q]
                e2 += zcell[c, q] * b[q]
            mx = max(0.0, max(e1, e2))
            lse = mx + math.log(math.exp(-mx) + math.exp(e1 - mx) + math.exp(e2 - mx))
            o = outcome[c]
            if o == 0:
                acc -= lse
            elif o == 1:
                acc += e1 - lse
            else:
                acc += e2 - lse
        else:
            if kind == 4:
                e = b0 + sb * nsum[c]
                for q in range(p):
                    e += zcell[c, q] * b[q]
            else:
                e = a0 + sp * nsum[c]
                for q in range(p):
                    e += zcell[c, q] * a[q]
            if outcome[c] == 1:
                acc += log_expit(e)
            else:
                acc += log_expit(-e)
    return acc
