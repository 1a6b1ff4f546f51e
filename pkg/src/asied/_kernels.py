"""Compiled inner loops for the partition sampler.

A tree of at most two rounds is stored in three slots: 0 = root, 1 = split
of the root's left child, 2 = split of the root's right child.  ``var[j] < 0``
means the slot does not split.  ``thr`` holds the continuous threshold, the
ordinal cutoff, or 0.5 for binary biomarkers; ``mask`` holds the left category
set of a categorical split as a bitmask (bit c-1 for category c).

Randomness comes from numba's internal generator, which callers seed
explicitly through :func:`seed` before each use.
"""

import math

import numpy as np
from numba import njit

CONTINUOUS, BINARY, ORDINAL, CATEGORICAL = 0, 1, 2, 3
MAX_LEAVES = 4
NEG_INF = -np.inf
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True, nogil=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True, nogil=True)
def popcount(m):
    c = 0
    while m:
        m &= m - 1
        c += 1
    return c


@njit(cache=True, nogil=True)
def n_leaves(var):
    if var[0] < 0:
        return 1
    return (2 if var[1] >= 0 else 1) + (2 if var[2] >= 0 else 1)


@njit(cache=True, nogil=True)
def goes_left(k, kind, t, m, x):
    if kind == CATEGORICAL:
        return ((m >> (int(x[k]) - 1)) & 1) == 1
    return x[k] <= t


@njit(cache=True, nogil=True)
def route(var, thr, mask, kinds, x):
    if var[0] < 0:
        return 0
    n_left = 2 if var[1] >= 0 else 1
    if goes_left(var[0], kinds[var[0]], thr[0], mask[0], x):
        if var[1] < 0:
            return 0
        return 0 if goes_left(var[1], kinds[var[1]], thr[1], mask[1], x) else 1
    if var[2] < 0:
        return n_left
    return n_left if goes_left(var[2], kinds[var[2]], thr[2], mask[2], x) else n_left + 1


@njit(cache=True, nogil=True)
def assign_all(var, thr, mask, kinds, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        out[i] = route(var, thr, mask, kinds, X[i])
    return out


# ---------------------------------------------------------------- prior

@njit(cache=True, nogil=True)
def node_space(node, k, var, thr, mask, kinds, levels, lo, hi):
    """Payload space of biomarker k at a slot: (low, high, category set).

    Continuous: thresholds in [low, high).  Ordinal: cutoffs low..high.
    Binary: available iff high > low.  Categorical: splits of the set.
    """
    kind = kinds[k]
    same = node > 0 and var[0] == k
    left = node == 1
    if kind == CONTINUOUS:
        a = lo[k]
        b = hi[k]
        if same:
            if left:
                b = thr[0]
            else:
                a = thr[0]
        return a, b, 0
    if kind == BINARY:
        return 0.0, (0.0 if same else 1.0), 0
    if kind == ORDINAL:
        a = 1.0
        b = levels[k] - 1.0
        if same:
            if left:
                b = thr[0] - 1.0
            else:
                a = thr[0] + 1.0
        return a, b, 0
    full = (1 << levels[k]) - 1
    A = full
    if same:
        A = mask[0] if left else full ^ mask[0]
    return 0.0, 0.0, A


@njit(cache=True, nogil=True)
def space_available(kind, a, b, A):
    if kind == CONTINUOUS or kind == BINARY:
        return b > a
    if kind == ORDINAL:
        return b >= a
    return popcount(A) >= 2


@njit(cache=True, nogil=True)
def payload_logdensity(kind, a, b, A, t, m, open_low):
    if kind == CONTINUOUS:
        if t < a or t >= b or (open_low and t <= a):
            return NEG_INF
        return -math.log(b - a)
    if kind == BINARY:
        return 0.0
    if kind == ORDINAL:
        if t != math.floor(t) or t < a or t > b:
            return NEG_INF
        return -math.log(b - a + 1.0)
    low = A & (-A)
    if m == 0 or (m & ~A) != 0 or m == A or (m & low) == 0:
        return NEG_INF
    return -math.log(2.0 ** (popcount(A) - 1) - 1.0)


@njit(cache=True, nogil=True)
def selection_total(node, var, thr, mask, kinds, levels, lo, hi, nu):
    z = nu[0]
    for k in range(kinds.shape[0]):
        a, b, A = node_space(node, k, var, thr, mask, kinds, levels, lo, hi)
        if space_available(kinds[k], a, b, A):
            z += nu[k + 1]
    return z


@njit(cache=True, nogil=True)
def slot_logprior(node, var, thr, mask, kinds, levels, lo, hi, nu):
    z = selection_total(node, var, thr, mask, kinds, levels, lo, hi, nu)
    k = var[node]
    if k < 0:
        if z <= 0.0:
            return 0.0  # nothing can be chosen: stopping is forced
        if nu[0] <= 0.0:
            return NEG_INF
        return math.log(nu[0] / z)
    if k >= kinds.shape[0] or nu[k + 1] <= 0.0:
        return NEG_INF
    a, b, A = node_space(node, k, var, thr, mask, kinds, levels, lo, hi)
    if not space_available(kinds[k], a, b, A):
        return NEG_INF
    open_low = node == 2 and var[0] == k
    return math.log(nu[k + 1] / z) + payload_logdensity(kinds[k], a, b, A, thr[node], mask[node], open_low)


@njit(cache=True, nogil=True)
def log_prior(var, thr, mask, kinds, levels, lo, hi, nu):
    lp = slot_logprior(0, var, thr, mask, kinds, levels, lo, hi, nu)
    if var[0] < 0:
        if var[1] >= 0 or var[2] >= 0:
            return NEG_INF
        return lp
    for node in (1, 2):
        if lp == NEG_INF:
            return lp
        lp += slot_logprior(node, var, thr, mask, kinds, levels, lo, hi, nu)
    return lp


@njit(cache=True, nogil=True)
def draw_canonical_subset(A):
    """Uniform split of category set A into two nonempty halves; returns the
    half holding the lowest category of A."""
    low = A & (-A)
    rest = A ^ low
    r = popcount(rest)
    j = int(np.random.random() * (2.0 ** r - 1.0))
    m = low
    bit = 0
    tmp = rest
    while tmp:
        b = tmp & (-tmp)
        if (j >> bit) & 1:
            m |= b
        bit += 1
        tmp ^= b
    return m


@njit(cache=True, nogil=True)
def draw_slot(node, var, thr, mask, kinds, levels, lo, hi, nu):
    z = selection_total(node, var, thr, mask, kinds, levels, lo, hi, nu)
    var[node] = -1
    thr[node] = 0.0
    mask[node] = 0
    if z <= 0.0:
        return
    u = np.random.random() * z
    acc = nu[0]
    if u < acc:
        return
    K = kinds.shape[0]
    chosen = -1
    for k in range(K):
        a, b, A = node_space(node, k, var, thr, mask, kinds, levels, lo, hi)
        if not space_available(kinds[k], a, b, A):
            continue
        acc += nu[k + 1]
        chosen = k
        if u < acc:
            break
    if chosen < 0:
        return
    k = chosen
    a, b, A = node_space(node, k, var, thr, mask, kinds, levels, lo, hi)
    kind = kinds[k]
    var[node] = k
    if kind == CONTINUOUS:
        t = a + np.random.random() * (b - a)
        while node == 2 and var[0] == k and t <= a:
            t = a + np.random.random() * (b - a)
        thr[node] = t
    elif kind == BINARY:
        thr[node] = 0.5
    elif kind == ORDINAL:
        thr[node] = a + math.floor(np.random.random() * (b - a + 1.0))
    else:
        mask[node] = draw_canonical_subset(A)


@njit(cache=True, nogil=True)
def sample_prior(kinds, levels, lo, hi, nu):
    var = np.full(3, -1, dtype=np.int64)
    thr = np.zeros(3)
    mask = np.zeros(3, dtype=np.int64)
    draw_slot(0, var, thr, mask, kinds, levels, lo, hi, nu)
    if var[0] >= 0:
        draw_slot(1, var, thr, mask, kinds, levels, lo, hi, nu)
        draw_slot(2, var, thr, mask, kinds, levels, lo, hi, nu)
    return var, thr, mask


# ------------------------------------------------------------ likelihood

@njit(cache=True, nogil=True)
def cell_stats(var, thr, mask, kinds, X, arm, y, T):
    """Per-(arm, leaf) count, sum and sum of squares; ``arm`` is 0-based."""
    count = np.zeros((T, MAX_LEAVES))
    total = np.zeros((T, MAX_LEAVES))
    sumsq = np.zeros((T, MAX_LEAVES))
    for i in range(X.shape[0]):
        m = route(var, thr, mask, kinds, X[i])
        t = arm[i]
        count[t, m] += 1.0
        total[t, m] += y[i]
        sumsq[t, m] += y[i] * y[i]
    return count, total, sumsq


@njit(cache=True, nogil=True)
def lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True, nogil=True)
def log_marginal_stats(count, total, sumsq, outcome, a, b, hyper):
    """Collapsed log evidence.  outcome 0 = binary (Beta priors a[t], b[t]),
    1 = continuous (hyper = theta0, kappa0, nu0, sigma0^2; shared variance)."""
    T, M = count.shape
    if outcome == 0:
        out = 0.0
        for t in range(T):
            for m in range(M):
                n = count[t, m]
                if n > 0:
                    s = total[t, m]
                    out += lbeta(s + a[t], n - s + b[t]) - lbeta(a[t], b[t])
        return out
    theta0 = hyper[0]
    kappa0 = hyper[1]
    alpha0 = 0.5 * hyper[2]
    beta0 = 0.5 * hyper[2] * hyper[3]
    n_all = 0.0
    quad = 0.0
    logdet = 0.0
    for t in range(T):
        for m in range(M):
            n = count[t, m]
            if n > 0:
                su = total[t, m] - n * theta0
                su2 = sumsq[t, m] - 2.0 * theta0 * total[t, m] + n * theta0 * theta0
                q = su2 - su * su / (kappa0 + n)
                if q < 0.0:
                    q = 0.0
                quad += q
                logdet += 0.5 * (math.log(kappa0) - math.log(kappa0 + n))
                n_all += n
    if n_all == 0:
        return 0.0
    alpha_n = alpha0 + 0.5 * n_all
    beta_n = beta0 + 0.5 * quad
    return (-0.5 * n_all * LOG_2PI + logdet + alpha0 * math.log(beta0) - alpha_n * math.log(beta_n)
            + math.lgamma(alpha_n) - math.lgamma(alpha0))


@njit(cache=True, nogil=True)
def tree_log_marginal(var, thr, mask, kinds, X, arm, y, T, outcome, a, b, hyper):
    count, total, sumsq = cell_stats(var, thr, mask, kinds, X, arm, y, T)
    return log_marginal_stats(count, total, sumsq, outcome, a, b, hyper)


# ------------------------------------------------------------ MH moves

@njit(cache=True, nogil=True)
def threshold_sweep(var, thr, mask, lp, lm, kinds, levels, lo, hi, nu, rw_sd,
                    X, arm, y, T, outcome, a, b, hyper, counters):
    """Metropolis update of every non-binary payload with the split
    variables held fixed.  Mutates the tree in place; returns (lp, lm)."""
    for node in range(3):
        k = var[node]
        if k < 0:
            continue
        kind = kinds[k]
        if kind == BINARY:
            continue
        t_old = thr[node]
        m_old = mask[node]
        if kind == CONTINUOUS:
            t = t_old + rw_sd[k] * np.random.normal()
            width = hi[k] - lo[k]
            if width > 0:
                while t < lo[k] or t > hi[k]:
                    if t < lo[k]:
                        t = 2.0 * lo[k] - t
                    else:
                        t = 2.0 * hi[k] - t
            thr[node] = t
        elif kind == ORDINAL:
            thr[node] = 1.0 + math.floor(np.random.random() * (levels[k] - 1.0))
        else:
            _, _, A = node_space(node, k, var, thr, mask, kinds, levels, lo, hi)
            if popcount(A) < 2:
                continue
            mask[node] = draw_canonical_subset(A)
        counters[0] += 1
        lp_new = log_prior(var, thr, mask, kinds, levels, lo, hi, nu)
        if lp_new == NEG_INF:
            thr[node] = t_old
            mask[node] = m_old
            continue
        lm_new = tree_log_marginal(var, thr, mask, kinds, X, arm, y, T, outcome, a, b, hyper)
        if math.log(np.random.random()) < (lp_new + lm_new) - (lp + lm):
            lp = lp_new
            lm = lm_new
            counters[1] += 1
        else:
            thr[node] = t_old
            mask[node] = m_old
    return lp, lm


@njit(cache=True, nogil=True)
def structure_move(var, thr, mask, lp, lm, kinds, levels, lo, hi, nu,
                   X, arm, y, T, outcome, a, b, hyper, counters):
    """Independence proposal of a whole tree from the prior; the prior and
    proposal densities cancel, leaving the marginal-likelihood ratio."""
    nv, nt, nm = sample_prior(kinds, levels, lo, hi, nu)
    counters[2] += 1
    lm_new = tree_log_marginal(nv, nt, nm, kinds, X, arm, y, T, outcome, a, b, hyper)
    if math.log(np.random.random()) < lm_new - lm:
        var[:] = nv
        thr[:] = nt
        mask[:] = nm
        counters[3] += 1
        return log_prior(var, thr, mask, kinds, levels, lo, hi, nu), lm_new
    return lp, lm


@njit(cache=True, nogil=True)
def run_chain(var, thr, mask, kinds, levels, lo, hi, nu, rw_sd,
              X, arm, y, T, outcome, a, b, hyper, n_iter, burn_in, thin, rng_seed):
    np.random.seed(rng_seed)
    n_keep = 0
    for it in range(burn_in, n_iter):
        if (it - burn_in) % thin == 0:
            n_keep += 1
    out_var = np.empty((n_keep, 3), dtype=np.int64)
    out_thr = np.empty((n_keep, 3))
    out_mask = np.empty((n_keep, 3), dtype=np.int64)
    trace = np.empty(n_keep)
    counters = np.zeros(4, dtype=np.int64)
    lp = log_prior(var, thr, mask, kinds, levels, lo, hi, nu)
    lm = tree_log_marginal(var, thr, mask, kinds, X, arm, y, T, outcome, a, b, hyper)
    j = 0
    for it in range(n_iter):
        lp, lm = threshold_sweep(var, thr, mask, lp, lm, kinds, levels, lo, hi, nu, rw_sd,
                                 X, arm, y, T, outcome, a, b, hyper, counters)
        lp, lm = structure_move(var, thr, mask, lp, lm, kinds, levels, lo, hi, nu,
                                X, arm, y, T, outcome, a, b, hyper, counters)
        if it >= burn_in and (it - burn_in) % thin == 0:
            out_var[j] = var
            out_thr[j] = thr
            out_mask[j] = mask
            trace[j] = lp + lm
            j += 1
    return out_var, out_thr, out_mask, trace, counters


@njit(cache=True, nogil=True)
def batch_cell_stats(tvar, tthr, tmask, kinds, X, arm, y, T):
    B = tvar.shape[0]
    count = np.zeros((B, T, MAX_LEAVES))
    total = np.zeros((B, T, MAX_LEAVES))
    sumsq = np.zeros((B, T, MAX_LEAVES))
    for j in range(B):
        c, s, q = cell_stats(tvar[j], tthr[j], tmask[j], kinds, X, arm, y, T)
        count[j] = c
        total[j] = s
        sumsq[j] = q
    return count, total, sumsq


@njit(cache=True, nogil=True)
def grid_leaf_map(var, thr, mask, kinds, axes, dims):
    """Leaf index of every point of the product grid (C order)."""
    K = dims.shape[0]
    G = 1
    for k in range(K):
        G *= dims[k]
    out = np.empty(G, dtype=np.int8)
    x = np.empty(K)
    idx = np.zeros(K, dtype=np.int64)
    for k in range(K):
        x[k] = axes[k, 0]
    for g in range(G):
        out[g] = route(var, thr, mask, kinds, x)
        k = K - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < dims[k]:
                x[k] = axes[k, idx[k]]
                break
            idx[k] = 0
            x[k] = axes[k, 0]
            k -= 1
    return out
