"""Compiled per-site window enumeration shared by every OCA quantity.

For site ``i`` with window ``V_i = g(i) + [i] + f(i)`` (local positions
``0..w-1``, centre at ``c = |g(i)|``), ``_window_scores`` returns

    A[k] = log sum_{free labels, label at centre = k} exp(beta * agree + emis)

where ``agree`` counts equal-label pairs of ``H_i`` and ``emis`` sums
``logf[j, z_j]`` over the emission-carrying free positions. Pair terms that
touch only fixed positions are dropped: they are constant across the
enumeration and cancel from every ratio built on ``A``.

Modes:
    OBSERVED  free = centre + f(i), no emission terms
    LATENT    free = centre + f(i), emission on f(i)
    MARGINAL  free = whole window, emission on g(i)
"""
import os

import numpy as np
from numba import config, njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB layer is unusable on older TBB builds; workqueue always is
    config.THREADING_LAYER = "workqueue"

OBSERVED = 0
LATENT = 1
MARGINAL = 2


@njit(cache=True, nogil=True)
def _logsumexp(a):
    m = -np.inf
    for v in a:
        if v > m:
            m = v
    if m == -np.inf:
        return m
    s = 0.0
    for v in a:
        s += np.exp(v - m)
    return m + np.log(s)


@njit(cache=True, nogil=True)
def _window_scores(i, z, members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                   beta, logf, k_states, mode, out):
    lo = member_ptr[i]
    w = member_ptr[i + 1] - lo
    c = n_past[i]
    free0 = 0 if mode == MARGINAL else c
    nfree = w - free0

    # unary[p, k]: score of label k at free position p from fixed neighbours
    # and emission; pairs between two free positions are kept separately
    unary = np.zeros((nfree, k_states))
    fa = np.empty(pair_ptr[i + 1] - pair_ptr[i], dtype=np.int64)
    fb = np.empty_like(fa)
    nff = 0
    for e in range(pair_ptr[i], pair_ptr[i + 1]):
        a = pair_a[e]
        b = pair_b[e]
        a_free = a >= free0
        b_free = b >= free0
        if a_free and b_free:
            fa[nff] = a - free0
            fb[nff] = b - free0
            nff += 1
        elif a_free:
            unary[a - free0, z[members[lo + b]]] += beta
        elif b_free:
            unary[b - free0, z[members[lo + a]]] += beta
    if mode == LATENT:
        for p in range(c + 1, w):
            site = members[lo + p]
            for k in range(k_states):
                unary[p - free0, k] += logf[site, k]
    elif mode == MARGINAL:
        for p in range(c):
            site = members[lo + p]
            for k in range(k_states):
                unary[p, k] += logf[site, k]

    centre = c - free0
    run_max = np.full(k_states, -np.inf)
    run_sum = np.zeros(k_states)
    lab = np.zeros(nfree, dtype=np.int64)
    total = k_states ** nfree
    for code in range(total):
        rem = code
        for p in range(nfree - 1, -1, -1):
            lab[p] = rem % k_states
            rem //= k_states
        s = 0.0
        for p in range(nfree):
            s += unary[p, lab[p]]
        agree = 0
        for e in range(nff):
            if lab[fa[e]] == lab[fb[e]]:
                agree += 1
        s += beta * agree
        k = lab[centre]
        if s > run_max[k]:
            run_sum[k] = run_sum[k] * np.exp(run_max[k] - s) + 1.0
            run_max[k] = s
        else:
            run_sum[k] += np.exp(s - run_max[k])
    for k in range(k_states):
        out[k] = run_max[k] + np.log(run_sum[k])


@njit(cache=True, parallel=True)
def observed_terms(z, members, member_ptr, n_past, pair_a, pair_b, pair_ptr, beta, k_states):
    """log p_hat(z_i | z_{1:i-1}) for every site, one independent task per site."""
    n = member_ptr.shape[0] - 1
    terms = np.empty(n)
    logf = np.zeros((1, 1))
    for i in prange(n):
        a = np.empty(k_states)
        _window_scores(i, z, members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                       beta, logf, k_states, OBSERVED, a)
        terms[i] = a[z[i]] - _logsumexp(a)
    return terms


@njit(cache=True, parallel=True)
def conditional_table(z, members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                      beta, logf, k_states, mode):
    """Per-site conditional probability vectors given the past of ``z``."""
    n = member_ptr.shape[0] - 1
    probs = np.empty((n, k_states))
    for i in prange(n):
        a = np.empty(k_states)
        _window_scores(i, z, members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                       beta, logf, k_states, mode, a)
        if mode == LATENT:
            for k in range(k_states):
                a[k] += logf[i, k]
        lse = _logsumexp(a)
        for k in range(k_states):
            probs[i, k] = np.exp(a[k] - lse)
    return probs


@njit(cache=True, parallel=True)
def marginal_terms(logf, members, member_ptr, n_past, pair_a, pair_b, pair_ptr, beta, k_states):
    """log p_hat(y_i | y_{g(i)}) for every site."""
    n = member_ptr.shape[0] - 1
    terms = np.empty(n)
    dummy = np.zeros(1, dtype=np.int64)
    for i in prange(n):
        a = np.empty(k_states)
        _window_scores(i, dummy, members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                       beta, logf, k_states, MARGINAL, a)
        num = np.empty(k_states)
        for k in range(k_states):
            num[k] = a[k] + logf[i, k]
        terms[i] = _logsumexp(num) - _logsumexp(a)
    return terms


@njit(cache=True, nogil=True)
def _draw(a, u):
    # inverse-CDF draw from softmax(a)
    k_states = a.shape[0]
    lse = _logsumexp(a)
    acc = 0.0
    for k in range(k_states - 1):
        acc += np.exp(a[k] - lse)
        if u < acc:
            return k
    return k_states - 1


@njit(cache=True, nogil=True)
def sequential_sample(members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                      beta, logf, k_states, mode, uniforms, z, probs):
    """Ancestral draw in ordering: site i conditions on the already drawn past.

    ``z`` is overwritten in place; ``probs`` receives the conditional vector
    used at each site.
    """
    n = member_ptr.shape[0] - 1
    a = np.empty(k_states)
    for i in range(n):
        _window_scores(i, z, members, member_ptr, n_past, pair_a, pair_b, pair_ptr,
                       beta, logf, k_states, mode, a)
        if mode == LATENT:
            for k in range(k_states):
                a[k] += logf[i, k]
        lse = _logsumexp(a)
        for k in range(k_states):
            probs[i, k] = np.exp(a[k] - lse)
        z[i] = _draw(a, uniforms[i])


@njit(cache=True, nogil=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True, nogil=True)
def swendsen_wang_sweeps(z, edges, p_bond, k_states, bond_u, label_u):
    """Run ``bond_u.shape[0]`` Swendsen-Wang sweeps in place.

    Sweep ``t`` opens agreeing edge ``e`` when ``bond_u[t, e] < p_bond``; every
    cluster takes label ``floor(label_u[t, root] * K)`` of its root site.
    Returns S(z) after each sweep.
    """
    n = z.shape[0]
    n_sweeps = bond_u.shape[0]
    parent = np.empty(n, dtype=np.int64)
    stats = np.empty(n_sweeps, dtype=np.int64)
    for t in range(n_sweeps):
        for s in range(n):
            parent[s] = s
        for e in range(edges.shape[0]):
            a = edges[e, 0]
            b = edges[e, 1]
            if z[a] == z[b] and bond_u[t, e] < p_bond:
                ra = _find(parent, a)
                rb = _find(parent, b)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb
        for s in range(n):
            r = _find(parent, s)
            lab = int(label_u[t, r] * k_states)
            if lab >= k_states:
                lab = k_states - 1
            z[s] = lab
        agree = 0
        for e in range(edges.shape[0]):
            if z[edges[e, 0]] == z[edges[e, 1]]:
                agree += 1
        stats[t] = agree
    return stats
