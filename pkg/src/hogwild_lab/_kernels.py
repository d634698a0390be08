"""Numba inner loops shared by the sequential, delay-simulated and parallel engines.

All engines draw from numpy ``Generator`` objects in the same order (example,
then filter, then masks, each from its own stream) and compute gradients and
deltas with the same helper functions, so the reductions between them hold
bit for bit.  Deltas are always formed as ``-(eta * mult) * g`` and added.
"""
import math

import numpy as np
from numba import njit

OK = 0
DIVERGED = 1

PARTITION = 0
FRACTION = 1

ALL_IN = 0
NONE_IN = 1
BERNOULLI = 2
PER_COORDINATE = 3

BLOWUP = 1e100


@njit(cache=True)
def sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def margin_coef(kind, yi, xv, lo, wv, m):
    """Derivative of the data loss with respect to the margin <x_i, w>."""
    dot = 0.0
    for k in range(m):
        dot += xv[lo + k] * wv[k]
    if kind == 0:
        return -yi * sigmoid(-yi * dot)
    return 2.0 * (dot - yi)


@njit(cache=True)
def choose_filter(m, D, fmode, v, filt_rng, sel, perm):
    """Fill ``sel[:count]`` with chosen support positions; return (count, multiplier)."""
    if fmode == PARTITION:
        d = min(D, m)
        u = 0
        if d > 1:
            u = filt_rng.integers(0, d)
        q = m // d
        r = m - q * d
        start = u * q + min(u, r)
        size = q + 1 if u < r else q
        for j in range(size):
            sel[j] = start + j
        return size, float(d)
    k = max(1, int(math.floor(v * m + 0.5)))
    if k >= m:
        for j in range(m):
            sel[j] = j
        return m, 1.0
    for j in range(m):
        perm[j] = j
    for j in range(k):
        r = filt_rng.integers(j, m)
        tmp = perm[j]
        perm[j] = perm[r]
        perm[r] = tmp
    chosen = np.sort(perm[:k])
    for j in range(k):
        sel[j] = chosen[j]
    return k, m / k


@njit(cache=True)
def _bad(x):
    return not (abs(x) < BLOWUP)


@njit(nogil=True, cache=True)
def seq_segment(w, t0, t1, etas, D, fmode, v, indptr, idx, xv, y, rw, lam, kind, n,
                ex_rng, filt_rng, wv, sel, perm, stats):
    """Iterations ``t0 .. t1-1`` of the filtered recursion with consistent reads.

    ``stats[0]`` accumulates coordinate writes.  Returns (t_reached, status).
    """
    for t in range(t0, t1):
        eta = etas[t - t0]
        i = ex_rng.integers(0, n)
        lo = indptr[i]
        m = indptr[i + 1] - lo
        if m == 0:
            continue
        for k in range(m):
            wv[k] = w[idx[lo + k]]
        cnt, mult = choose_filter(m, D, fmode, v, filt_rng, sel, perm)
        coef = margin_coef(kind, y[i], xv, lo, wv, m)
        step = eta * mult
        for j in range(cnt):
            k = sel[j]
            h = idx[lo + k]
            g = coef * xv[lo + k] + (lam * rw[h]) * wv[k]
            w[h] += -(step * g)
            if _bad(w[h]):
                stats[0] += j + 1
                return t + 1, DIVERGED
        stats[0] += cnt
    return t1, OK


@njit(nogil=True, cache=True)
def batch_segment(w, t0, t1, etas, D, k_batch, enumerate_all, indptr, idx, xv, y, rw,
                  lam, kind, n, ex_rng, filt_rng, wv, sel, perm, pos, uni, acc, stats):
    """Mini-batch filtered steps: average the batch gradient on the union support."""
    for t in range(t0, t1):
        eta = etas[t - t0]
        nb = n if enumerate_all else k_batch
        usize = 0
        for b in range(nb):
            i = b if enumerate_all else ex_rng.integers(0, n)
            lo = indptr[i]
            m = indptr[i + 1] - lo
            if m == 0:
                continue
            for k in range(m):
                wv[k] = w[idx[lo + k]]
            coef = margin_coef(kind, y[i], xv, lo, wv, m)
            for k in range(m):
                h = idx[lo + k]
                if pos[h] < 0:
                    pos[h] = usize
                    uni[usize] = h
                    acc[usize] = 0.0
                    usize += 1
                acc[pos[h]] += coef * xv[lo + k] + (lam * rw[h]) * wv[k]
        if usize == 0:
            continue
        order = np.argsort(uni[:usize])
        cnt, mult = choose_filter(usize, D, PARTITION, 1.0, filt_rng, sel, perm)
        step = eta * mult
        bad = False
        for j in range(cnt):
            slot = order[sel[j]]
            h = uni[slot]
            g = acc[slot] / nb
            w[h] += -(step * g)
            if _bad(w[h]):
                bad = True
        for s in range(usize):
            pos[uni[s]] = -1
        stats[0] += cnt
        if bad:
            return t + 1, DIVERGED
    return t1, OK


@njit(nogil=True, cache=True)
def delay_segment(committed, shadow, t0, t1, etas, taus, D, fmode, v, mask_policy, mask_p,
                  indptr, idx, xv, y, rw, lam, kind, n, ex_rng, filt_rng, mask_rng,
                  ring_idx, ring_val, ring_len, ring_iter, ring_state,
                  wv, sel, perm, pos, cut, stats, read_log, log_reads):
    """Delay-``tau`` simulation of inconsistent reads.

    ``committed`` holds every update through iteration ``t - tau``; the ring buffer
    holds the most recent ones (oldest first from ``ring_state[0]``).  The read
    vector adds a masked subset of the pending updates, in chronological order.
    ``taus[t - t0]`` is the delay in force at iteration ``t`` (length t1 - t0 + 1).
    ``shadow`` receives every delta immediately, as an independent record of w_t.
    """
    cap = ring_len.shape[0]
    for t in range(t0, t1):
        eta = etas[t - t0]
        head = ring_state[0]
        count = ring_state[1]
        i = ex_rng.integers(0, n)
        lo = indptr[i]
        m = indptr[i + 1] - lo
        new_slot = (head + count) % cap
        ring_len[new_slot] = 0
        ring_iter[new_slot] = t
        if m > 0:
            for k in range(m):
                h = idx[lo + k]
                pos[h] = k
                wv[k] = committed[h]
            if mask_policy == PER_COORDINATE and count > 0:
                for k in range(m):
                    cut[k] = mask_rng.integers(0, count + 1)
            for r in range(count):
                slot = (head + r) % cap
                for e in range(ring_len[slot]):
                    h = ring_idx[slot, e]
                    k = pos[h]
                    if k < 0:
                        continue
                    if mask_policy == ALL_IN:
                        take = True
                    elif mask_policy == NONE_IN:
                        take = False
                    elif mask_policy == BERNOULLI:
                        take = mask_rng.random() < mask_p
                    else:
                        take = r < cut[k]
                    if take:
                        wv[k] += ring_val[slot, e]
            if log_reads:
                for k in range(m):
                    read_log[t - t0, idx[lo + k]] = wv[k]
            cnt, mult = choose_filter(m, D, fmode, v, filt_rng, sel, perm)
            coef = margin_coef(kind, y[i], xv, lo, wv, m)
            step = eta * mult
            bad = False
            for j in range(cnt):
                k = sel[j]
                h = idx[lo + k]
                g = coef * xv[lo + k] + (lam * rw[h]) * wv[k]
                delta = -(step * g)
                ring_idx[new_slot, j] = h
                ring_val[new_slot, j] = delta
                shadow[h] += delta
                if _bad(shadow[h]):
                    bad = True
            ring_len[new_slot] = cnt
            for k in range(m):
                pos[idx[lo + k]] = -1
            stats[0] += cnt
        else:
            bad = False
        count += 1
        tau_next = taus[t - t0 + 1]
        while count > tau_next:
            for e in range(ring_len[head]):
                committed[ring_idx[head, e]] += ring_val[head, e]
            head = (head + 1) % cap
            count -= 1
        ring_state[0] = head
        ring_state[1] = count
        if bad:
            return t + 1, DIVERGED
    return t1, OK
