"""Per-trajectory inner loops over factorized squared weights.

Every localization operator is diagonal in the configuration basis, so a
product state stays a product state and a register-coupled state keeps
the form

    |amp(sigma, P)|^2 = prod_i w_i(sigma_i) * D2[outs(sigma), P] * H2[P]

with one squared weight pair per marble (registers mirror marbles on the
support, so a register hit updates the same pair), the fixed coupling
kernel D2 indexed by out-count and pointer value, and the pointer weight
vector H2.  Site-selection probabilities and collapse checks then reduce
to O(n^2) dynamic programs over out-counts, which is what makes
ensembles at n = 25 affordable where dense evolution (2^51 branches)
is not.

Weight pairs are renormalized to unit sum after every update and H2 to
unit maximum; every reported quantity is a ratio, so the lost global
scale is irrelevant and the factors never underflow.

Kernels are compiled with numba when available and run as plain Python
otherwise (identical arithmetic, much slower).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


@njit(cache=True, nogil=True)
def _count_poly(w_in, w_out, skip, out):
    """Coefficients over out-counts of prod_{j != skip} (w_in_j + w_out_j x)."""
    n = w_in.shape[0]
    out[:] = 0.0
    out[0] = 1.0
    used = 0
    for j in range(n):
        if j == skip:
            continue
        used += 1
        for c in range(used, 0, -1):
            out[c] = out[c] * w_in[j] + out[c - 1] * w_out[j]
        out[0] *= w_in[j]


@njit(cache=True, nogil=True)
def _maxplus_table(w_in, w_out, table):
    """table[j+1][c] = best weight over the first j+1 marbles with c out."""
    n = w_in.shape[0]
    table[:, :] = 0.0
    table[0, 0] = 1.0
    for j in range(n):
        table[j + 1, 0] = table[j, 0] * w_in[j]
        for c in range(1, j + 2):
            stay = table[j, c] * w_in[j]
            move = table[j, c - 1] * w_out[j]
            table[j + 1, c] = stay if stay >= move else move


@njit(cache=True, nogil=True)
def _best_weight(table, d2, h2):
    """Largest single-configuration weight max_{c,P} table[n,c]*D2[c,P]*H2[P]."""
    n = table.shape[0] - 1
    best = 0.0
    for c in range(n + 1):
        umax = table[n, c]
        if umax <= 0.0:
            continue
        for p in range(n + 1):
            w = umax * d2[c, p] * h2[p]
            if w > best:
                best = w
    return best


@njit(cache=True, nogil=True)
def _smallest_mask(table, w_in, w_out, count):
    """Lexicographically smallest marble mask achieving table[n, count].

    Walks marbles from the highest index down, keeping a marble IN (bit
    clear) whenever an optimal completion allows it, which minimizes the
    packed key.
    """
    n = w_in.shape[0]
    mask = np.int64(0)
    c = count
    for j in range(n - 1, -1, -1):
        target = table[j + 1, c]
        if c <= j and table[j, c] * w_in[j] == target:
            continue
        mask |= np.int64(1) << np.int64(j)
        c -= 1
    return mask


@njit(cache=True, nogil=True)
def _norm_total(u_full, g):
    n1 = u_full.shape[0]
    total = 0.0
    for c in range(n1):
        total += u_full[c] * g[c]
    return total


@njit(cache=True, nogil=True)
def product_trial(w_in, w_out, t, delta, subs, us, selections):
    """Evolve one uncoupled product state through a hit schedule.

    Mutates w_in/w_out in place, records the selected site per event, and
    returns (first_collapse_index, final_dominant_mask, final_dominant
    probability).  The index is -2 when the input is already collapsed
    and -1 when the trajectory never crosses the threshold.
    """
    n = w_in.shape[0]
    t2 = t * t
    threshold = 1.0 - delta
    first = np.int64(-1)

    dom = 1.0
    for i in range(n):
        dom *= w_in[i] if w_in[i] >= w_out[i] else w_out[i]
    if dom >= threshold:
        first = np.int64(-2)

    for e in range(subs.shape[0]):
        i = subs[e]
        p_in = (w_in[i] + t2 * w_out[i]) / (1.0 + t2)
        if us[e] < p_in:
            selections[e] = 0
            w_out[i] *= t2
        else:
            selections[e] = 1
            w_in[i] *= t2
        s = w_in[i] + w_out[i]
        w_in[i] /= s
        w_out[i] /= s
        if first == -1:
            dom = 1.0
            for j in range(n):
                dom *= w_in[j] if w_in[j] >= w_out[j] else w_out[j]
            if dom >= threshold:
                first = np.int64(e)

    mask = np.int64(0)
    dom = 1.0
    for i in range(n):
        if w_out[i] > w_in[i]:
            mask |= np.int64(1) << np.int64(i)
            dom *= w_out[i]
        else:
            dom *= w_in[i]
    return first, mask, dom


@njit(cache=True, nogil=True)
def coupled_trial(w_in, w_out, d2, h2, t, delta, subs, us, selections, in_masses):
    """Evolve one register-coupled state through a hit schedule.

    Subsystems 0..n-1 are marbles, n..2n-1 registers (hitting the mirror
    of the same factor), 2n the pointer.  Mutates w_in/w_out/h2 in place
    and fills selections (chosen site or pointer value per event) and
    in_masses (final probability of each marble being IN).  Returns
    (first_collapse_index, dominant_mask, dominant_pointer, dominant
    probability, final all-IN conjunction mass); index -2 means already
    collapsed on input, -1 means never collapsed.
    """
    n = w_in.shape[0]
    t2 = t * t
    threshold = 1.0 - delta
    first = np.int64(-1)

    g = np.empty(n + 1)
    for c in range(n + 1):
        acc = 0.0
        for p in range(n + 1):
            acc += d2[c, p] * h2[p]
        g[c] = acc

    u_full = np.empty(n + 1)
    u_minus = np.empty(n + 1)
    table = np.empty((n + 1, n + 1))
    col = np.empty(n + 1)

    _count_poly(w_in, w_out, -1, u_full)
    _maxplus_table(w_in, w_out, table)
    if _best_weight(table, d2, h2) >= threshold * _norm_total(u_full, g):
        first = np.int64(-2)

    for e in range(subs.shape[0]):
        sub = subs[e]
        if sub < 2 * n:
            i = sub if sub < n else sub - n
            _count_poly(w_in, w_out, i, u_minus)
            a_in = 0.0
            a_out = 0.0
            for c in range(n):
                a_in += u_minus[c] * g[c]
                a_out += u_minus[c] * g[c + 1]
            s_in = w_in[i] * a_in + t2 * w_out[i] * a_out
            s_out = t2 * w_in[i] * a_in + w_out[i] * a_out
            if us[e] * (s_in + s_out) < s_in:
                selections[e] = 0
                w_out[i] *= t2
            else:
                selections[e] = 1
                w_in[i] *= t2
            s = w_in[i] + w_out[i]
            w_in[i] /= s
            w_out[i] /= s
        else:
            _count_poly(w_in, w_out, -1, u_full)
            total_n = _norm_total(u_full, g)
            for p in range(n + 1):
                s_col = 0.0
                for c in range(n + 1):
                    s_col += u_full[c] * d2[c, p]
                col[p] = (1.0 - t2) * s_col * h2[p] + t2 * total_n
            total_w = 0.0
            for p in range(n + 1):
                total_w += col[p]
            u_scaled = us[e] * total_w
            acc = 0.0
            chosen = np.int64(0)
            for p in range(n + 1):
                if col[p] <= 0.0:
                    continue
                acc += col[p]
                chosen = np.int64(p)
                if u_scaled < acc:
                    break
            selections[e] = chosen
            for p in range(n + 1):
                if p != chosen:
                    h2[p] *= t2
            hmax = 0.0
            for p in range(n + 1):
                if h2[p] > hmax:
                    hmax = h2[p]
            for p in range(n + 1):
                h2[p] /= hmax
            for c in range(n + 1):
                acc = 0.0
                for p in range(n + 1):
                    acc += d2[c, p] * h2[p]
                g[c] = acc

        if first == -1:
            _count_poly(w_in, w_out, -1, u_full)
            _maxplus_table(w_in, w_out, table)
            if _best_weight(table, d2, h2) >= threshold * _norm_total(u_full, g):
                first = np.int64(e)

    _count_poly(w_in, w_out, -1, u_full)
    _maxplus_table(w_in, w_out, table)
    total_n = _norm_total(u_full, g)
    best = _best_weight(table, d2, h2)

    # Dominant configuration, lowest packed key first: the pointer sits in
    # the highest bits, so minimize P, then the marble mask.
    best_p = np.int64(-1)
    for p in range(n + 1):
        done = False
        for c in range(n + 1):
            if table[n, c] * d2[c, p] * h2[p] == best:
                best_p = np.int64(p)
                done = True
                break
        if done:
            break
    best_mask = np.int64(-1)
    for c in range(n + 1):
        if table[n, c] * d2[c, best_p] * h2[best_p] == best:
            mask = _smallest_mask(table, w_in, w_out, c)
            if best_mask < 0 or mask < best_mask:
                best_mask = mask

    for i in range(n):
        _count_poly(w_in, w_out, i, u_minus)
        acc = 0.0
        for c in range(n):
            acc += u_minus[c] * g[c]
        in_masses[i] = w_in[i] * acc / total_n

    conj = 1.0
    for i in range(n):
        conj *= w_in[i]
    conj = conj * g[0] / total_n

    return first, best_mask, best_p, best / total_n, conj
