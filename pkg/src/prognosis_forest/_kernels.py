"""Compiled inner loops for tree growing and forest prediction.

Class codes are 0 = alive, 1 = dead.  Split quality is compared through the
Gini "purity proxy" ``(a_l^2 + d_l^2)/n_l + (a_r^2 + d_r^2)/n_r`` which is
minimised-impurity-equivalent and is evaluated as a single division of two
exact int64 quantities, so rationally equal candidates compare equal.
"""

import numpy as np
from numba import njit

KIND_RF = 0
KIND_ET = 1


@njit(cache=True)
def _proxy(al, dl, ar, dr):
    nl = al + dl
    nr = ar + dr
    num = (al * al + dl * dl) * nr + (ar * ar + dr * dr) * nl
    return num / (nl * nr)


@njit(cache=True)
def _improves(al, dl, ar, dr):
    a = al + ar
    d = dl + dr
    m = a + d
    nl = al + dl
    nr = ar + dr
    num = (al * al + dl * dl) * nr + (ar * ar + dr * dr) * nl
    return num * m > (a * a + d * d) * (nl * nr)


@njit(cache=True)
def rank_codes(X):
    """Per-feature dense ranks of X plus the sorted distinct values.

    Returns (codes (n, f) int64, uniq flat float64, offsets (f + 1,) int64).
    """
    n, n_feat = X.shape
    codes = np.empty((n, n_feat), dtype=np.int64)
    uniq = np.empty(n * n_feat, dtype=np.float64)
    offsets = np.zeros(n_feat + 1, dtype=np.int64)
    pos = 0
    for f in range(n_feat):
        col = X[:, f].copy()
        order = np.argsort(col)
        u = -1
        prev = 0.0
        for r in range(n):
            v = col[order[r]]
            if u < 0 or v != prev:
                u += 1
                uniq[pos + u] = v
                prev = v
            codes[order[r], f] = u
        pos += u + 1
        offsets[f + 1] = pos
    return codes, uniq[:pos].copy(), offsets


@njit(cache=True)
def rf_best_on_features(
    codes, uniq, uoff, y, idx, start, end, features, min_leaf, hist_a, hist_d, present
):
    """Exhaustive midpoint search over ``features`` (ascending order).

    Works on dense rank codes: a per-node class histogram over the codes when
    the feature has few distinct values relative to the node size, otherwise
    a sort of the node's codes.  Returns (feature, cut, proxy); feature == -1
    when no admissible split improves the node impurity.  The histogram
    scratch buffers must be zero on entry and are left zeroed.
    """
    m = end - start
    a_tot = 0
    for i in range(start, end):
        if y[idx[i]] == 0:
            a_tot += 1
    d_tot = m - a_tot
    best_f = -1
    best_cut = 0.0
    best_p = -1.0
    for fi in range(features.shape[0]):
        f = features[fi]
        base = uoff[f]
        n_u = uoff[f + 1] - base
        for i in range(start, end):
            j = idx[i]
            if y[j] == 0:
                hist_a[codes[j, f]] += 1
            else:
                hist_d[codes[j, f]] += 1
        # ascending list of codes present at this node
        n_p = 0
        if n_u <= 4 * m:
            for c in range(n_u):
                if hist_a[c] + hist_d[c] > 0:
                    present[n_p] = c
                    n_p += 1
        else:
            for i in range(start, end):
                present[i - start] = codes[idx[i], f]
            srt = np.sort(present[:m])
            for i in range(m):
                if i == 0 or srt[i] != srt[i - 1]:
                    present[n_p] = srt[i]
                    n_p += 1
        al = 0
        dl = 0
        for q in range(n_p - 1):
            c = present[q]
            al += hist_a[c]
            dl += hist_d[c]
            nl = al + dl
            if nl < min_leaf or m - nl < min_leaf:
                continue
            ar = a_tot - al
            dr = d_tot - dl
            if not _improves(al, dl, ar, dr):
                continue
            p = _proxy(al, dl, ar, dr)
            if p > best_p:
                v0 = uniq[base + c]
                v1 = uniq[base + present[q + 1]]
                cv = 0.5 * (v0 + v1)
                if cv >= v1:
                    cv = v0
                best_p = p
                best_f = f
                best_cut = cv
        for q in range(n_p):
            c = present[q]
            hist_a[c] = 0
            hist_d[c] = 0
    return best_f, best_cut, best_p


@njit(cache=True)
def et_best_on_features(X, y, idx, start, end, features, min_leaf):
    """One uniform random cut per feature in (min, max); best couple wins.

    Uses numba's seeded global RNG stream.
    """
    best_f = -1
    best_cut = 0.0
    best_p = -1.0
    for fi in range(features.shape[0]):
        f = features[fi]
        lo = np.inf
        hi = -np.inf
        for i in range(start, end):
            v = X[idx[i], f]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        if not lo < hi:
            continue
        cut = lo + np.random.random() * (hi - lo)
        while not (lo < cut < hi):
            cut = lo + np.random.random() * (hi - lo)
        al = 0
        dl = 0
        ar = 0
        dr = 0
        for i in range(start, end):
            j = idx[i]
            if X[j, f] <= cut:
                if y[j] == 0:
                    al += 1
                else:
                    dl += 1
            else:
                if y[j] == 0:
                    ar += 1
                else:
                    dr += 1
        if al + dl < min_leaf or ar + dr < min_leaf:
            continue
        p = _proxy(al, dl, ar, dr)
        if p > best_p:
            best_p = p
            best_f = f
            best_cut = cut
    return best_f, best_cut, best_p


@njit(cache=True)
def _draw_features(X, idx, start, end, k, perm):
    """Random feature order; constant-at-node features do not count toward k."""
    n_feat = perm.shape[0]
    for i in range(n_feat):
        perm[i] = i
    chosen = np.empty(k, dtype=np.int64)
    n_chosen = 0
    for i in range(n_feat):
        if n_chosen == k:
            break
        j = i + np.random.randint(0, n_feat - i)
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
        f = perm[i]
        first = X[idx[start], f]
        varies = False
        for r in range(start + 1, end):
            if X[idx[r], f] != first:
                varies = True
                break
        if varies:
            chosen[n_chosen] = f
            n_chosen += 1
    return np.sort(chosen[:n_chosen])


@njit(cache=True)
def grow_tree(X, codes, uniq, uoff, y, idx, kind, max_depth, min_leaf, k, seed):
    """Grow one tree over the (possibly repeated) sample indices ``idx``.

    ``max_depth`` < 0 means unlimited.  Returns node arrays trimmed to size.
    """
    np.random.seed(seed)
    m = idx.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    cut = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, 2), dtype=np.int64)
    perm = np.empty(X.shape[1], dtype=np.int64)
    hist_a = np.zeros(X.shape[0], dtype=np.int64)
    hist_d = np.zeros(X.shape[0], dtype=np.int64)
    present = np.empty(max(m, X.shape[0]), dtype=np.int64)

    # stack rows: node, start, end, depth
    stack = np.empty((cap, 4), dtype=np.int64)
    sp = 0
    stack[sp, 0] = 0
    stack[sp, 1] = 0
    stack[sp, 2] = m
    stack[sp, 3] = 0
    sp += 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]
        a = 0
        for i in range(start, end):
            if y[idx[i]] == 0:
                a += 1
        d = (end - start) - a
        counts[node, 0] = a
        counts[node, 1] = d
        if a == 0 or d == 0:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if end - start < 2 * min_leaf:
            continue
        feats = _draw_features(X, idx, start, end, k, perm)
        if feats.shape[0] == 0:
            continue
        if kind == KIND_RF:
            f, c, p = rf_best_on_features(
                codes, uniq, uoff, y, idx, start, end, feats, min_leaf,
                hist_a, hist_d, present,
            )
        else:
            f, c, p = et_best_on_features(X, y, idx, start, end, feats, min_leaf)
        if f < 0:
            continue
        # stable in-place partition of idx[start:end]
        tmp = idx[start:end].copy()
        lo = start
        for i in range(tmp.shape[0]):
            if X[tmp[i], f] <= c:
                idx[lo] = tmp[i]
                lo += 1
        hi = lo
        for i in range(tmp.shape[0]):
            if X[tmp[i], f] > c:
                idx[hi] = tmp[i]
                hi += 1
        feature[node] = f
        cut[node] = c
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[sp, 0] = n_nodes + 1
        stack[sp, 1] = lo
        stack[sp, 2] = end
        stack[sp, 3] = depth + 1
        sp += 1
        stack[sp, 0] = n_nodes
        stack[sp, 1] = start
        stack[sp, 2] = lo
        stack[sp, 3] = depth + 1
        sp += 1
        n_nodes += 2
    return (
        feature[:n_nodes].copy(),
        cut[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )


@njit(cache=True)
def bootstrap_indices(n, seed):
    np.random.seed(seed)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = np.random.randint(0, n)
    return out


@njit(cache=True)
def forest_leaves(X, feature, cut, left, right, offsets):
    """Global leaf index reached by every row in every tree: (n_trees, n_rows)."""
    n_trees = offsets.shape[0] - 1
    n = X.shape[0]
    out = np.empty((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        base = offsets[t]
        for r in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[r, feature[base + node]] <= cut[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[t, r] = base + node
    return out


@njit(cache=True)
def seed_stream(seed):
    np.random.seed(seed)
