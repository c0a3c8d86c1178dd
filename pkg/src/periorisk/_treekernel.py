"""Compiled split search and tree growth used by :mod:`periorisk.forest`."""

import numpy as np
from numba import njit

TIE_TOL = 1e-12


@njit(cache=True)
def _gini2(n, n1):
    p1 = n1 / n
    return 2.0 * p1 * (1.0 - p1)


@njit(cache=True)
def best_split_rows(X, y, rows, cand, is_factor, n_levels):
    """Best Gini split of ``rows`` over the (sorted) candidate variables.

    Every candidate rule is scored in order (variable ascending, then
    threshold ascending or subset bitmask ascending); the first rule within
    TIE_TOL of the maximum wins. Returns (found, var, delta, threshold, mask).
    """
    n = rows.size
    n1_total = 0.0
    for i in range(n):
        n1_total += y[rows[i]]
    g = _gini2(n, n1_total)

    cap = 0
    for c in range(cand.size):
        v = cand[c]
        cap += (2 ** (n_levels[v] - 1)) if is_factor[v] else n
    deltas = np.empty(cap)
    rule_var = np.empty(cap, dtype=np.int64)
    rule_thr = np.empty(cap)
    rule_mask = np.empty(cap, dtype=np.int64)
    m = 0
    xs = np.empty(n)
    for c in range(cand.size):
        v = cand[c]
        for i in range(n):
            xs[i] = X[rows[i], v]
        if is_factor[v]:
            L = n_levels[v]
            cnt = np.zeros(L)
            cnt1 = np.zeros(L)
            for i in range(n):
                k = int(xs[i])
                cnt[k] += 1.0
                cnt1[k] += y[rows[i]]
            present = np.empty(L, dtype=np.int64)
            n_present = 0
            for k in range(L):
                if cnt[k] > 0:
                    present[n_present] = k
                    n_present += 1
            if n_present < 2:
                continue
            for mask in range(2 ** (n_present - 1) - 1):
                nl = cnt[present[0]]
                n1l = cnt1[present[0]]
                code_mask = 1 << present[0]
                for b in range(n_present - 1):
                    if (mask >> b) & 1:
                        lv = present[b + 1]
                        nl += cnt[lv]
                        n1l += cnt1[lv]
                        code_mask |= 1 << lv
                nr = n - nl
                n1r = n1_total - n1l
                deltas[m] = g - (nl * _gini2(nl, n1l) + nr * _gini2(nr, n1r)) / n
                rule_var[m] = v
                rule_thr[m] = 0.0
                rule_mask[m] = code_mask
                m += 1
        else:
            order = np.argsort(xs, kind="mergesort")
            c1 = 0.0
            for i in range(n - 1):
                c1 += y[rows[order[i]]]
                a = xs[order[i]]
                b = xs[order[i + 1]]
                if a < b:
                    nl = i + 1.0
                    nr = n - nl
                    deltas[m] = g - (nl * _gini2(nl, c1) + nr * _gini2(nr, n1_total - c1)) / n
                    rule_var[m] = v
                    rule_thr[m] = 0.5 * (a + b)
                    rule_mask[m] = 0
                    m += 1
    if m == 0:
        return False, -1, 0.0, 0.0, 0
    best = deltas[0]
    for i in range(1, m):
        if deltas[i] > best:
            best = deltas[i]
    for i in range(m):
        if deltas[i] >= best - TIE_TOL:
            if deltas[i] <= TIE_TOL:
                return False, -1, 0.0, 0.0, 0
            return True, rule_var[i], deltas[i], rule_thr[i], rule_mask[i]
    return False, -1, 0.0, 0.0, 0


@njit(cache=True)
def grow(X, y, is_factor, n_levels, mtry, min_node_size, keys):
    """Grow one tree depth-first.

    ``keys[node]`` holds uniform random keys; the ``mtry`` smallest pick the
    node's candidate variables. Node ids are assigned at creation, so the
    tree does not depend on traversal order.
    """
    n_root = y.size
    d = X.shape[1]
    max_nodes = 2 * n_root
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left_mask = np.zeros(max_nodes, dtype=np.int64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    p1 = np.zeros(max_nodes)
    nn = np.zeros(max_nodes, dtype=np.int64)
    importance = np.zeros(d)

    idx = np.arange(n_root)
    buf = np.empty(n_root, dtype=np.int64)
    st_node = np.empty(max_nodes, dtype=np.int64)
    st_lo = np.empty(max_nodes, dtype=np.int64)
    st_hi = np.empty(max_nodes, dtype=np.int64)

    n1 = 0.0
    for i in range(n_root):
        n1 += y[i]
    p1[0] = n1 / n_root
    nn[0] = n_root
    count = 1
    st_node[0], st_lo[0], st_hi[0] = 0, 0, n_root
    top = 1
    while top > 0:
        top -= 1
        node, lo, hi = st_node[top], st_lo[top], st_hi[top]
        n = hi - lo
        if n < min_node_size or p1[node] == 0.0 or p1[node] == 1.0:
            continue
        cand = np.sort(np.argsort(keys[node])[:mtry])
        rows = idx[lo:hi]
        found, var, delta, thr, mask = best_split_rows(X, y, rows, cand, is_factor, n_levels)
        if not found:
            continue
        nl = 0
        nr = 0
        n1l = 0.0
        n1r = 0.0
        for i in range(n):
            r = rows[i]
            x = X[r, var]
            if mask > 0:
                go_left = ((mask >> int(x)) & 1) == 1
            else:
                go_left = x <= thr
            if go_left:
                idx[lo + nl] = r
                nl += 1
                n1l += y[r]
            else:
                buf[nr] = r
                nr += 1
                n1r += y[r]
        for i in range(nr):
            idx[lo + nl + i] = buf[i]
        feature[node] = var
        threshold[node] = thr
        left_mask[node] = mask
        importance[var] += n / n_root * delta
        lc = count
        rc = count + 1
        count += 2
        left[node] = lc
        right[node] = rc
        p1[lc] = n1l / nl
        p1[rc] = n1r / nr
        nn[lc] = nl
        nn[rc] = nr
        st_node[top], st_lo[top], st_hi[top] = rc, lo + nl, hi
        top += 1
        st_node[top], st_lo[top], st_hi[top] = lc, lo, lo + nl
        top += 1
    return (feature[:count], threshold[:count], left_mask[:count], left[:count],
            right[:count], p1[:count], nn[:count], importance)
