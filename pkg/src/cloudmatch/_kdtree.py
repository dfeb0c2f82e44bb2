"""Compiled k-d tree kernels.

Nodes are stored in flat arrays. A node covers ``perm[start:end]``; inner
nodes split on ``dim`` at ``split`` with every left point having coordinate
<= split and every right point >= split. Squared distances are accumulated
as ``dx*dx + dy*dy + dz*dz`` (in that order) everywhere so that results are
bitwise comparable with a plain linear scan.
"""

import numpy as np
from numba import njit

LEAF_SIZE = 8


@njit(cache=True)
def build_tree(points, leaf_size):
    n = points.shape[0]
    perm = np.arange(n)
    max_nodes = 2 * (n // max(leaf_size, 1) + 1) * 2 + 1
    start = np.empty(max_nodes, np.int64)
    end = np.empty(max_nodes, np.int64)
    dim = np.full(max_nodes, -1, np.int64)
    split = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)

    n_nodes = 1
    start[0] = 0
    end[0] = n
    stack = np.empty(max_nodes, np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        s = start[node]
        e = end[node]
        if e - s <= leaf_size:
            continue
        best_axis = -1
        best_spread = 0.0
        for axis in range(3):
            lo = np.inf
            hi = -np.inf
            for i in range(s, e):
                v = points[perm[i], axis]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi - lo > best_spread:
                best_spread = hi - lo
                best_axis = axis
        if best_axis < 0:
            # all points coincide; keep as one leaf
            continue
        seg = perm[s:e].copy()
        keys = np.empty(e - s, np.float64)
        for i in range(e - s):
            keys[i] = points[seg[i], best_axis]
        order = np.argsort(keys, kind="mergesort")
        for i in range(e - s):
            perm[s + i] = seg[order[i]]
        mid = (s + e) // 2
        dim[node] = best_axis
        split[node] = points[perm[mid], best_axis]
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        start[lnode] = s
        end[lnode] = mid
        start[rnode] = mid
        end[rnode] = e
        left[node] = lnode
        right[node] = rnode
        stack[top] = lnode
        top += 1
        stack[top] = rnode
        top += 1
    return (perm, start[:n_nodes].copy(), end[:n_nodes].copy(), dim[:n_nodes].copy(),
            split[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy())


@njit(cache=True)
def _nearest_one(points, perm, start, end, dim, split, left, right, q0, q1, q2, stack_node, stack_bound):
    best_d2 = np.inf
    best_idx = points.shape[0]
    visits = 0
    stack_node[0] = 0
    stack_bound[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        if stack_bound[top] > best_d2:
            continue
        visits += 1
        d = dim[node]
        if d < 0:
            for i in range(start[node], end[node]):
                j = perm[i]
                dx = points[j, 0] - q0
                dy = points[j, 1] - q1
                dz = points[j, 2] - q2
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best_d2 or (d2 == best_d2 and j < best_idx):
                    best_d2 = d2
                    best_idx = j
            continue
        if d == 0:
            qd = q0
        elif d == 1:
            qd = q1
        else:
            qd = q2
        diff = qd - split[node]
        if diff < 0.0:
            near = left[node]
            far = right[node]
        else:
            near = right[node]
            far = left[node]
        parent_bound = stack_bound[top]
        stack_node[top] = far
        stack_bound[top] = max(parent_bound, diff * diff)
        top += 1
        stack_node[top] = near
        stack_bound[top] = parent_bound
        top += 1
    return best_idx, best_d2, visits


@njit(cache=True)
def nearest_batch(points, perm, start, end, dim, split, left, right, queries):
    m = queries.shape[0]
    out_idx = np.empty(m, np.int64)
    out_d2 = np.empty(m, np.float64)
    out_visits = np.empty(m, np.int64)
    depth = 2 * (start.shape[0] + 1)
    stack_node = np.empty(depth, np.int64)
    stack_bound = np.empty(depth, np.float64)
    for i in range(m):
        idx, d2, v = _nearest_one(points, perm, start, end, dim, split, left, right,
                                  queries[i, 0], queries[i, 1], queries[i, 2],
                                  stack_node, stack_bound)
        out_idx[i] = idx
        out_d2[i] = d2
        out_visits[i] = v
    return out_idx, out_d2, out_visits


@njit(cache=True)
def knn_batch(points, perm, start, end, dim, split, left, right, queries, k):
    m = queries.shape[0]
    out_idx = np.empty((m, k), np.int64)
    out_d2 = np.empty((m, k), np.float64)
    depth = 2 * (start.shape[0] + 1)
    stack_node = np.empty(depth, np.int64)
    stack_bound = np.empty(depth, np.float64)
    bd2 = np.empty(k, np.float64)
    bidx = np.empty(k, np.int64)
    for qi in range(m):
        q0 = queries[qi, 0]
        q1 = queries[qi, 1]
        q2 = queries[qi, 2]
        count = 0
        stack_node[0] = 0
        stack_bound[0] = 0.0
        top = 1
        while top > 0:
            top -= 1
            node = stack_node[top]
            worst = bd2[k - 1] if count == k else np.inf
            if stack_bound[top] > worst:
                continue
            d = dim[node]
            if d < 0:
                for i in range(start[node], end[node]):
                    j = perm[i]
                    dx = points[j, 0] - q0
                    dy = points[j, 1] - q1
                    dz = points[j, 2] - q2
                    d2 = dx * dx + dy * dy + dz * dz
                    if count == k:
                        if d2 > bd2[k - 1] or (d2 == bd2[k - 1] and j > bidx[k - 1]):
                            continue
                        pos = k - 1
                    else:
                        pos = count
                        count += 1
                    # insertion keeps (d2, index) ascending
                    while pos > 0 and (bd2[pos - 1] > d2 or (bd2[pos - 1] == d2 and bidx[pos - 1] > j)):
                        bd2[pos] = bd2[pos - 1]
                        bidx[pos] = bidx[pos - 1]
                        pos -= 1
                    bd2[pos] = d2
                    bidx[pos] = j
                continue
            if d == 0:
                qd = q0
            elif d == 1:
                qd = q1
            else:
                qd = q2
            diff = qd - split[node]
            if diff < 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            parent_bound = stack_bound[top]
            stack_node[top] = far
            stack_bound[top] = max(parent_bound, diff * diff)
            top += 1
            stack_node[top] = near
            stack_bound[top] = parent_bound
            top += 1
        for i in range(k):
            out_idx[qi, i] = bidx[i]
            out_d2[qi, i] = bd2[i]
    return out_idx, out_d2
