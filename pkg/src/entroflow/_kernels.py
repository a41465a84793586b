"""Greedy thinning kernels over Bowen metrics.

The core operation: scan cloud points in a given order; accept a point iff
its d_n distance to every previously accepted point exceeds delta.  The
equivalent elimination form (accept first alive point, kill its d_n
delta-ball) is what the kernel implements, accelerated by a spatial cell
index on the iterate-0 representatives.  d_n(x, y) <= delta forces the
iterate-0 distance <= delta, so the delta-ball of an accepted point can only
contain points from neighboring cells.

Distances are evaluated on precomputed orbit representative tables:
  prim: (n, N, C) primary chart coordinates per iterate,
  reps: (n, N, R, C) equivalent representatives (R=1 on the torus, R=3 on a
        mapping torus: identity lift and one lift through each seam side).
The pair distance is symmetrized: min over reps of either argument.
"""

from __future__ import annotations

import itertools

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


def build_cell_index(reps0, wrap_mask, delta, reach=2):
    """Cell lists over the iterate-0 representatives.

    Cells are sized around delta/reach so a (2*reach+1)-wide neighborhood
    covers the delta-ball with less overshoot than single-delta cells.
    Wrapped dims are indexed mod the cell count; the unwrapped height dim
    spans the rep range.  Returns dense CSR arrays plus grid geometry.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    N, R, C = reps0.shape
    ncells = np.empty(C, dtype=np.int64)
    origin = np.empty(C)
    csize = np.empty(C)
    for c in range(C):
        if wrap_mask[c]:
            m = max(1, int(reach / delta))
            ncells[c] = m
            origin[c] = 0.0
            csize[c] = 1.0 / m
        else:
            lo = float(reps0[:, :, c].min()) - 1e-9
            hi = float(reps0[:, :, c].max()) + 1e-9
            n = max(1, int(np.ceil((hi - lo) * reach / delta)))
            ncells[c] = n
            origin[c] = lo
            csize[c] = (hi - lo) / n
    # per-dim reach so that reach_c * csize_c >= delta
    reach_dims = np.empty(C, dtype=np.int64)
    for c in range(C):
        reach_dims[c] = max(1, int(np.ceil(delta / csize[c] - 1e-12)))
        reach_dims[c] = min(reach_dims[c], ncells[c])  # no point beyond full wrap
    strides = np.empty(C, dtype=np.int64)
    acc = 1
    for c in range(C - 1, -1, -1):
        strides[c] = acc
        acc *= ncells[c]
    flat = np.zeros(N * R, dtype=np.int64)
    coords = reps0.reshape(N * R, C)
    for c in range(C):
        idx = np.floor((coords[:, c] - origin[c]) / csize[c]).astype(np.int64)
        if wrap_mask[c]:
            idx %= ncells[c]
        else:
            idx = np.clip(idx, 0, ncells[c] - 1)
        flat += idx * strides[c]
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    owner = (order // R).astype(np.int64)
    cell_ptr = np.searchsorted(sorted_flat, np.arange(acc + 1))
    offsets = np.array(
        list(
            itertools.product(
                *(range(-int(reach_dims[c]), int(reach_dims[c]) + 1) for c in range(C))
            )
        ),
        dtype=np.int64,
    )
    wrap_u8 = np.asarray(wrap_mask, dtype=np.uint8)
    return cell_ptr.astype(np.int64), owner, ncells, strides, origin, csize, offsets, wrap_u8


@njit(cache=True)
def _pair_dn_leq(prim, reps, wrap_u8, i, j, n, delta2):
    """True iff the symmetrized d_n(i, j) <= sqrt(delta2).

    Iterates are checked in descending order: late iterates are the most
    expanded, so generic pairs fail there immediately and the early exit
    fires on the first check.
    """
    R = reps.shape[2]
    C = reps.shape[3]
    for it in range(n - 1, -1, -1):
        best = 1e300
        for r in range(R):
            acc = 0.0
            for c in range(C):
                d = prim[it, i, c] - reps[it, j, r, c]
                if wrap_u8[c]:
                    d = d - np.rint(d)
                acc += d * d
            if acc < best:
                best = acc
        if best > delta2:
            for r in range(R):
                acc = 0.0
                for c in range(C):
                    d = prim[it, j, c] - reps[it, i, r, c]
                    if wrap_u8[c]:
                        d = d - np.rint(d)
                    acc += d * d
                if acc < best:
                    best = acc
        if best > delta2:
            return False
    return True


@njit(cache=True)
def _greedy_kernel(
    prim,
    reps,
    wrap_u8,
    n,
    delta,
    order,
    cell_ptr,
    owner,
    ncells,
    strides,
    origin,
    csize,
    offsets,
    accepted_out,
):
    N = prim.shape[1]
    R = reps.shape[2]
    C = reps.shape[3]
    delta2 = delta * delta
    alive = np.ones(N, dtype=np.uint8)
    seen = np.full(N, -1, dtype=np.int64)
    count = 0
    qcell = np.empty(C, dtype=np.int64)
    for oi in range(N):
        idx = order[oi]
        if alive[idx] == 0:
            continue
        accepted_out[count] = idx
        stamp = count
        count += 1
        # kill the d_n delta-ball of idx, querying around each of its reps
        for r in range(R):
            for c in range(C):
                q = np.int64(np.floor((reps[0, idx, r, c] - origin[c]) / csize[c]))
                if wrap_u8[c]:
                    q = q % ncells[c]
                else:
                    if q < 0:
                        q = 0
                    if q >= ncells[c]:
                        q = ncells[c] - 1
                qcell[c] = q
            for oo in range(offsets.shape[0]):
                flat = np.int64(0)
                ok = True
                for c in range(C):
                    v = qcell[c] + offsets[oo, c]
                    if wrap_u8[c]:
                        v = v % ncells[c]
                    else:
                        if v < 0 or v >= ncells[c]:
                            ok = False
                            break
                    flat += v * strides[c]
                if not ok:
                    continue
                for t in range(cell_ptr[flat], cell_ptr[flat + 1]):
                    j = owner[t]
                    if alive[j] == 0 or seen[j] == stamp:
                        continue
                    seen[j] = stamp
                    if _pair_dn_leq(prim, reps, wrap_u8, idx, j, n, delta2):
                        alive[j] = 0
    return count


def greedy_thinning(prim, reps, wrap_mask, n, delta, order):
    """Accepted indices of the greedy separated/covering pass.

    prim: (n_max, N, C); reps: (n_max, N, R, C); order: permutation of N.
    Accept iff d_n to all previously accepted > delta; the accepted set is
    maximal: every unaccepted point sits within delta of an accepted one.
    """
    n = int(n)
    if n < 1 or n > prim.shape[0]:
        raise ValueError("n out of range for the orbit table")
    N = prim.shape[1]
    cell_ptr, owner, ncells, strides, origin, csize, offsets, wrap_u8 = build_cell_index(
        reps[0], wrap_mask, delta
    )
    accepted = np.empty(N, dtype=np.int64)
    if HAVE_NUMBA:
        count = _greedy_kernel(
            np.ascontiguousarray(prim),
            np.ascontiguousarray(reps),
            wrap_u8,
            n,
            float(delta),
            np.ascontiguousarray(order.astype(np.int64)),
            cell_ptr,
            owner,
            ncells,
            strides,
            origin,
            csize,
            offsets,
            accepted,
        )
        return accepted[:count].copy()
    return _greedy_py(
        prim, reps, wrap_u8, n, float(delta), order,
        cell_ptr, owner, ncells, strides, origin, csize, offsets, accepted,
    )


def _greedy_py(
    prim, reps, wrap_u8, n, delta, order,
    cell_ptr, owner, ncells, strides, origin, csize, offsets, accepted,
):  # pragma: no cover - exercised only without numba
    N = prim.shape[1]
    R = reps.shape[2]
    C = reps.shape[3]
    delta2 = delta * delta
    alive = np.ones(N, dtype=bool)
    count = 0
    wrap_b = wrap_u8.astype(bool)
    for idx in order:
        if not alive[idx]:
            continue
        accepted[count] = idx
        count += 1
        cand = set()
        for r in range(R):
            qcell = np.empty(C, dtype=np.int64)
            for c in range(C):
                q = int(np.floor((reps[0, idx, r, c] - origin[c]) / csize[c]))
                qcell[c] = q % ncells[c] if wrap_b[c] else min(max(q, 0), ncells[c] - 1)
            for off in offsets:
                flat = 0
                ok = True
                for c in range(C):
                    v = qcell[c] + off[c]
                    if wrap_b[c]:
                        v %= ncells[c]
                    elif v < 0 or v >= ncells[c]:
                        ok = False
                        break
                    flat += v * strides[c]
                if ok:
                    cand.update(owner[cell_ptr[flat]:cell_ptr[flat + 1]].tolist())
        cand = np.array([j for j in cand if alive[j]], dtype=np.int64)
        if cand.size == 0:
            continue
        live = cand
        for it in range(n - 1, -1, -1):
            da = prim[it, idx][None, None, :] - reps[it, live]
            da[..., wrap_b] -= np.round(da[..., wrap_b])
            da = np.min(np.sum(da * da, axis=-1), axis=-1)
            db = prim[it, live][:, None, :] - reps[it, idx][None, :, :]
            db[..., wrap_b] -= np.round(db[..., wrap_b])
            db = np.min(np.sum(db * db, axis=-1), axis=-1)
            keep = np.minimum(da, db) <= delta2
            live = live[keep]
            if live.size == 0:
                break
        alive[live] = False
        alive[idx] = False
    return accepted[:count].copy()
