"""Entropy estimation from separated and spanning counts in Bowen metrics.

d_n(x, y) = max_{0 <= i < n} d(f^i x, f^i y).  Separated counts a(n, delta)
are lower-bound witnesses for entropy, spanning counts b(n, delta) upper
ones; the valid comparison direction for greedy outputs is
b(2 delta) <= a(delta).  Rates come from a least-squares slope of
log(count) against n over an automatically chosen affine window at the
smallest delta of the schedule.
"""

from __future__ import annotations

import itertools
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .systems import SystemHandle

__all__ = [
    "SampleCloud",
    "SeparatedSet",
    "EntropyEstimate",
    "dn_distance",
    "max_separated",
    "min_spanning_greedy",
    "entropy_estimate",
    "exhaustive_max_separated",
    "grid_cloud",
    "random_cloud",
]

#: estimators refuse radii beyond the documented injectivity scale
DELTA_CAP = 0.2


class SampleCloud:
    """Finite point set in a system's phase space.

    Points are canonical and pairwise distinct (duplicates closer than
    1e-12 per coordinate are dropped at construction).  Orbit tables are
    computed once per (system, n) and shared read-only.
    """

    def __init__(self, space, points, provenance="unspecified", restriction="whole_space"):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.size == 0:
            raise ValueError("sample cloud must be nonempty")
        if points.shape[1] != space.dim:
            raise ValueError(
                f"points have dimension {points.shape[1]}, space has {space.dim}"
            )
        points = space.canonicalize(points)
        rounded = np.round(points, 12)
        _, keep = np.unique(rounded, axis=0, return_index=True)
        keep.sort()
        self.points = points[keep]
        self.space = space
        self.provenance = provenance
        self.restriction = restriction
        self._orbit_cache = {}

    def __len__(self):
        return self.points.shape[0]

    def orbit_table(self, sys: SystemHandle, n):
        """(n, N, dim) iterates; cached and extended monotonically."""
        key = sys.describe()
        cached = self._orbit_cache.get(key)
        if cached is None or cached.shape[0] < n:
            table = sys.orbit_table(self.points, n)
            self._orbit_cache[key] = table
            cached = table
        return cached[:n]

    def rep_table(self, sys: SystemHandle, n):
        """Orbit representatives for the kernels: (n, N, R, C)."""
        key = ("reps", sys.describe())
        cached = self._orbit_cache.get(key)
        if cached is None or cached.shape[0] < n:
            orbits = self.orbit_table(sys, n)
            reps = np.stack([self.space.lift_reps(orbits[i]) for i in range(n)])
            self._orbit_cache[key] = reps
            cached = reps
        return cached[:n]


@dataclass(frozen=True)
class SeparatedSet:
    """Indices of a greedy-maximal (n, delta)-separated subset of a cloud."""

    indices: np.ndarray
    n: int
    delta: float
    order_seed: int

    @property
    def count(self):
        return int(self.indices.size)


def _check_radius(delta):
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta > DELTA_CAP:
        raise ValueError(
            f"delta {delta} exceeds the supported radius cap {DELTA_CAP}"
        )


def dn_distance(sys: SystemHandle, x, y, n):
    """Bowen distance: max over iterates 0..n-1 of the phase-space metric."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ox = sys.orbit_table(np.atleast_2d(np.asarray(x, dtype=float)), n)
    oy = sys.orbit_table(np.atleast_2d(np.asarray(y, dtype=float)), n)
    best = 0.0
    for i in range(n):
        d = float(np.max(sys.space.distance(ox[i], oy[i])))
        if d > best:
            best = d
    return best


def _require_same_space(sys, cloud):
    if cloud.space is not sys.space and cloud.space.__dict__ != sys.space.__dict__:
        if getattr(cloud.space, "kind", None) != getattr(sys.space, "kind", None) or (
            cloud.space.dim != sys.space.dim
        ):
            raise ValueError("cloud and system live in different spaces")


def max_separated(sys: SystemHandle, cloud: SampleCloud, n, delta, order_seed=0):
    """Greedy maximal (n, delta)-separated subset, scanned in seeded order.

    Deterministic given (cloud, n, delta, order_seed).  Every point of the
    cloud not selected is within delta of a selected point in d_n.
    """
    _check_radius(delta)
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_same_space(sys, cloud)
    prim = cloud.orbit_table(sys, n)
    reps = cloud.rep_table(sys, n)
    order = np.random.default_rng(order_seed).permutation(len(cloud))
    accepted = _kernels.greedy_thinning(
        prim, reps, cloud.space.wrap_mask, n, delta, order
    )
    return SeparatedSet(indices=accepted, n=int(n), delta=float(delta), order_seed=int(order_seed))


def min_spanning_greedy(sys: SystemHandle, cloud: SampleCloud, n, delta):
    """Greedy delta-cover of the cloud in d_n; count >= the true minimum.

    Centers are taken as the first uncovered point in index order, so they
    are pairwise separated at delta; that makes the sandwich
    b(2 delta) <= a(delta) provable for the greedy outputs.  No order
    relation with max_separated at the same (n, delta) is asserted.
    """
    _check_radius(delta)
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_same_space(sys, cloud)
    prim = cloud.orbit_table(sys, n)
    reps = cloud.rep_table(sys, n)
    order = np.arange(len(cloud))
    accepted = _kernels.greedy_thinning(
        prim, reps, cloud.space.wrap_mask, n, delta, order
    )
    return int(accepted.size)


@dataclass(frozen=True)
class EntropyEstimate:
    """Rate fit over a count table indexed by (n, delta)."""

    rate: float
    slope_stderr: float
    fit_window: tuple
    n_schedule: tuple
    delta_schedule: tuple
    order_seed: int
    cloud_size: int
    #: rows (n, delta, count, saturated)
    counts: tuple
    diagnostics: dict = field(default_factory=dict, compare=False)

    def count(self, n, delta):
        for row in self.counts:
            if row[0] == n and row[1] == delta:
                return row[2]
        raise KeyError((n, delta))


def _ols_line(xs, ys):
    """Least squares line fit: slope, intercept, slope stderr, max |residual|."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    m = xs.size
    xb = xs.mean()
    yb = ys.mean()
    sxx = float(np.sum((xs - xb) ** 2))
    if sxx == 0:
        return 0.0, yb, 0.0, float(np.max(np.abs(ys - yb))) if m else 0.0
    slope = float(np.sum((xs - xb) * (ys - yb)) / sxx)
    icpt = yb - slope * xb
    resid = ys - (slope * xs + icpt)
    if m > 2:
        stderr = math.sqrt(float(np.sum(resid ** 2)) / (m - 2) / sxx)
    else:
        stderr = 0.0
    return slope, icpt, stderr, float(np.max(np.abs(resid)))


def _affine_window(ns, logs):
    """Largest contiguous window where the fit is affine within tolerance.

    A window qualifies when its max residual stays below
    max(2 * slope_stderr * span, 0.02 nats); the slope-uncertainty term is
    scaled by the window span to keep the comparison in nats.  Ties prefer
    later windows (closer to the asymptotic regime).
    """
    m = len(ns)
    best = None
    for i in range(m):
        for j in range(i + 2, m):
            slope, _, stderr, maxres = _ols_line(ns[i : j + 1], logs[i : j + 1])
            span = ns[j] - ns[i]
            if maxres <= max(2.0 * stderr * span, 0.02):
                key = (j - i, i)
                if best is None or key > best[0]:
                    best = (key, (i, j, slope, stderr))
    if best is not None:
        i, j, slope, stderr = best[1]
        return i, j, slope, stderr, True
    # fallback: full range, flagged as lacking an affine window
    slope, _, stderr, _ = _ols_line(ns, logs)
    return 0, m - 1, slope, stderr, False


def _column_counts(system, cloud, n_schedule, delta, order_seed):
    """Count rows for one delta column, skipping past first saturation."""
    N = len(cloud)
    rows = []
    saturated_from = None
    for n in n_schedule:
        if saturated_from is not None:
            # saturation persists: count == N means every pair is
            # d_n-separated, and d_{n+1} >= d_n keeps them separated
            rows.append((n, delta, N, 1))
            continue
        sep = max_separated(system, cloud, n, delta, order_seed)
        rows.append((n, delta, sep.count, int(sep.count >= N)))
        if sep.count >= N:
            saturated_from = n
    return rows


#: read by forked column workers; set just before the pool starts
_COLUMN_STATE = None


def _forked_column(delta):  # pragma: no cover - runs inside worker processes
    system, cloud, n_schedule, order_seed = _COLUMN_STATE
    return _column_counts(system, cloud, n_schedule, delta, order_seed)


def entropy_estimate(
    sys: SystemHandle,
    cloud: SampleCloud,
    n_schedule,
    delta_schedule,
    order_seed=0,
    workers=1,
):
    """Separated-count table plus a rate fit at the smallest delta.

    Counts that hit the cloud size are flagged saturated and excluded from
    the fit window.  With an all-flat table the rate degenerates to 0.

    Delta columns are mutually independent, so workers > 1 farms them to
    forked processes; every row depends only on (system, cloud, n, delta,
    order_seed), hence the table is identical for any worker count.
    """
    n_schedule = sorted(set(int(n) for n in n_schedule))
    if not n_schedule or n_schedule[0] < 1:
        raise ValueError("n_schedule must contain integers >= 1")
    delta_schedule = sorted(set(float(d) for d in delta_schedule), reverse=True)
    if not delta_schedule:
        raise ValueError("delta_schedule must be nonempty")
    for d in delta_schedule:
        _check_radius(d)
    n_max = n_schedule[-1]
    # warm the caches once; forked workers inherit the tables copy-on-write
    cloud.rep_table(sys, n_max)
    N = len(cloud)
    use_workers = min(int(workers), len(delta_schedule))
    if use_workers > 1 and "fork" in multiprocessing.get_all_start_methods():
        global _COLUMN_STATE
        _COLUMN_STATE = (sys, cloud, list(n_schedule), order_seed)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=use_workers, mp_context=ctx) as pool:
                columns = list(pool.map(_forked_column, delta_schedule))
        finally:
            _COLUMN_STATE = None
    else:
        columns = [
            _column_counts(sys, cloud, n_schedule, delta, order_seed)
            for delta in delta_schedule
        ]
    rows = [row for column in columns for row in column]
    d_min = delta_schedule[-1]
    fit_rows = [r for r in rows if r[1] == d_min and not r[3]]
    diagnostics = {"saturated_any": any(r[3] for r in rows), "affine_window_found": True}
    if len(fit_rows) >= 3:
        ns = [r[0] for r in fit_rows]
        logs = [math.log(r[2]) for r in fit_rows]
        i, j, slope, stderr, found = _affine_window(ns, logs)
        window = (ns[i], ns[j])
        diagnostics["affine_window_found"] = found
    elif len(fit_rows) == 2:
        ns = [r[0] for r in fit_rows]
        logs = [math.log(r[2]) for r in fit_rows]
        slope = (logs[1] - logs[0]) / (ns[1] - ns[0])
        stderr = 0.0
        window = (ns[0], ns[1])
        diagnostics["affine_window_found"] = False
    else:
        slope, stderr = 0.0, 0.0
        window = (n_schedule[0], n_schedule[0])
        diagnostics["affine_window_found"] = False
    counts_at_dmin = [r[2] for r in rows if r[1] == d_min]
    if len(set(r[2] for r in rows)) == 1:
        slope, stderr = 0.0, 0.0  # degenerate: all counts equal
    rate = max(slope, 0.0)
    # per-delta slopes over unsaturated rows, for diagnostics
    per_delta = {}
    for delta in delta_schedule:
        sel = [(r[0], math.log(r[2])) for r in rows if r[1] == delta and not r[3]]
        if len(sel) >= 2:
            s, _, _, _ = _ols_line([x for x, _ in sel], [y for _, y in sel])
            per_delta[delta] = s
    diagnostics["per_delta_slopes"] = per_delta
    diagnostics["monotonicity_violations"] = count_table_violations(rows)
    return EntropyEstimate(
        rate=rate,
        slope_stderr=stderr,
        fit_window=window,
        n_schedule=tuple(n_schedule),
        delta_schedule=tuple(delta_schedule),
        order_seed=int(order_seed),
        cloud_size=N,
        counts=tuple(rows),
        diagnostics=diagnostics,
    )


def count_table_violations(rows):
    """Monotonicity violations in a count table.

    Checks counts nondecreasing in n at fixed delta and nonincreasing in
    delta at fixed n.  Returns a list of human-readable strings.
    """
    out = []
    by_delta = {}
    by_n = {}
    for n, delta, count, _sat in rows:
        by_delta.setdefault(delta, []).append((n, count))
        by_n.setdefault(n, []).append((delta, count))
    for delta, seq in by_delta.items():
        seq.sort()
        for (n0, c0), (n1, c1) in zip(seq, seq[1:]):
            if c1 < c0:
                out.append(f"count drops from {c0} to {c1} between n={n0} and n={n1} at delta={delta}")
    for n, seq in by_n.items():
        seq.sort(reverse=True)
        for (d0, c0), (d1, c1) in zip(seq, seq[1:]):
            if c1 < c0:
                out.append(f"count drops from {c0} to {c1} between delta={d0} and delta={d1} at n={n}")
    return out


def exhaustive_max_separated(dn_matrix, delta):
    """True maximum (n, delta)-separated cardinality by subset search.

    Branch and bound over the separation graph; intended for clouds of at
    most ~15 points as an oracle against the greedy pass.
    """
    dn_matrix = np.asarray(dn_matrix, dtype=float)
    m = dn_matrix.shape[0]
    if m > 22:
        raise ValueError("exhaustive search capped at 22 points")
    adj = dn_matrix > delta  # edge = pair may coexist
    best = 0

    def extend(chosen_count, candidates):
        nonlocal best
        if chosen_count + len(candidates) <= best:
            return
        if not candidates:
            best = max(best, chosen_count)
            return
        v = candidates[0]
        rest = candidates[1:]
        extend(chosen_count + 1, [u for u in rest if adj[v, u]])
        extend(chosen_count, rest)

    extend(0, list(range(m)))
    return best


def grid_cloud(sys: SystemHandle, resolution, provenance="grid"):
    """Uniform grid cloud; resolution floor is delta >= 4 * grid step."""
    pts = sys.space.grid(int(resolution))
    return SampleCloud(sys.space, pts, provenance=provenance)


def random_cloud(sys: SystemHandle, count, seed, provenance="random"):
    rng = np.random.default_rng(seed)
    pts = sys.space.random_points(rng, int(count))
    return SampleCloud(sys.space, pts, provenance=provenance)
