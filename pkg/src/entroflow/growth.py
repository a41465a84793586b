"""Unstable-disk growth and packing counts, the lower-bound route to entropy.

An unstable segment iterated forward stretches exponentially along its
leaf.  Packing the image with disjoint sub-disks in the leaf metric and
fitting log(count) against the step number recovers the expansion rate;
on the linear model systems the count table is an exact staircase of the
eigenvalue.  The same counts feed the disk-versus-box comparison and the
perturbation continuity probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import foliation
from .entropy import SampleCloud, _ols_line, entropy_estimate

DEFAULT_VERTEX_BUDGET = 10_000_000


class VertexBudgetExceeded(RuntimeError):
    """Raised when refinement would push a grown polyline past the budget.

    Attributes record how far the growth got so callers can shorten the
    schedule instead of guessing.
    """

    def __init__(self, step_index, needed, budget):
        self.reached_step = int(step_index) - 1
        self.step_index = int(step_index)
        self.needed = int(needed)
        self.budget = int(budget)
        super().__init__(
            f"vertex budget {budget} exceeded at growth step {step_index} "
            f"(needs {needed} vertices); completed {self.reached_step} steps"
        )


def _advance(sys, pts, spacing, budget, step_index):
    """One forward step of a polyline with adaptive midpoint insertion.

    New vertices come from bisecting the pre-image chain and mapping the
    midpoint forward, so chord error stays controlled by the local
    stretch of the map rather than by curvature estimates.  Image gaps
    halve each pass, so the loop ends after about log2 of the expansion
    factor passes.
    """
    space = sys.space
    imgs = np.atleast_2d(sys.step(pts))
    for _ in range(64):
        gaps = np.atleast_1d(space.distance(imgs[:-1], imgs[1:]))
        bad = np.flatnonzero(gaps > spacing)
        if bad.size == 0:
            return imgs
        if imgs.shape[0] + bad.size > budget:
            raise VertexBudgetExceeded(step_index, imgs.shape[0] + bad.size, budget)
        mids = space.lerp(pts[bad], pts[bad + 1], 0.5)
        imgs = np.insert(imgs, bad + 1, np.atleast_2d(sys.step(mids)), axis=0)
        pts = np.insert(pts, bad + 1, mids, axis=0)
    raise RuntimeError("midpoint refinement failed to settle in 64 passes")


def grow_segment(
    sys, seg, steps, spacing, vertex_budget=DEFAULT_VERTEX_BUDGET
):
    """Apply the map `steps` times to an unstable segment.

    The result is a polyline through the image with consecutive chords
    at most `spacing`.  Zero steps return the segment unchanged.
    """
    if seg.kind != "unstable":
        raise ValueError(f"grow_segment expects an unstable segment, got {seg.kind!r}")
    steps = int(steps)
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    spacing = float(spacing)
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if steps == 0:
        return seg
    pts = seg.points
    for step_index in range(1, steps + 1):
        pts = _advance(sys, pts, spacing, vertex_budget, step_index)
    return foliation._segment("unstable", sys.space, pts, spacing)


def disk_center_arcs(arclength, two_delta):
    """Arc positions of a maximal left-to-right packing by radius-two_delta disks.

    Centers start half a disk in from the segment end and advance by one
    disk diameter, so consecutive centers sit 2*two_delta apart in arc.
    An arclength below two_delta fits no disk.
    """
    two_delta = float(two_delta)
    if two_delta <= 0:
        raise ValueError("two_delta must be positive")
    arclength = float(arclength)
    if arclength < two_delta:
        return np.empty(0)
    count = 1 + int(math.floor((arclength - two_delta) / (2.0 * two_delta) + 1e-12))
    return two_delta / 2.0 + 2.0 * two_delta * np.arange(count)


def count_disjoint_disks(seg, two_delta):
    """Greedy packing count along a segment, with the disk center points."""
    arcs = disk_center_arcs(seg.arclength, two_delta)
    if arcs.size == 0:
        return 0, np.empty((0, seg.points.shape[1]))
    centers = np.stack([seg.point_at(a) for a in arcs])
    return int(arcs.size), centers


@dataclass(frozen=True, eq=False)
class GrowthCurve:
    """Packing counts of an iterated unstable disk and the fitted rate.

    counts holds rows (N, disjoint_disk_count); centers and center_arcs
    hold, per schedule entry, the packed disk centers and their arc
    positions along the grown segment.  Counts never decrease and center
    arcs stay at least 4*delta apart, both checked at construction.
    """

    base_point: tuple
    delta: float
    counts: tuple
    rate: float
    rate_stderr: float
    centers: tuple
    center_arcs: tuple
    arclengths: tuple

    def __post_init__(self):
        cs = [row[1] for row in self.counts]
        for a, b in zip(cs, cs[1:]):
            if b < a:
                raise ValueError(f"disk counts must be nondecreasing, got {a} -> {b}")
        gap = 4.0 * self.delta - 1e-9
        for (n, _), arcs in zip(self.counts, self.center_arcs):
            if arcs.size > 1 and float(np.min(np.diff(arcs))) < gap:
                raise ValueError(f"centers at N={n} closer than 4*delta in arc")

    def table(self):
        """Rows (N, count, log_count, arclength); log of a zero count is nan."""
        rows = []
        for (n, c), (_, length) in zip(self.counts, self.arclengths):
            rows.append((n, c, math.log(c) if c > 0 else math.nan, length))
        return rows


def unstable_rate_estimate(
    sys,
    x,
    delta,
    N_schedule,
    spacing=None,
    vertex_budget=DEFAULT_VERTEX_BUDGET,
    seed_segment=None,
    config=foliation.DEFAULT_CONFIG,
):
    """Grow the radius-delta unstable disk at x and fit a rate to disk counts.

    At every N in the increasing schedule the grown segment is packed by
    disjoint radius-2*delta disks in the leaf metric; the rate is the
    least-squares slope of log(count) against N over the positive counts.
    seed_segment overrides the closed-form unstable segment when the
    caller wants to grow a hand-built polyline.
    """
    schedule = [int(n) for n in N_schedule]
    if not schedule:
        raise ValueError("N_schedule must be nonempty")
    if schedule[0] < 1 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("N_schedule must be strictly increasing positive integers")
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if spacing is None:
        spacing = delta / 10.0
    spacing = float(spacing)
    if spacing > delta / 10.0 + 1e-12:
        raise ValueError("spacing must be at most delta/10 to resolve the packing")
    x = np.asarray(x, dtype=float)
    if seed_segment is not None:
        seg = seed_segment
    else:
        seg = foliation.unstable_segment(sys, x, delta, config=config)
    two_delta = 2.0 * delta
    counts, lengths, centers, arcs = [], [], [], []
    prev = 0
    for n in schedule:
        try:
            seg = grow_segment(sys, seg, n - prev, spacing, vertex_budget)
        except VertexBudgetExceeded as exc:
            # re-key the step index to the absolute iterate number
            raise VertexBudgetExceeded(
                prev + exc.step_index, exc.needed, exc.budget
            ) from None
        prev = n
        cnt, pts = count_disjoint_disks(seg, two_delta)
        counts.append((n, cnt))
        lengths.append((n, seg.arclength))
        centers.append(pts)
        arcs.append(disk_center_arcs(seg.arclength, two_delta))
    fit = [(n, math.log(c)) for n, c in counts if c > 0]
    if len(fit) >= 2:
        rate, _, stderr, _ = _ols_line([f[0] for f in fit], [f[1] for f in fit])
    else:
        rate, stderr = 0.0, 0.0
    return GrowthCurve(
        base_point=tuple(float(v) for v in x),
        delta=delta,
        counts=tuple(counts),
        rate=rate,
        rate_stderr=stderr,
        centers=tuple(centers),
        center_arcs=tuple(arcs),
        arclengths=tuple(lengths),
    )


@dataclass(frozen=True, eq=False)
class DiskBoxReport:
    """Entropy rates from a product box versus an unstable disk at one scale."""

    delta: float
    disk_rate: float
    box_rate: float
    difference: float
    tolerance: float
    passed: bool
    disk_estimate: object
    box_estimate: object


def disk_vs_box_comparison(
    sys,
    x,
    delta,
    n_schedule,
    delta_schedule=None,
    samples_per_axis=10,
    disk_samples=1000,
    order_seed=0,
    tolerance=0.1,
    config=foliation.DEFAULT_CONFIG,
):
    """Compare separated-set rates of a product box and an unstable disk.

    Both clouds are anchored at x with scale delta: the box cloud is the
    full product-box sample grid, the disk cloud samples the radius-delta
    unstable segment uniformly in arclength.  Each cloud runs through the
    same entropy estimate schedules; counts default to separation scale
    delta/2, one notch below the box scale, so the box interior is
    resolved.  The report passes when the two rates differ by at most
    the tolerance.
    """
    x = np.asarray(x, dtype=float)
    if delta_schedule is None:
        delta_schedule = (float(delta) / 2.0,)
    box = foliation.build_product_box(sys, x, delta, samples_per_axis, config)
    box_cloud = SampleCloud(
        sys.space,
        box.d_samples,
        provenance=f"product box at scale {delta:g}",
        restriction="product_box",
    )
    seg = foliation.unstable_segment(sys, x, delta, config=config)
    arcsample = np.linspace(0.0, seg.arclength, int(disk_samples))
    disk_pts = np.stack([seg.point_at(a) for a in arcsample])
    disk_cloud = SampleCloud(
        sys.space,
        disk_pts,
        provenance=f"unstable disk at scale {delta:g}",
        restriction="unstable_disk",
    )
    disk_est = entropy_estimate(sys, disk_cloud, n_schedule, delta_schedule, order_seed)
    box_est = entropy_estimate(sys, box_cloud, n_schedule, delta_schedule, order_seed)
    diff = box_est.rate - disk_est.rate
    return DiskBoxReport(
        delta=float(delta),
        disk_rate=disk_est.rate,
        box_rate=box_est.rate,
        difference=diff,
        tolerance=float(tolerance),
        passed=abs(diff) <= float(tolerance),
        disk_estimate=disk_est,
        box_estimate=box_est,
    )


@dataclass(frozen=True, eq=False)
class ContinuityCurve:
    """Rate of each family member plus the modulus over consecutive entries."""

    entries: tuple
    modulus: float
    curves: tuple

    def table(self):
        """Rows (epsilon, rate, stderr)."""
        return [tuple(row) for row in self.entries]


_ESTIMATOR_KEYS = {"x", "delta", "N_schedule", "spacing", "vertex_budget"}


def continuity_probe(family, eps_schedule, estimator_config):
    """Rate curve of a one-parameter family of systems.

    family maps a parameter value to a system handle; every member is
    probed by unstable_rate_estimate from the same base chart
    coordinates, which for the built-in families is the nearest-point
    transport between perturbed systems.  The modulus is the largest
    rate jump between consecutive parameter values.
    """
    eps_values = [float(e) for e in eps_schedule]
    if not eps_values:
        raise ValueError("eps_schedule must be nonempty")
    cfg = dict(estimator_config)
    unknown = set(cfg) - _ESTIMATOR_KEYS
    if unknown:
        raise ValueError(f"unknown estimator_config key: {sorted(unknown)[0]!r}")
    for key in ("x", "delta", "N_schedule"):
        if key not in cfg:
            raise ValueError(f"estimator_config missing required key {key!r}")
    x = np.asarray(cfg.pop("x"), dtype=float)
    delta = float(cfg.pop("delta"))
    schedule = cfg.pop("N_schedule")
    entries, curves = [], []
    for eps in eps_values:
        curve = unstable_rate_estimate(family(eps), x, delta, schedule, **cfg)
        entries.append((eps, curve.rate, curve.rate_stderr))
        curves.append(curve)
    rates = [row[1] for row in entries]
    modulus = max(
        (abs(b - a) for a, b in zip(rates, rates[1:])), default=0.0
    )
    return ContinuityCurve(tuple(entries), modulus, tuple(curves))
