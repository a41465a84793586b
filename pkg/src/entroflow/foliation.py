"""Invariant-leaf machinery for the model systems.

Unstable and center leaf segments as polylines, center holonomy between
unstable leaves, local product-structure boxes, and the two finite checks
used by the experiment suite: center non-expansion under iteration and the
covering-radius surrogate for density of center-saturated unstable leaves.

Leaves are exact eigenlines on the torus.  On a mapping torus the unstable
leaf of a time-t map is the base eigenline plus a geometrically convergent
height series (zero for constant roofs); perturbed maps get their leaves
from a backward graph transform seeded with the reference leaf.  Center
leaves are flow lines of the reference suspension flow, and center
arclength is flow time (the chart flow moves at unit vertical speed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .systems import (
    PerturbedHandle,
    SuspensionFlow,
    SystemHandle,
    TimeTMapHandle,
    ToralMapHandle,
    wrap_diff,
    wrap_unit,
)

__all__ = [
    "FoliationConfig",
    "DEFAULT_CONFIG",
    "LeafSegment",
    "ProductBox",
    "CenterExpansionReport",
    "DensityReport",
    "unstable_segment",
    "stable_segment",
    "center_segment",
    "center_arc_to_image",
    "center_holonomy",
    "holonomy_equivariance_gap",
    "holonomy_extent",
    "center_nonexpansion_check",
    "build_product_box",
    "density_check",
]


@dataclass(frozen=True)
class FoliationConfig:
    """Constants for leaf construction and the foliation checks.

    The caps and bounds have no canonical values; the defaults here are
    the ones the test suite and the packaged experiments run with.
    """

    center_radius_cap: float = 2.0  # longest center arc handed out
    center_length_min: float = 0.5  # expected lower bound on image arcs
    center_length_max: float = 2.0  # expected upper bound on image arcs
    box_delta_cap: float = 0.05  # product boxes refuse larger radii
    density_radius_bound: float = 0.1  # covering-radius target
    chart_radius: float = 0.2  # local-chart validity scale
    refine_tol: float = 1e-7  # graph-transform convergence gap
    max_refinements: int = 60


DEFAULT_CONFIG = FoliationConfig()


# --------------------------------------------------------------------------
# chart helpers


def _canonical_point(sys, x):
    return sys.space.canonicalize(np.atleast_2d(np.asarray(x, dtype=float)))[0]


def _chart_rel(space, origin, pts):
    """Displacement of each point from `origin`, toward its nearest lift.

    Valid while displacements stay below half the wrap scale, which every
    caller enforces through the chart-radius cap.
    """
    origin = np.asarray(origin, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if getattr(space, "kind", None) == "mapping_torus":
        reps = space.lift_reps(pts)  # (N, 3, 3)
        diffs = np.concatenate(
            [
                wrap_diff(reps[:, :, :2], origin[:2]),
                (reps[:, :, 2] - origin[2])[:, :, None],
            ],
            axis=2,
        )
        norms = np.linalg.norm(diffs, axis=2)
        pick = np.argmin(norms, axis=1)
        return diffs[np.arange(pts.shape[0]), pick]
    return wrap_diff(pts, origin)


def _flow_each(fl, pts, ts):
    """Flow each chart point by its own time (vectorized height shift)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
    pts[:, 2] += np.asarray(ts, dtype=float)
    return fl.canonicalize(pts)


def _quad_interp(xs, ys, q):
    """Quadratic interpolation of a sampled curve, vectorized in q.

    xs must be strictly increasing with at least 3 entries; ys may have
    trailing coordinate axes.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    j = np.clip(np.searchsorted(xs, q) - 1, 1, xs.size - 2)
    x0, x1, x2 = xs[j - 1], xs[j], xs[j + 1]
    w0 = (q - x1) * (q - x2) / ((x0 - x1) * (x0 - x2))
    w1 = (q - x0) * (q - x2) / ((x1 - x0) * (x1 - x2))
    w2 = (q - x0) * (q - x1) / ((x2 - x0) * (x2 - x1))
    return (
        w0[:, None] * ys[j - 1] + w1[:, None] * ys[j] + w2[:, None] * ys[j + 1]
    )


# --------------------------------------------------------------------------
# leaf segments


@dataclass
class LeafSegment:
    """Polyline approximation of a one-dimensional leaf piece.

    points hold canonical chart coordinates.  arc_coords[i] is the
    cumulative arclength at vertex i: chord sums for unstable and stable
    segments, flow time for center segments.  Consecutive vertices stay
    within spacing_bound.  Treated as immutable after construction.
    """

    kind: str
    points: np.ndarray
    arc_coords: np.ndarray
    spacing_bound: float
    space: object
    refine_gaps: tuple = ()

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.arc_coords = np.asarray(self.arc_coords, dtype=float)
        if self.kind not in ("unstable", "stable", "center"):
            raise ValueError(f"unknown leaf kind {self.kind!r}")
        if self.arc_coords.shape != (self.points.shape[0],):
            raise ValueError("arc_coords and points disagree in length")
        if self.arc_coords[0] != 0.0:
            raise ValueError("arc coordinates must start at 0")
        if self.points.shape[0] > 1:
            if np.any(np.diff(self.arc_coords) <= 0):
                raise ValueError("arc coordinates must be strictly increasing")
            chords = np.atleast_1d(
                self.space.distance(self.points[:-1], self.points[1:])
            )
            if float(np.max(chords)) > self.spacing_bound * (1 + 1e-9) + 1e-12:
                raise ValueError("consecutive vertices exceed the spacing bound")

    @property
    def arclength(self):
        return float(self.arc_coords[-1])

    @property
    def vertex_count(self):
        return self.points.shape[0]

    def point_at(self, arc):
        """Chart point at cumulative arclength `arc` (clipped to range)."""
        if self.points.shape[0] == 1:
            return self.points[0].copy()
        a = float(np.clip(arc, 0.0, self.arclength))
        i = int(np.searchsorted(self.arc_coords, a, side="right")) - 1
        i = min(max(i, 0), self.points.shape[0] - 2)
        w = (a - self.arc_coords[i]) / (self.arc_coords[i + 1] - self.arc_coords[i])
        return self.space.lerp(self.points[i], self.points[i + 1], w)

    def midpoint(self):
        return self.point_at(self.arclength / 2.0)

    def table(self):
        """Plot-ready array: arc coordinate first, chart coordinates after."""
        return np.column_stack([self.arc_coords, self.points])


def _segment(kind, space, pts, spacing_bound, arc_coords=None, refine_gaps=()):
    pts = space.canonicalize(np.atleast_2d(np.asarray(pts, dtype=float)))
    if arc_coords is None:
        if pts.shape[0] == 1:
            arc_coords = np.zeros(1)
        else:
            chords = np.atleast_1d(space.distance(pts[:-1], pts[1:]))
            arc_coords = np.concatenate([[0.0], np.cumsum(chords)])
    return LeafSegment(
        kind,
        pts,
        np.asarray(arc_coords, dtype=float),
        float(spacing_bound),
        space,
        tuple(refine_gaps),
    )


def _leaf_height_offset(fl, b0, offsets, direction, eig, backward):
    """Height correction series along a base eigenline through b0.

    Each term compares the roof along the orbit of b0 with the orbit of the
    displaced points; displacements contract geometrically (factor 1/eig
    backward along the expanding line, eig forward along the contracting
    one), so the series is truncated once terms drop below 1e-13.
    """
    offsets = np.asarray(offsets, dtype=float)
    if fl.roof.is_constant:
        return np.zeros(offsets.shape)
    auto = fl.base_map
    lip = fl.roof.lipschitz()
    omax = float(np.max(np.abs(offsets))) if offsets.size else 0.0
    out = np.zeros(offsets.shape)
    bj = np.atleast_2d(np.asarray(b0, dtype=float))
    scale = 1.0
    for _ in range(400):
        if backward:
            bj = auto.apply_inverse(bj)
            scale /= eig
        if lip * omax * abs(scale) < 1e-13:
            break
        disp = wrap_unit(bj + (offsets[:, None] * scale) * direction[None, :])
        diff = fl.roof.value(bj)[0] - fl.roof.value(disp)
        out = out + (diff if backward else -diff)
        if not backward:
            bj = auto.apply(bj)
            scale *= eig
    return out


def _signed_eigenvalue(auto, v):
    return float(v @ (auto.matrix.astype(float) @ v))


def _suspension_leaf_points(fl, x, taus, stable=False):
    """Chart points of the (un)stable leaf through x at eigenline offsets."""
    auto = fl.base_map
    v = auto.stable_direction if stable else auto.unstable_direction
    eig = _signed_eigenvalue(auto, v)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    base = wrap_unit(x[None, :2] + taus[:, None] * v[None, :])
    h = x[2] + _leaf_height_offset(fl, x[:2], taus, v, eig, backward=not stable)
    return fl.canonicalize(np.concatenate([base, h[:, None]], axis=1))


def _eigenline_segment(sys, fl, x, radius, spacing, stable):
    """Closed-form leaf segment: uniform eigenline grid, marched when the
    variable-roof height series stretches arclength past the parameter."""
    kind = "stable" if stable else "unstable"
    if fl is None:  # plain torus: the eigenline itself
        auto = sys.automorphism
        if auto is None or not auto.hyperbolic:
            raise ValueError(
                "leaf segments need an invertible hyperbolic integer matrix"
            )
        v = auto.stable_direction if stable else auto.unstable_direction
        count = int(math.ceil(2.0 * radius / spacing))
        taus = np.linspace(-radius, radius, count + 1)
        pts = wrap_unit(x[None, :] + taus[:, None] * v[None, :])
        return _segment(kind, sys.space, pts, spacing, arc_coords=taus + radius)
    if fl.roof.is_constant:
        count = int(math.ceil(2.0 * radius / spacing))
        taus = np.linspace(-radius, radius, count + 1)
        pts = _suspension_leaf_points(fl, x, taus, stable=stable)
        return _segment(kind, sys.space, pts, spacing, arc_coords=taus + radius)
    taus = _arc_march(
        lambda t: _suspension_leaf_points(fl, x, t, stable=stable),
        fl.space,
        radius,
        spacing,
    )
    pts = _suspension_leaf_points(fl, x, taus, stable=stable)
    return _segment(kind, sys.space, pts, spacing)


def _arc_march(curve, space, radius, spacing):
    """Parameter samples reaching chord arclength `radius` on both sides of
    parameter 0, keeping every chord below `spacing`."""

    def one_side(sign):
        taus = [0.0]
        prev = curve(np.array([0.0]))[0]
        acc = 0.0
        step = spacing * 0.5
        while acc < radius - 1e-12:
            trial_tau = taus[-1] + sign * step
            trial = curve(np.array([trial_tau]))[0]
            d = float(space.distance(prev, trial))
            if d > spacing * 0.95:
                step *= 0.5
                if step < 1e-12:
                    raise RuntimeError("leaf march stalled; spacing too tight")
                continue
            if acc + d > radius:
                # partial final step, linearized on the local chord
                frac = (radius - acc) / d
                trial_tau = taus[-1] + sign * step * frac
                trial = curve(np.array([trial_tau]))[0]
                d = float(space.distance(prev, trial))
            taus.append(trial_tau)
            prev = trial
            acc += d
            if d < 0.4 * spacing:
                step = min(step * 1.6, spacing * 0.9)
        return taus

    neg = one_side(-1.0)
    pos = one_side(+1.0)
    return np.array(neg[:0:-1] + pos)


def unstable_segment(sys, x, radius, spacing=None, config=DEFAULT_CONFIG):
    """Unstable-leaf piece of arclength 2*radius centered at x.

    Toral and time-t suspension handles use the closed form (eigenline plus
    height series); perturbed handles refine the reference leaf through a
    backward graph transform until successive candidates agree below
    config.refine_tol.
    """
    radius = float(radius)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    x = _canonical_point(sys, x)
    if radius == 0:
        return _segment("unstable", sys.space, x[None, :], 1.0)
    if spacing is None:
        spacing = radius / 20.0
    if spacing > radius / 10.0 + 1e-12:
        raise ValueError("spacing must be at most radius/10")
    if isinstance(sys, ToralMapHandle):
        return _eigenline_segment(sys, None, x, radius, spacing, stable=False)
    if isinstance(sys, TimeTMapHandle):
        return _eigenline_segment(
            sys, sys.reference_flow, x, radius, spacing, stable=False
        )
    if isinstance(sys, PerturbedHandle):
        if sys.epsilon == 0.0:
            return _eigenline_segment(
                sys, sys.reference_flow, x, radius, spacing, stable=False
            )
        return _graph_transform_unstable(sys, x, radius, spacing, config)
    raise ValueError("system exposes no unstable direction")


def stable_segment(sys, x, radius, spacing=None):
    """Stable-leaf piece; closed forms only (no perturbed construction)."""
    radius = float(radius)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    x = _canonical_point(sys, x)
    if radius == 0:
        return _segment("stable", sys.space, x[None, :], 1.0)
    if spacing is None:
        spacing = radius / 20.0
    if spacing > radius / 10.0 + 1e-12:
        raise ValueError("spacing must be at most radius/10")
    if isinstance(sys, ToralMapHandle):
        return _eigenline_segment(sys, None, x, radius, spacing, stable=True)
    if isinstance(sys, TimeTMapHandle) or (
        isinstance(sys, PerturbedHandle) and sys.epsilon == 0.0
    ):
        return _eigenline_segment(
            sys, sys.reference_flow, x, radius, spacing, stable=True
        )
    raise ValueError("stable segments are only available in closed form")


# --------------------------------------------------------------------------
# graph transform for perturbed unstable leaves


def _push_refined(sys, pts, center_idx, spacing):
    """One forward step of a polyline with midpoint insertion.

    Inserted vertices come from mapping parameter midpoints of the
    pre-image, so the refined polyline stays on the image curve instead of
    cutting chords.
    """
    space = sys.space
    imgs = sys.step(pts)

    def chain(pre_a, img_a, pre_b, img_b, depth):
        if float(space.distance(img_a, img_b)) <= spacing or depth >= 24:
            return [img_b]
        mid_pre = space.lerp(pre_a, pre_b, 0.5)
        mid_img = sys.step(mid_pre[None, :])[0]
        left = chain(pre_a, img_a, mid_pre, mid_img, depth + 1)
        right = chain(mid_pre, mid_img, pre_b, img_b, depth + 1)
        return left + right

    out = [imgs[0]]
    new_center = 0
    for i in range(pts.shape[0] - 1):
        out.extend(chain(pts[i], imgs[i], pts[i + 1], imgs[i + 1], 0))
        if i + 1 == center_idx:
            new_center = len(out) - 1
    return np.stack(out), new_center


def _trim_polyline(space, pts, center_idx, radius):
    """Clip to chord arclength `radius` on both sides of a center vertex.

    End vertices are interpolated onto the radius.  Returns (points,
    center_index, reached_both_sides).
    """

    def walk(direction):
        collected = []
        acc = 0.0
        i = center_idx
        while 0 <= i + direction < pts.shape[0] and acc < radius - 1e-12:
            a, b = pts[i], pts[i + direction]
            d = float(space.distance(a, b))
            if acc + d >= radius:
                w = (radius - acc) / d
                collected.append(space.lerp(a, b, w))
                acc = radius
            else:
                collected.append(b)
                acc += d
            i += direction
        return collected, acc >= radius - 1e-9

    left, ok_l = walk(-1)
    right, ok_r = walk(+1)
    merged = list(reversed(left)) + [pts[center_idx]] + right
    return np.stack(merged), len(left), ok_l and ok_r


def _matched_arc_gap(space, a_pts, a_center, b_pts, b_center, radius):
    """Sup distance between two polylines at matched signed arclength from
    their center vertices; tight for nearby curves through the same point."""

    def rel_arcs(pts, center):
        chords = np.atleast_1d(space.distance(pts[:-1], pts[1:]))
        arcs = np.concatenate([[0.0], np.cumsum(chords)])
        return arcs - arcs[center]

    arcs_a = rel_arcs(a_pts, a_center)
    arcs_b = rel_arcs(b_pts, b_center)
    lo = max(arcs_a[0], arcs_b[0])
    hi = min(arcs_a[-1], arcs_b[-1])
    gap = 0.0
    for s in np.linspace(lo, hi, 65):
        pa = _interp_polyline(space, a_pts, arcs_a, s)
        pb = _interp_polyline(space, b_pts, arcs_b, s)
        gap = max(gap, float(space.distance(pa, pb)))
    return gap


def _interp_polyline(space, pts, arcs, s):
    i = int(np.clip(np.searchsorted(arcs, s, side="right") - 1, 0, len(arcs) - 2))
    w = (s - arcs[i]) / (arcs[i + 1] - arcs[i])
    return space.lerp(pts[i], pts[i + 1], float(np.clip(w, 0.0, 1.0)))


def _graph_transform_unstable(sys, x, radius, spacing, config):
    """Backward graph transform for the unstable leaf of a perturbed map.

    Seeds with the reference leaf along the backward orbit of x, pushes it
    forward with refinement and trimming, and deepens until successive
    candidates agree below config.refine_tol.  Raises after
    config.max_refinements with the last gap when contraction fails.
    """
    fl = sys.reference_flow
    t_ref = sys.reference.t
    per_step = fl.base_map.expansion_factor ** (abs(t_ref) / fl.roof.constant)
    margin = 1.3
    gaps = []
    prev = None
    xk = x.copy()
    cand_pts = cand_center = None
    for depth in range(1, config.max_refinements + 1):
        xk = sys.step_back(xk[None, :])[0]
        seed_r = max(radius * margin / per_step ** depth, 6.0 * spacing)
        for _ in range(10):
            seed = _eigenline_segment(
                sys, fl, xk, seed_r, min(spacing, seed_r / 12.0), stable=False
            )
            pts = seed.points
            center = int(np.argmin(np.atleast_1d(sys.distance(pts, xk[None, :]))))
            ok = True
            for _j in range(depth):
                pts, center = _push_refined(sys, pts, center, spacing)
                pts, center, reached = _trim_polyline(
                    sys.space, pts, center, radius * margin
                )
                if not reached:
                    ok = False
                    break
            if ok:
                break
            seed_r *= 1.7
        else:
            raise RuntimeError("graph transform could not cover the radius")
        cand_pts, cand_center, _ = _trim_polyline(sys.space, pts, center, radius)
        if prev is not None:
            gap = _matched_arc_gap(
                sys.space, cand_pts, cand_center, prev[0], prev[1], radius
            )
            gaps.append(gap)
            if gap < config.refine_tol:
                return _segment(
                    "unstable", sys.space, cand_pts, spacing, refine_gaps=gaps
                )
        prev = (cand_pts, cand_center)
    raise RuntimeError(
        f"graph transform did not converge in {config.max_refinements} "
        f"refinements; last gap {gaps[-1] if gaps else float('nan'):.3g}"
    )


# --------------------------------------------------------------------------
# center segments


def _require_center(sys):
    if not getattr(sys, "preserves_center_leaves", False):
        raise ValueError(
            "center operations need a system whose center leaves are the "
            "flow lines of a reference suspension flow"
        )


def center_segment(sys, x, length, spacing=None, config=DEFAULT_CONFIG):
    """Center-leaf arc: the flow segment from x of the requested arclength.

    Center arclength equals flow time, so vertices sit at evenly spaced
    flow times; negative lengths walk backward along the flow.
    """
    _require_center(sys)
    length = float(length)
    if abs(length) > config.center_radius_cap + 1e-12:
        raise ValueError(
            f"center arcs are capped at length {config.center_radius_cap}"
        )
    fl = sys.reference_flow
    x = _canonical_point(sys, x)
    if length == 0:
        return _segment("center", sys.space, x[None, :], 1.0)
    if spacing is None:
        spacing = abs(length) / 16.0
    spacing = min(spacing, fl.roof.roof_min / 4.0)
    count = int(math.ceil(abs(length) / spacing))
    times = np.linspace(0.0, length, count + 1)
    pts = np.stack([fl.flow(x, t) for t in times])
    return _segment("center", sys.space, pts, spacing, arc_coords=np.abs(times))


def center_arc_to_image(sys, x, spacing=None, config=DEFAULT_CONFIG):
    """Arc along the center leaf from x to its image under the map.

    The arclength is the flow time carrying x to sys.step(x): exactly t
    for time-t maps, shifted by at most epsilon times the profile bound
    under an admissible height shear.
    """
    _require_center(sys)
    x = _canonical_point(sys, x)
    fl = sys.reference_flow
    y = sys.step(x[None, :])[0]
    t = fl.center_time(x, y)
    if t is None:
        raise ValueError("image does not sit on the center leaf through x")
    return center_segment(sys, x, t, spacing=spacing, config=config)


# --------------------------------------------------------------------------
# center holonomy


def _slide_to_leaf(fl, space, pts, leaf, origin, t0):
    """Move points along their flow lines onto a leaf polyline.

    The leaf is tabulated relative to `origin` in the chart; each point is
    flowed by a Newton-adjusted time until its height residual against the
    leaf (interpolated at the matching eigenline coordinate) vanishes.
    Returns (met points, flow times, worst residual).
    """
    v = fl.base_map.unstable_direction
    rel_leaf = _chart_rel(space, origin, leaf.points)
    taus_leaf = rel_leaf[:, :2] @ v
    if taus_leaf[0] > taus_leaf[-1]:
        taus_leaf = taus_leaf[::-1]
        rel_leaf = rel_leaf[::-1]
    if np.any(np.diff(taus_leaf) <= 0):
        raise RuntimeError("leaf polyline is not monotone in the eigenline")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    ts = np.full(pts.shape[0], float(t0))
    res = None
    for _ in range(12):
        W = _flow_each(fl, pts, ts)
        rel = _chart_rel(space, origin, W)
        tau = rel[:, :2] @ v
        pad = 0.02 * (taus_leaf[-1] - taus_leaf[0])
        if np.any(tau < taus_leaf[0] - pad) or np.any(tau > taus_leaf[-1] + pad):
            raise ValueError(
                "points leave the tabulated leaf; enlarge its radius"
            )
        target = _quad_interp(taus_leaf, rel_leaf, tau)
        res = rel - target
        if float(np.max(np.abs(res[:, 2]))) < 1e-12:
            break
        ts = ts - res[:, 2]
    W = _flow_each(fl, pts, ts)
    worst = float(np.max(np.linalg.norm(res, axis=1))) if res is not None else 0.0
    return W, ts, worst


def center_holonomy(sys, x, y, u_points, depth, config=DEFAULT_CONFIG):
    """Transport points on the unstable leaf of x to the unstable leaf of
    y, for y on the center leaf through x.

    Everything is pulled back `depth` steps so the data enter a small
    chart; there each point slides along its flow line onto the pulled
    target leaf, and the meeting points are pushed forward again.  Deeper
    pulls shrink both the chart and the interpolation error, so outputs
    stabilize with depth.
    """
    _require_center(sys)
    depth = int(depth)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    fl = sys.reference_flow
    x = _canonical_point(sys, x)
    y = _canonical_point(sys, y)
    if fl.center_time(x, y) is None:
        raise ValueError("y is not on the center leaf through x (within 1e-8)")
    u = sys.space.canonicalize(np.atleast_2d(np.asarray(u_points, dtype=float)))
    xd, yd, ud = x[None, :], y[None, :], u
    for _ in range(depth):
        xd = sys.step_back(xd)
        yd = sys.step_back(yd)
        ud = sys.step_back(ud)
    xd, yd = xd[0], yd[0]
    # the chart constrains the unstable data, not the center separation:
    # sliding along flow lines is globally defined
    spread = float(np.max(np.atleast_1d(sys.distance(ud, xd[None, :]))))
    if spread > config.chart_radius:
        raise ValueError(
            f"pulled-back unstable spread {spread:.3g} exceeds the local "
            f"chart radius {config.chart_radius}; increase depth"
        )
    t0 = fl.center_time(xd, yd)
    if t0 is None:
        raise RuntimeError("center pairing lost while pulling back")
    # size the target leaf from the flown points' eigenline extent
    v = fl.base_map.unstable_direction
    W0 = _flow_each(fl, ud, np.full(ud.shape[0], t0))
    tau0 = _chart_rel(sys.space, yd, W0)[:, :2] @ v
    leaf_r = 1.5 * float(np.max(np.abs(tau0))) + 32.0 * 1e-6
    if leaf_r > config.chart_radius:
        raise ValueError(
            f"transported unstable extent {leaf_r:.3g} exceeds the local "
            f"chart radius {config.chart_radius}; increase depth"
        )
    leaf_r = max(leaf_r, 1e-4)
    leaf = unstable_segment(sys, yd, leaf_r, spacing=leaf_r / 40.0, config=config)
    met, _ts, _res = _slide_to_leaf(fl, sys.space, ud, leaf, yd, t0)
    out = met
    for _ in range(depth):
        out = sys.step(out)
    return sys.space.canonicalize(out)


def holonomy_equivariance_gap(sys, x, y, u_points, depth, config=DEFAULT_CONFIG):
    """Max distance between map-then-transport and transport-then-map."""
    x = _canonical_point(sys, x)
    y = _canonical_point(sys, y)
    u = sys.space.canonicalize(np.atleast_2d(np.asarray(u_points, dtype=float)))
    a = sys.step(center_holonomy(sys, x, y, u, depth, config=config))
    b = center_holonomy(
        sys,
        sys.step(x[None, :])[0],
        sys.step(y[None, :])[0],
        sys.step(u),
        depth,
        config=config,
    )
    return float(np.max(np.atleast_1d(sys.distance(a, b))))


def holonomy_extent(sys, x, y, radius, depth, config=DEFAULT_CONFIG):
    """Measured inner and outer eigenline radii of the transported image of
    an unstable piece; both shrink with the input radius and c1 <= c2."""
    x = _canonical_point(sys, x)
    y = _canonical_point(sys, y)
    seg = unstable_segment(sys, x, radius, config=config)
    ends = np.stack([seg.point_at(0.0), seg.point_at(seg.arclength)])
    out = center_holonomy(sys, x, y, ends, depth, config=config)
    v = sys.reference_flow.base_map.unstable_direction
    tau = np.abs(_chart_rel(sys.space, y, out)[:, :2] @ v)
    return float(np.min(tau)), float(np.max(tau))


# --------------------------------------------------------------------------
# center non-expansion


@dataclass(frozen=True)
class CenterExpansionReport:
    max_ratio_forward: float
    max_ratio_backward: float
    samples: int
    horizon: int
    ratio_bound: float
    passed: bool


def center_nonexpansion_check(
    sys, samples=100, horizon=50, rng_seed=0, config=DEFAULT_CONFIG
):
    """Worst center-arclength ratio of nearby center-leaf pairs under
    iteration, both forward and backward.

    Center distance is flow time along the shared fiber, carried as
    explicit state: y stays at flow offset s from x, and one step updates
    s exactly (unchanged for time-t maps, a scalar shear recursion for
    height-sheared maps).  Tracking the offset instead of re-pairing two
    float orbits keeps the ratios meaningful over long horizons, where
    independently iterated orbits would decorrelate.  Report-only: the
    passed flag compares against center_length_max / center_length_min.
    """
    _require_center(sys)
    fl = sys.reference_flow
    rng = np.random.default_rng(rng_seed)
    X = fl.random_points(rng, samples)
    offs = rng.uniform(0.05, config.center_length_min, samples)
    offs *= rng.choice([-1.0, 1.0], samples)
    base = np.abs(offs)
    eps = float(getattr(sys, "epsilon", 0.0))
    shape = getattr(sys, "shape", None)
    sheared = eps > 0.0 and shape is not None and shape.shape_id == "center_shear"
    c = fl.roof.constant

    def sweep(forward):
        worst = 1.0
        Xk = X
        s = offs.copy()
        for _ in range(horizon):
            if forward:
                if sheared:
                    hy = np.mod(Xk[:, 2] + s, c)
                    s = s + eps * (
                        shape.profile(c, hy) - shape.profile(c, Xk[:, 2])
                    )
                Xk = sys.step(Xk)
            else:
                Xk = sys.step_back(Xk)
                if sheared:
                    # invert the forward offset update at the new heights
                    hx = Xk[:, 2]
                    sig_x = shape.profile(c, hx)
                    nxt = s.copy()
                    for _i in range(60):
                        upd = s - eps * (
                            shape.profile(c, np.mod(hx + nxt, c)) - sig_x
                        )
                        if float(np.max(np.abs(upd - nxt))) < 1e-14:
                            nxt = upd
                            break
                        nxt = upd
                    s = nxt
            worst = max(worst, float(np.max(np.abs(s) / base)))
        return worst

    fwd = sweep(True)
    bwd = sweep(False)
    bound = config.center_length_max / config.center_length_min
    return CenterExpansionReport(
        max_ratio_forward=fwd,
        max_ratio_backward=bwd,
        samples=int(samples),
        horizon=int(horizon),
        ratio_bound=bound,
        passed=max(fwd, bwd) <= bound,
    )


# --------------------------------------------------------------------------
# local product boxes


@dataclass
class ProductBox:
    """Local product-structure samples around a center point.

    a_samples is the (unstable offset) x (center offset) grid: each entry
    is the intersection of the center leaf through an unstable-leaf point
    with the unstable leaf through a center-leaf point.  d_samples fattens
    every a_sample along the stable fibers.  reconstruction_error is the
    worst distance between an a_sample and its recomputed intersection.
    """

    center: np.ndarray
    delta: float
    u_offsets: np.ndarray
    c_offsets: np.ndarray
    s_offsets: np.ndarray
    a_samples: np.ndarray
    d_samples: np.ndarray
    reconstruction_error: float


def _axis_offsets(delta, count):
    if count <= 1:
        return np.zeros(1)
    return np.linspace(-delta, delta, count)


def build_product_box(sys, x, delta, samples_per_axis, config=DEFAULT_CONFIG):
    """Sample the local product structure at x with radius delta.

    Intersections are found by sliding center leaves onto tabulated
    unstable leaves, which is exact in the constant-roof product model and
    Newton-resolved for perturbed maps.
    """
    _require_center(sys)
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta > config.box_delta_cap + 1e-12:
        raise ValueError(
            f"delta {delta} is above the product-box cap "
            f"{config.box_delta_cap}; use a smaller delta"
        )
    k = int(samples_per_axis)
    if k < 1:
        raise ValueError("samples_per_axis must be >= 1")
    x = _canonical_point(sys, x)
    fl = sys.reference_flow
    u_offs = _axis_offsets(delta, k)
    c_offs = _axis_offsets(delta, k)
    s_offs = _axis_offsets(delta, k)
    u_leaf = unstable_segment(sys, x, delta, spacing=delta / 20.0, config=config)
    x_u = np.stack([u_leaf.point_at(u_leaf.arclength / 2.0 + t) for t in u_offs])
    a_rows = []
    worst = 0.0
    for j, c in enumerate(c_offs):
        x_c = fl.flow(x, c)
        leaf_j = unstable_segment(
            sys, x_c, 1.4 * delta + 1e-4, spacing=delta / 20.0, config=config
        )
        met, _ts, res = _slide_to_leaf(fl, sys.space, x_u, leaf_j, x_c, c)
        worst = max(worst, res)
        a_rows.append(met)
    # a_samples ordered with the unstable index major, center index minor
    a_samples = np.stack(a_rows, axis=1).reshape(k * k, -1)
    fibers = [
        _stable_fiber(fl, a, s_offs) for a in a_samples
    ]
    d_samples = np.concatenate(fibers, axis=0)
    if worst > 1e-8:
        raise ValueError(
            f"product decomposition error {worst:.3g} exceeds 1e-8; "
            "use a smaller delta"
        )
    return ProductBox(
        center=x,
        delta=delta,
        u_offsets=u_offs,
        c_offsets=c_offs,
        s_offsets=s_offs,
        a_samples=a_samples,
        d_samples=d_samples,
        reconstruction_error=worst,
    )


def _stable_fiber(fl, p, sigmas):
    return _suspension_leaf_points(fl, np.asarray(p, dtype=float), sigmas, stable=True)


# --------------------------------------------------------------------------
# density of center-saturated unstable leaves


@dataclass(frozen=True)
class DensityReport:
    covering_radius: float
    sample_count: int
    probe_count: int
    leaf_radius: float
    center_radius: float
    spacing: float
    bound: float
    passed: bool


def density_check(
    sys, x, center_radius, leaf_radius, probe_points,
    spacing=None, config=DEFAULT_CONFIG,
):
    """Covering radius of the center-saturated unstable leaf over a probe
    grid; the finite surrogate for density of the center-unstable plaque.

    Samples sit at integer multiples of the spacing along the eigenline
    and the flow, so sample sets are nested across leaf radii and the
    covering radius cannot increase when the leaf grows.  Distances are
    Euclidean over the wrap and seam lifts of every sample.
    """
    _require_center(sys)
    fl = sys.reference_flow
    x = _canonical_point(sys, x)
    if spacing is None:
        spacing = config.density_radius_bound / 4.0
    ku = int(math.floor(leaf_radius / spacing + 1e-9))
    kc = int(math.floor(center_radius / spacing + 1e-9))
    taus = np.arange(-ku, ku + 1) * spacing
    cts = np.arange(-kc, kc + 1) * spacing
    u_pts = _suspension_leaf_points(fl, x, taus)
    blocks = [fl.flow(u_pts, c) for c in cts]
    samples = np.concatenate(blocks, axis=0)
    reps = fl.space.lift_reps(samples)  # (N, 3, 3)
    shifts = np.array(
        [[i, j, 0.0] for i in (-1.0, 0.0, 1.0) for j in (-1.0, 0.0, 1.0)]
    )
    lifted = (reps[:, None, :, :] + shifts[None, :, None, :]).reshape(-1, 3)
    tree = cKDTree(lifted)
    probes = getattr(probe_points, "points", probe_points)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    dists, _ = tree.query(probes, k=1, workers=-1)
    cov = float(np.max(dists))
    return DensityReport(
        covering_radius=cov,
        sample_count=samples.shape[0],
        probe_count=probes.shape[0],
        leaf_radius=float(leaf_radius),
        center_radius=float(center_radius),
        spacing=float(spacing),
        bound=config.density_radius_bound,
        passed=cov <= config.density_radius_bound + 1e-12,
    )
