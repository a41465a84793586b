"""Model dynamical systems behind a uniform handle interface.

Covers integer toral maps (hyperbolic automorphisms and forward-only
endomorphisms such as the circle doubling map), suspension flows over a
hyperbolic base with constant or trigonometric roof, their time-t maps,
and two admissible perturbation families of a time-t map.

Points are plain float arrays: shape (d,) on the d-torus, (3,) in the
suspension chart (x1, x2, height).  All mod-1 reductions go through
:func:`wrap_unit` so canonical coordinates live in [0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "wrap_unit",
    "wrap_diff",
    "torus_distance",
    "apply_automorphism",
    "ToralAutomorphism",
    "HyperbolicityReport",
    "verify_hyperbolicity",
    "TorusSpace",
    "Roof",
    "SuspensionFlow",
    "MappingTorusSpace",
    "suspension_distance",
    "flow",
    "time_t_map",
    "SystemHandle",
    "ToralMapHandle",
    "TimeTMapHandle",
    "PerturbedHandle",
    "CenterShear",
    "BaseShear",
    "perturbed_map",
    "circle_doubling",
    "cat_map",
]

_EIG_TOL = 1e-9


def wrap_unit(x):
    """Reduce coordinates mod 1 into [0, 1) by floor subtraction.

    The result of ``x - floor(x)`` can round up to exactly 1.0 for inputs a
    hair below an integer; those are clamped back to 0.0.  Adding 0.0 turns
    any -0.0 into +0.0 so canonical forms compare bitwise.
    """
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    y = np.where(y >= 1.0, 0.0, y)
    return y + 0.0


def wrap_diff(a, b):
    """Shortest representative of a - b on the torus, in [-0.5, 0.5)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.round(d)


def torus_distance(p, q):
    """Flat metric on T^d: sqrt of summed squared per-coordinate wrap gaps."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}"
        )
    d = np.abs(p - q)
    d = np.minimum(d, 1.0 - d)
    return np.sqrt(np.sum(d * d, axis=-1))


class ToralAutomorphism:
    """Integer matrix with |det| = 1 acting on T^d, d in {1, 2, 3}."""

    def __init__(self, matrix):
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        d = m.shape[0]
        if d not in (1, 2, 3):
            raise ValueError(f"dimension {d} not supported (need 1, 2 or 3)")
        if not np.all(m == np.round(m)):
            raise ValueError("matrix entries must be integers")
        m = np.round(m).astype(np.int64)
        det = int(round(np.linalg.det(m.astype(float))))
        if abs(det) != 1:
            raise ValueError(f"matrix must have determinant +/-1, got {det}")
        inv = np.rint(np.linalg.inv(m.astype(float))).astype(np.int64)
        if not np.array_equal(m @ inv, np.eye(d, dtype=np.int64)):
            raise ValueError("failed to build exact integer inverse")
        self.matrix = m
        self.inverse_matrix = inv
        self.dim = d
        self.determinant = det
        self.eigenvalues = np.linalg.eigvals(m.astype(float))
        self.moduli = np.abs(self.eigenvalues)
        self.hyperbolic = bool(np.all(np.abs(self.moduli - 1.0) > _EIG_TOL))

    def __repr__(self):
        return f"ToralAutomorphism({self.matrix.tolist()})"

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        return wrap_unit(pts @ self.matrix.T.astype(float))

    def apply_inverse(self, pts):
        pts = np.asarray(pts, dtype=float)
        return wrap_unit(pts @ self.inverse_matrix.T.astype(float))

    def power(self, k):
        """Integer matrix power A^k (k may be negative)."""
        base = self.matrix if k >= 0 else self.inverse_matrix
        out = np.eye(self.dim, dtype=np.int64)
        for _ in range(abs(int(k))):
            out = out @ base
        return out

    @property
    def expansion_factor(self):
        above = self.moduli[self.moduli > 1.0 + _EIG_TOL]
        if above.size == 0:
            return None
        return float(np.min(above))

    @property
    def log_expansion(self):
        f = self.expansion_factor
        return None if f is None else math.log(f)

    def _real_eigvec(self, target_modulus):
        vals, vecs = np.linalg.eig(self.matrix.astype(float))
        idx = int(np.argmin(np.abs(np.abs(vals) - target_modulus)))
        v = vecs[:, idx]
        if np.max(np.abs(v.imag)) > 1e-12:
            raise ValueError("eigenvector is not real")
        v = v.real
        v = v / np.linalg.norm(v)
        # deterministic sign: first nonzero component positive
        nz = np.flatnonzero(np.abs(v) > 1e-12)[0]
        if v[nz] < 0:
            v = -v
        return v

    @property
    def unstable_direction(self):
        f = self.expansion_factor
        if f is None:
            raise ValueError("matrix has no expanding eigenvalue")
        return self._real_eigvec(f)

    @property
    def stable_direction(self):
        below = self.moduli[self.moduli < 1.0 - _EIG_TOL]
        if below.size == 0:
            raise ValueError("matrix has no contracting eigenvalue")
        return self._real_eigvec(float(np.max(below)))


def apply_automorphism(auto, pts):
    """Apply an integer toral map to canonical points (vectorized)."""
    if isinstance(auto, ToralAutomorphism):
        return auto.apply(pts)
    m = np.asarray(auto, dtype=float)
    return wrap_unit(np.asarray(pts, dtype=float) @ m.T)


@dataclass(frozen=True)
class HyperbolicityReport:
    moduli: tuple
    hyperbolic: bool
    expansion_factor: float | None
    contraction_factor: float | None
    log_expansion: float | None


def verify_hyperbolicity(matrix) -> HyperbolicityReport:
    """Eigenvalue certificate for an integer |det|=1 matrix.

    The flag is set iff no eigenvalue modulus falls within 1e-9 of 1.
    A non-hyperbolic matrix yields a report, not an error.
    """
    auto = matrix if isinstance(matrix, ToralAutomorphism) else ToralAutomorphism(matrix)
    moduli = tuple(sorted(float(m) for m in auto.moduli))
    below = [m for m in moduli if m < 1.0 - _EIG_TOL]
    above = [m for m in moduli if m > 1.0 + _EIG_TOL]
    expansion = min(above) if above else None
    contraction = max(below) if below else None
    return HyperbolicityReport(
        moduli=moduli,
        hyperbolic=auto.hyperbolic,
        expansion_factor=expansion,
        contraction_factor=contraction,
        log_expansion=None if expansion is None else math.log(expansion),
    )


class TorusSpace:
    """T^d with the flat wrap metric; also provides grids and cell-index data."""

    kind = "torus"

    def __init__(self, dim):
        if dim not in (1, 2, 3):
            raise ValueError("torus dimension must be 1, 2 or 3")
        self.dim = dim

    def canonicalize(self, pts):
        return wrap_unit(pts)

    def distance(self, p, q):
        return torus_distance(p, q)

    def chord(self, p, q):
        """Alias for distance; wrap-aware chord between nearby points."""
        return torus_distance(p, q)

    def lerp(self, p, q, frac):
        """Interpolate toward the lift of q nearest p, then canonicalize."""
        p = np.asarray(p, dtype=float)
        step = wrap_diff(q, p)
        return wrap_unit(p + np.asarray(frac) * step)

    def random_points(self, rng, count):
        return rng.random((count, self.dim))

    def grid(self, resolution):
        if resolution ** self.dim > 2 ** 20:
            raise ValueError(
                f"grid of {resolution}^{self.dim} points exceeds the 2^20 cap"
            )
        axes = [np.arange(resolution) / resolution] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    # --- data for the counting kernels -------------------------------------
    @property
    def wrap_mask(self):
        return np.ones(self.dim, dtype=bool)

    def lift_reps(self, pts):
        """Equivalent representatives per point; trivial on the torus."""
        pts = np.asarray(pts, dtype=float)
        return pts[..., None, :]


class Roof:
    """Roof function  constant + sum_k a_k cos(2 pi k.x)  over T^2.

    Positivity is enforced through sum |a_k| < constant, which also gives
    cheap exact bounds roof_min / roof_max used by the flow and the
    non-expansion bound.
    """

    def __init__(self, constant=1.0, terms=()):
        constant = float(constant)
        if constant <= 0:
            raise ValueError("roof constant must be positive")
        norm_terms = []
        total = 0.0
        for kvec, amp in terms:
            kvec = tuple(int(k) for k in kvec)
            if len(kvec) != 2:
                raise ValueError("roof wave vectors must have 2 components")
            if all(k == 0 for k in kvec):
                raise ValueError("constant roof term must go into `constant`")
            amp = float(amp)
            total += abs(amp)
            norm_terms.append((kvec, amp))
        if total >= constant:
            raise ValueError(
                f"sum of |coefficients| {total} must stay below the constant {constant}"
            )
        self.constant = constant
        self.terms = tuple(norm_terms)
        self.roof_min = constant - total
        self.roof_max = constant + total

    @property
    def is_constant(self):
        return not self.terms

    def value(self, base):
        base = np.asarray(base, dtype=float)
        out = np.full(base.shape[:-1], self.constant)
        for kvec, amp in self.terms:
            phase = 2.0 * math.pi * (base @ np.asarray(kvec, dtype=float))
            out = out + amp * np.cos(phase)
        return out

    def gradient(self, base):
        base = np.asarray(base, dtype=float)
        out = np.zeros(base.shape)
        for kvec, amp in self.terms:
            k = np.asarray(kvec, dtype=float)
            phase = 2.0 * math.pi * (base @ k)
            out = out - (2.0 * math.pi * amp * np.sin(phase))[..., None] * k
        return out

    def lipschitz(self):
        return sum(
            2.0 * math.pi * abs(amp) * float(np.linalg.norm(kvec))
            for kvec, amp in self.terms
        )

    def describe(self):
        return ("roof", self.constant, self.terms)


class SuspensionFlow:
    """Suspension of a hyperbolic toral automorphism under a roof function.

    Chart points are (x1, x2, h) with 0 <= h < roof(x); the identification
    (x, roof(x)) ~ (A x, 0) is applied eagerly by :meth:`canonicalize`.
    """

    def __init__(self, base_map, roof=None):
        if not isinstance(base_map, ToralAutomorphism):
            base_map = ToralAutomorphism(base_map)
        if base_map.dim != 2:
            raise ValueError("suspension base must act on T^2")
        if not base_map.hyperbolic:
            raise ValueError("suspension base must be hyperbolic")
        if roof is None:
            roof = Roof(1.0)
        elif not isinstance(roof, Roof):
            roof = Roof(float(roof))
        self.base_map = base_map
        self.roof = roof
        self.space = MappingTorusSpace(self)

    def describe(self):
        return (
            "suspension",
            tuple(map(tuple, self.base_map.matrix.tolist())),
            self.roof.describe(),
        )

    def canonicalize(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        if pts.shape[-1] != 3:
            raise ValueError("suspension points have 3 chart coordinates")
        base = wrap_unit(pts[:, :2])
        h = pts[:, 2].copy()
        # push up through the ceiling
        for _ in range(10_000):
            r = self.roof.value(base)
            over = h >= r
            if not np.any(over):
                break
            h[over] -= r[over]
            base[over] = self.base_map.apply(base[over])
        else:  # pragma: no cover
            raise ValueError("height too far above the roof to canonicalize")
        for _ in range(10_000):
            under = h < 0
            if not np.any(under):
                break
            base[under] = self.base_map.apply_inverse(base[under])
            h[under] += self.roof.value(base[under])
        else:  # pragma: no cover
            raise ValueError("height too far below zero to canonicalize")
        return np.concatenate([base, h[:, None]], axis=1)

    def flow(self, pts, t):
        """Time-t flow map, vectorized over (N, 3) chart points."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        out = np.atleast_2d(pts).copy()
        out[:, 2] += t
        out = self.canonicalize(out)
        return out[0] if single else out

    def time_t_map(self, t):
        return TimeTMapHandle(self, t)

    def distance(self, p, q):
        return self.space.distance(p, q)

    def random_points(self, rng, count):
        base = rng.random((count, 2))
        h = rng.random(count) * self.roof.value(base)
        return np.concatenate([base, h[:, None]], axis=1)

    def center_time(self, p, q, max_crossings=12, tol=1e-8):
        """Flow time t with flow(p, t) = q, or None if q is off the flow line.

        Candidates are the crossing counts k with A^k base(p) = base(q);
        among matches the minimal |t| wins.  Points whose base is periodic
        under A (e.g. the origin) produce several candidates, which is why
        the scan runs over the whole crossing window.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        best = None
        base = p[:2].copy()
        acc = 0.0  # sum of roofs crossed going up
        for k in range(0, max_crossings + 1):
            if torus_distance(base, q[:2]) < tol:
                t = q[2] - p[2] + acc
                if best is None or abs(t) < abs(best):
                    best = t
            acc += float(self.roof.value(base))
            base = self.base_map.apply(base)
        base = p[:2].copy()
        acc = 0.0
        for _ in range(max_crossings):
            base = self.base_map.apply_inverse(base)
            acc -= float(self.roof.value(base))
            if torus_distance(base, q[:2]) < tol:
                t = q[2] - p[2] + acc
                if best is None or abs(t) < abs(best):
                    best = t
        return best

    def center_times(self, P, Q, max_crossings=12, tol=1e-8):
        """Vectorized center_time over paired arrays; entries may be nan."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        out = np.full(P.shape[0], np.nan)
        base = P[:, :2].copy()
        acc = np.zeros(P.shape[0])
        for k in range(0, max_crossings + 1):
            hit = torus_distance(base, Q[:, :2]) < tol
            if np.any(hit):
                t = Q[hit, 2] - P[hit, 2] + acc[hit]
                cur = out[hit]
                take = np.isnan(cur) | (np.abs(t) < np.abs(cur))
                cur[take] = t[take]
                out[hit] = cur
            acc += self.roof.value(base)
            base = self.base_map.apply(base)
        base = P[:, :2].copy()
        acc = np.zeros(P.shape[0])
        for _ in range(max_crossings):
            base = self.base_map.apply_inverse(base)
            acc -= self.roof.value(base)
            hit = torus_distance(base, Q[:, :2]) < tol
            if np.any(hit):
                t = Q[hit, 2] - P[hit, 2] + acc[hit]
                cur = out[hit]
                take = np.isnan(cur) | (np.abs(t) < np.abs(cur))
                cur[take] = t[take]
                out[hit] = cur
        return out


class MappingTorusSpace:
    """Chart metric on the mapping torus of a hyperbolic base map.

    The distance between canonical points is the minimum chart distance over
    the nearby lifts of either argument through the identification
    (x, roof(x)) ~ (A x, 0).  Within the injectivity scale (pairs closer
    than about 0.2) this behaves as a metric; beyond it the value is a
    documented approximation, so estimators cap their radii at 0.2.
    """

    kind = "mapping_torus"

    def __init__(self, flow):
        self.flow = flow
        self.dim = 3

    def canonicalize(self, pts):
        return self.flow.canonicalize(pts)

    def lift_reps(self, pts):
        """The identity lift plus one lift through each side of the seam.

        Returns (N, 3, 3): representative r=0 is the point itself, r=1 is
        the image one sheet down (A x, h - roof(x)), r=2 one sheet up
        (A^-1 x, h + roof(A^-1 x)).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        base = pts[:, :2]
        h = pts[:, 2]
        fl = self.flow
        down_base = fl.base_map.apply(base)
        down = np.concatenate([down_base, (h - fl.roof.value(base))[:, None]], axis=1)
        up_base = fl.base_map.apply_inverse(base)
        up = np.concatenate([up_base, (h + fl.roof.value(up_base))[:, None]], axis=1)
        return np.stack([pts, down, up], axis=1)

    @property
    def wrap_mask(self):
        return np.array([True, True, False])

    @staticmethod
    def _chart_dist(p, reps):
        d = p[..., None, :2] - reps[..., :2]
        d = np.abs(d)
        d = np.minimum(d, 1.0 - d)
        dh = p[..., None, 2] - reps[..., 2]
        return np.sqrt(np.sum(d * d, axis=-1) + dh * dh)

    def distance(self, p, q):
        """Symmetrized lift distance (min over lifts of either argument)."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if p.shape[-1] != 3 or q.shape[-1] != 3:
            raise ValueError("suspension points have 3 chart coordinates")
        p2 = np.atleast_2d(p)
        q2 = np.atleast_2d(q)
        if p2.shape[0] == 1 and q2.shape[0] > 1:
            p2 = np.broadcast_to(p2, q2.shape)
        if q2.shape[0] == 1 and p2.shape[0] > 1:
            q2 = np.broadcast_to(q2, p2.shape)
        dq = self._chart_dist(p2, self.lift_reps(q2)).min(axis=-1)
        dp = self._chart_dist(q2, self.lift_reps(p2)).min(axis=-1)
        out = np.minimum(dq, dp)
        if p.ndim == 1 and q.ndim == 1:
            return float(out[0])
        return out

    chord = distance

    def lerp(self, p, q, frac):
        """Interpolate toward the lift of q nearest p; canonicalize after."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        single = p.ndim == 1 and q.ndim == 1
        p2 = np.atleast_2d(p)
        q2 = np.atleast_2d(q)
        if p2.shape[0] == 1 and q2.shape[0] > 1:
            p2 = np.broadcast_to(p2, q2.shape)
        if q2.shape[0] == 1 and p2.shape[0] > 1:
            q2 = np.broadcast_to(q2, p2.shape)
        reps = self.lift_reps(q2)
        # compare in the chart with base wrap handled by wrap_diff
        diffs = np.concatenate(
            [
                wrap_diff(reps[:, :, :2], p2[:, None, :2]),
                reps[:, :, 2:] - p2[:, None, 2:],
            ],
            axis=2,
        )
        norms = np.linalg.norm(diffs, axis=2)
        step = diffs[np.arange(p2.shape[0]), np.argmin(norms, axis=1)]
        frac = np.asarray(frac, dtype=float)
        if frac.ndim == 1:
            frac = frac[:, None]
        out = self.canonicalize(p2 + frac * step)
        if single and frac.ndim == 0:
            return out[0]
        return out

    def random_points(self, rng, count):
        return self.flow.random_points(rng, count)

    def grid(self, resolution):
        """Probe grid: base resolution^2 times `resolution` height fractions."""
        if resolution ** 3 > 2 ** 20:
            raise ValueError("suspension grid exceeds the 2^20 cap")
        ax = np.arange(resolution) / resolution
        b1, b2, hf = np.meshgrid(ax, ax, ax, indexing="ij")
        base = np.stack([b1.ravel(), b2.ravel()], axis=-1)
        h = hf.ravel() * self.flow.roof.value(base)
        return np.concatenate([base, h[:, None]], axis=1)


def suspension_distance(flow, p, q):
    """Distance on the mapping torus of `flow` (see MappingTorusSpace)."""
    return flow.space.distance(p, q)


def flow(susp, pts, t):
    """Module-level alias for SuspensionFlow.flow."""
    return susp.flow(pts, t)


class SystemHandle:
    """Uniform interface: step, step_back, jacobian, distance, orbits."""

    space = None
    invertible = True
    #: center leaves coincide with flow lines of a reference suspension flow
    preserves_center_leaves = False

    @property
    def dim(self):
        return self.space.dim

    def step(self, pts):
        raise NotImplementedError

    def step_back(self, pts):
        raise NotImplementedError

    def jacobian(self, p):
        raise NotImplementedError

    def distance(self, p, q):
        return self.space.distance(p, q)

    def describe(self):
        raise NotImplementedError

    def orbit_table(self, pts, n):
        """Iterates 0..n-1 of each point: array of shape (n, N, dim)."""
        if n < 1:
            raise ValueError("orbit length must be >= 1")
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty((n, pts.shape[0], pts.shape[1]))
        out[0] = self.space.canonicalize(pts)
        for i in range(1, n):
            out[i] = self.step(out[i - 1])
        return out


class ToralMapHandle(SystemHandle):
    """Integer-matrix map on T^d; invertible only when |det| = 1."""

    def __init__(self, matrix):
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if not np.all(m == np.round(m)):
            raise ValueError("matrix entries must be integers")
        m = np.round(m).astype(np.int64)
        det = int(round(np.linalg.det(m.astype(float))))
        if det == 0:
            raise ValueError("matrix must be nonsingular")
        self.matrix = m
        self.determinant = det
        self.space = TorusSpace(m.shape[0])
        self.invertible = abs(det) == 1
        self.automorphism = ToralAutomorphism(m) if self.invertible else None

    def describe(self):
        return ("toral", tuple(map(tuple, self.matrix.tolist())))

    def step(self, pts):
        return wrap_unit(np.asarray(pts, dtype=float) @ self.matrix.T.astype(float))

    def step_back(self, pts):
        if not self.invertible:
            raise ValueError("map is not invertible (|det| != 1)")
        return self.automorphism.apply_inverse(pts)

    def jacobian(self, p):
        return self.matrix.astype(float)


class TimeTMapHandle(SystemHandle):
    """Time-t map of a suspension flow."""

    preserves_center_leaves = True

    def __init__(self, susp_flow, t):
        if not isinstance(susp_flow, SuspensionFlow):
            raise ValueError("need a SuspensionFlow")
        self.suspension = susp_flow
        self.t = float(t)
        self.space = susp_flow.space

    @property
    def reference_flow(self):
        return self.suspension

    def describe(self):
        return ("time_t", self.suspension.describe(), self.t)

    def step(self, pts):
        return self.suspension.flow(pts, self.t)

    def step_back(self, pts):
        return self.suspension.flow(pts, -self.t)

    def jacobian(self, p):
        return _flow_jacobian(self.suspension, np.asarray(p, dtype=float), self.t)


def _flow_jacobian(susp, p, t):
    """Chart derivative of the time-t flow at p, away from crossing times.

    Crossing the ceiling multiplies by [[A, 0], [-grad roof, 1]]; crossing
    the floor by the inverse block.  Height translation itself has identity
    derivative.
    """
    base = wrap_unit(p[:2].copy())
    h = float(p[2]) + t
    A = susp.base_map.matrix.astype(float)
    Ainv = susp.base_map.inverse_matrix.astype(float)
    D = np.eye(3)
    for _ in range(10_000):
        r = float(susp.roof.value(base))
        if h < r:
            break
        g = susp.roof.gradient(base)
        block = np.eye(3)
        block[:2, :2] = A
        block[2, :2] = -g
        D = block @ D
        h -= r
        base = susp.base_map.apply(base)
    for _ in range(10_000):
        if h >= 0:
            break
        base = susp.base_map.apply_inverse(base)
        r = float(susp.roof.value(base))
        g = susp.roof.gradient(base)
        block = np.eye(3)
        block[:2, :2] = Ainv
        block[2, :2] = g @ Ainv
        D = block @ D
        h += r
    return D


def time_t_map(susp_flow, t):
    return TimeTMapHandle(susp_flow, t)


@dataclass(frozen=True)
class CenterShear:
    """Fiber shear (x, s) -> flow((x, s), eps * sigma(s)).

    sigma is a trigonometric polynomial in the height coordinate with the
    roof constant as period; it is therefore well defined on the quotient.
    Requires a constant roof so the period matches the seam.
    harmonics: tuple of (m, sin_amp, cos_amp).
    """

    harmonics: tuple = ((1, 1.0, 0.0),)

    shape_id = "center_shear"

    def profile(self, c, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for m, a_sin, a_cos in self.harmonics:
            w = 2.0 * math.pi * m / c
            out = out + a_sin * np.sin(w * s) + a_cos * np.cos(w * s)
        return out

    def profile_deriv(self, c, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for m, a_sin, a_cos in self.harmonics:
            w = 2.0 * math.pi * m / c
            out = out + w * (a_sin * np.cos(w * s) - a_cos * np.sin(w * s))
        return out

    def lipschitz(self, c):
        return sum(
            2.0 * math.pi * m / c * (abs(a_sin) + abs(a_cos))
            for m, a_sin, a_cos in self.harmonics
        )

    def describe(self):
        return ("center_shear", tuple(tuple(h) for h in self.harmonics))


@dataclass(frozen=True)
class BaseShear:
    """Horizontal shear (x, s) -> (x + eps * u(s) * w, s).

    u(s) = sum_m a_m (1 - cos(2 pi m s / c)) / 2 vanishes together with its
    derivative at the seam, so the map is C^1 on the quotient.  Requires a
    constant roof.
    """

    direction: tuple = (1.0, 0.0)
    harmonics: tuple = ((1, 1.0),)

    shape_id = "base_shear"

    def profile(self, c, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for m, amp in self.harmonics:
            out = out + amp * 0.5 * (1.0 - np.cos(2.0 * math.pi * m * s / c))
        return out

    def profile_deriv(self, c, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for m, amp in self.harmonics:
            w = 2.0 * math.pi * m / c
            out = out + amp * 0.5 * w * np.sin(w * s)
        return out

    def lipschitz(self, c):
        nrm = float(np.linalg.norm(self.direction))
        return nrm * sum(
            abs(amp) * math.pi * m / c for m, amp in self.harmonics
        )

    def describe(self):
        return ("base_shear", tuple(self.direction), tuple(tuple(h) for h in self.harmonics))


class PerturbedHandle(SystemHandle):
    """Composition  reference_time_t  o  shear  for small shear size eps."""

    def __init__(self, reference, epsilon, shape):
        if not isinstance(reference, TimeTMapHandle):
            raise ValueError("reference must be a time-t map of a suspension flow")
        if not reference.suspension.roof.is_constant:
            raise ValueError("perturbation shapes require a constant roof")
        epsilon = float(epsilon)
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        c = reference.suspension.roof.constant
        lip = shape.lipschitz(c)
        eps_max = 0.5 / lip if lip > 0 else math.inf
        if epsilon >= eps_max:
            raise ValueError(
                f"epsilon {epsilon} is not below the admissibility threshold {eps_max:.6g}"
            )
        self.reference = reference
        self.epsilon = epsilon
        self.shape = shape
        self.eps_max = eps_max
        self.space = reference.space
        self.preserves_center_leaves = shape.shape_id == "center_shear"
        self._check_determinant_grid()

    @property
    def reference_flow(self):
        return self.reference.suspension

    def describe(self):
        return (
            "perturbed",
            self.reference.describe(),
            self.epsilon,
            self.shape.describe(),
        )

    def _check_determinant_grid(self, step=1.0 / 64.0, floor=0.1):
        """Shear derivative determinant on a chart grid with step 1/64."""
        c = self.reference.suspension.roof.constant
        ax = np.arange(0.0, 1.0, step)
        hs = np.arange(0.0, c, step * c)
        if self.shape.shape_id == "center_shear":
            # det D(shear) = 1 + eps sigma'(s); x-independent but evaluated
            # on the full lattice per the verification-grid contract
            det_h = 1.0 + self.epsilon * self.shape.profile_deriv(c, hs)
            dets = np.broadcast_to(det_h, (ax.size * ax.size, hs.size))
        else:
            dets = np.ones((ax.size * ax.size, hs.size))
        m = float(np.min(dets))
        if m <= floor:
            raise ValueError(
                f"shear derivative determinant reaches {m:.3g} <= {floor} on the check grid"
            )
        self.min_shear_determinant = m

    # --- shear and its inverse --------------------------------------------
    def shear(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        pts = self.space.canonicalize(pts)
        c = self.reference.suspension.roof.constant
        if self.shape.shape_id == "center_shear":
            tau = self.epsilon * self.shape.profile(c, pts[:, 2])
            out = pts.copy()
            out[:, 2] += tau
            return self.space.canonicalize(out)
        out = pts.copy()
        u = self.epsilon * self.shape.profile(c, pts[:, 2])
        out[:, :2] = wrap_unit(out[:, :2] + u[:, None] * np.asarray(self.shape.direction))
        return out

    def shear_inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        pts = self.space.canonicalize(pts)
        c = self.reference.suspension.roof.constant
        if self.shape.shape_id == "base_shear":
            out = pts.copy()
            u = self.epsilon * self.shape.profile(c, pts[:, 2])
            out[:, :2] = wrap_unit(out[:, :2] - u[:, None] * np.asarray(self.shape.direction))
            return out
        # center shear: solve s = s' + eps sigma(s) by fixed point on the
        # flow time; contraction factor eps * Lip(sigma) < 1/2
        fl = self.reference.suspension
        guess = pts.copy()
        for _ in range(60):
            tau = self.epsilon * self.shape.profile(c, guess[:, 2])
            nxt = fl.flow(pts, -tau)
            if np.max(np.abs(nxt - guess)) < 1e-14:
                guess = nxt
                break
            guess = nxt
        return guess

    def step(self, pts):
        return self.reference.step(self.shear(pts))

    def step_back(self, pts):
        return self.shear_inverse(self.reference.step_back(pts))

    def jacobian(self, p):
        p = np.asarray(p, dtype=float)
        c = self.reference.suspension.roof.constant
        mid = self.shear(p)[0]
        Dref = self.reference.jacobian(mid)
        if self.shape.shape_id == "center_shear":
            tau = float(self.epsilon * self.shape.profile(c, p[2]))
            Dflow = _flow_jacobian(self.reference.suspension, p, tau)
            grad_tau = np.array([0.0, 0.0, self.epsilon * float(self.shape.profile_deriv(c, p[2]))])
            Dshear = Dflow + np.outer(np.array([0.0, 0.0, 1.0]), grad_tau)
        else:
            du = float(self.epsilon * self.shape.profile_deriv(c, p[2]))
            Dshear = np.eye(3)
            Dshear[:2, 2] = du * np.asarray(self.shape.direction)
        return Dref @ Dshear


def perturbed_map(reference, epsilon, shape):
    """Admissible perturbation of a time-t map; errors above the threshold."""
    return PerturbedHandle(reference, epsilon, shape)


def cat_map():
    """The standard hyperbolic automorphism [[2, 1], [1, 1]] of T^2."""
    return ToralMapHandle([[2, 1], [1, 1]])


def circle_doubling():
    """x -> 2x mod 1 on the circle; forward-only (degree 2)."""
    return ToralMapHandle([[2]])
