"""Streamline integration and topology classification for admissible flows.

Streamlines are integrated with classical fixed-step RK4 applied to the
unit-speed system

    dP/ds = q(P) / |q(P)|,      dt/ds = 1 / |q(P)|,

i.e. the integration parameter is arc length.  The curve traced is identical
to the time parameterization, but regions where |q| spans many orders of
magnitude (channels that flatten toward stagnation lines) are traversed in
O(1) steps instead of O(1/|q|); physical time is carried along as a
passenger variable and reported for returns.  `step` and `t_max` are
therefore arc-length quantities (length units).

Integration happens in the universal cover (coordinates never wrapped);
classification compares the path against lattice translates of its seed.
Velocity between nodes is evaluated by a C^4 quintic spline by default,
which keeps closed numerical orbits closed to ~1e-8 and preserves the
integrator's 4th-order convergence; plain bilinear interpolation is
available but limits both (its cell-edge derivative jumps degrade RK4 to
roughly 2nd order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .domain import TORUS, PeriodicCell, VectorField
from .errors import InconclusiveSurveyError, InputError
from ._util import map_chunks

TAG_STAGNATION = "Stagnation"
TAG_CLOSED = "Closed"
TAG_UNBOUNDED_PERIODIC = "UnboundedPeriodic"
TAG_UNBOUNDED_NONPERIODIC = "UnboundedNonPeriodic"
TAG_UNDETERMINED = "Undetermined"

# |q| < STAG_FRACTION * max|q| stops the integrator
STAG_FRACTION = 1e-10
# span (in lattice periods) certifying an unbounded trajectory; the flattened
# channel flow tops out near 2.7 reachable periods, so 3 would never fire
UNBOUNDED_SPAN_PERIODS = 2.5


class _SplineField:
    """Quintic B-spline interpolant of a grid velocity field (C^4 between nodes).

    Uses prefiltered ndimage coefficients so evaluation is a single C call;
    periodic directions use exact grid wrap, strip walls use reflection.
    """

    ORDER = 5

    def __init__(self, q: VectorField, order: int = None):
        order = self.ORDER if order is None else order
        cell = q.cell
        self.cell = cell
        self.speed_scale = q.max_norm()
        self._mode = "grid-wrap" if cell.kind == TORUS else "reflect"
        if cell.kind == TORUS:
            vx, vy = q.vx, q.vy
        else:
            # pad x by wrap so only the y walls rely on the reflect mode
            pad = order + 1
            ix = np.arange(-pad, cell.n1 + pad) % cell.n1
            vx, vy = q.vx[ix, :], q.vy[ix, :]
            self._xpad = pad
        self._order = order
        self._cx = ndimage.spline_filter(vx, order=order, mode=self._mode)
        self._cy = ndimage.spline_filter(vy, order=order, mode=self._mode)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        cell = self.cell
        gx = np.mod(pts[:, 0], cell.L1) / cell.h1
        if cell.kind == TORUS:
            gy = np.mod(pts[:, 1], cell.L2) / cell.h2
        else:
            gx = gx + self._xpad
            gy = np.clip(pts[:, 1], 0.0, cell.L2) / cell.h2
        coords = np.stack([gx, gy])
        out = np.empty_like(pts)
        ndimage.map_coordinates(self._cx, coords, output=out[:, 0], order=self._order, mode=self._mode, prefilter=False)
        ndimage.map_coordinates(self._cy, coords, output=out[:, 1], order=self._order, mode=self._mode, prefilter=False)
        return out


class _BilinearField:
    """Piecewise bilinear interpolant (C^0; kept for comparison runs)."""

    def __init__(self, q: VectorField):
        self.cell = q.cell
        self.speed_scale = q.max_norm()
        self._vx = q.vx
        self._vy = q.vy

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        cell = self.cell
        gx = np.mod(pts[:, 0], cell.L1) / cell.h1
        i0 = np.floor(gx).astype(int) % cell.n1
        fx = gx - np.floor(gx)
        i1 = (i0 + 1) % cell.n1
        if cell.kind == TORUS:
            gy = np.mod(pts[:, 1], cell.L2) / cell.h2
            j0 = np.floor(gy).astype(int) % cell.ny
            fy = gy - np.floor(gy)
            j1 = (j0 + 1) % cell.ny
        else:
            gy = np.clip(pts[:, 1], 0.0, cell.L2) / cell.h2
            j0 = np.clip(np.floor(gy).astype(int), 0, cell.ny - 2)
            fy = gy - j0
            j1 = j0 + 1
        out = np.empty_like(pts)
        for comp, arr in ((0, self._vx), (1, self._vy)):
            out[:, comp] = (
                (1 - fx) * (1 - fy) * arr[i0, j0]
                + fx * (1 - fy) * arr[i1, j0]
                + (1 - fx) * fy * arr[i0, j1]
                + fx * fy * arr[i1, j1]
            )
        return out


def build_interpolant(q: VectorField, method: str = "spline"):
    if method == "spline":
        return _SplineField(q)
    if method == "bilinear":
        return _BilinearField(q)
    raise InputError(f"unknown interpolation method {method!r}")


@dataclass(frozen=True)
class Streamline:
    """A traced streamline in the universal cover.

    samples/unit_tangents/speeds/times are parallel arrays; `step` is the
    arc-length increment between consecutive samples and `duration` the total
    arc traversed.  seed_index marks the seed's position inside `samples`
    (> 0 for two-sided orbits).
    """

    seed: np.ndarray
    samples: np.ndarray
    unit_tangents: np.ndarray
    speeds: np.ndarray
    times: np.ndarray
    step: float
    duration: float
    stopped_on_stagnation: bool
    seed_index: int = 0


@dataclass(frozen=True)
class TrajectoryClassification:
    """Verdict for one streamline."""

    tag: str
    period_vector: np.ndarray | None
    return_time: float | None
    closest_return: float
    span_periods: float
    growth_rate: float


@dataclass(frozen=True)
class FlowSurvey:
    """Aggregate of per-seed classifications for one flow."""

    seeds: np.ndarray
    classifications: tuple
    global_period: np.ndarray | None
    parallel_consistent: bool
    counts: dict


_SEGMENT = 64


def _integrate_batch(interp, seeds, step, s_max, direction=1.0):
    """Fixed-step RK4 on the unit-speed system for a batch of seeds.

    `direction` is a scalar or per-seed array of +-1 (time direction).
    Returns per-seed (samples, unit_tangents, speeds, times, stagnated); the
    recorded tangent is always q/|q| regardless of direction.  Seeds whose
    speed drops below the stagnation threshold are truncated at the first
    sub-threshold sample.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    m = len(seeds)
    n_steps = max(1, int(round(s_max / step)))
    thresh = STAG_FRACTION * interp.speed_scale
    floor = max(thresh, 1e-300)

    samples = np.full((n_steps + 1, m, 2), np.nan)
    tangents = np.full((n_steps + 1, m, 2), np.nan)
    speeds = np.full((n_steps + 1, m), np.nan)
    times = np.full((n_steps + 1, m), np.nan)
    samples[0] = seeds
    times[0] = 0.0
    cut = np.full(m, n_steps + 1, dtype=int)
    stagnated = np.zeros(m, dtype=bool)

    if interp.speed_scale == 0.0:
        tangents[0] = 0.0
        speeds[0] = 0.0
        return _split_batch(samples, tangents, speeds, times, np.ones(m, dtype=int), np.ones(m, dtype=bool))

    dirs = np.broadcast_to(np.asarray(direction, dtype=float), (m,)).copy()

    def field(P):
        V = interp(P)
        spd = np.hypot(V[:, 0], V[:, 1])
        u = V / np.maximum(spd, floor)[:, None]
        return u, spd

    live = np.arange(m)
    pos = seeds.copy()
    t = np.zeros(m)
    k = 0
    while k < n_steps and live.size:
        seg = min(_SEGMENT, n_steps - k)
        P = pos[live]
        T = t[live]
        d = dirs[live][:, None] * step
        for j in range(seg):
            u1, s1 = field(P)
            tangents[k + j, live] = u1
            speeds[k + j, live] = s1
            u2, s2 = field(P + 0.5 * d * u1)
            u3, s3 = field(P + 0.5 * d * u2)
            u4, s4 = field(P + d * u3)
            P = P + (d / 6.0) * (u1 + 2.0 * u2 + 2.0 * u3 + u4)
            T = T + (d[:, 0] / 6.0) * (1.0 / s1 + 2.0 / s2 + 2.0 / s3 + 1.0 / s4)
            samples[k + j + 1, live] = P
            times[k + j + 1, live] = T
        pos[live] = P
        t[live] = T
        k += seg
        # retro-truncate seeds that hit the stagnation threshold this segment
        block = speeds[k - seg : k, live]
        hit = block < thresh
        if np.any(hit):
            first = np.where(hit.any(axis=0), hit.argmax(axis=0), seg)
            died = first < seg
            gi = live[died]
            cut[gi] = (k - seg) + first[died] + 1
            stagnated[gi] = True
            live = live[~died]
    cut = np.minimum(cut, k + 1)

    # field data at each seed's final sample
    last = cut - 1
    P_last = samples[last, np.arange(m)]
    u, s = field(P_last)
    missing = np.isnan(speeds[last, np.arange(m)])
    for i in np.flatnonzero(missing):
        tangents[last[i], i] = u[i] if s[i] > 0 else 0.0
        speeds[last[i], i] = s[i]
    return _split_batch(samples, tangents, speeds, times, cut, stagnated)


def _split_batch(samples, tangents, speeds, times, counts, stagnated):
    out = []
    for i in range(samples.shape[1]):
        c = counts[i]
        out.append(
            (
                samples[:c, i].copy(),
                tangents[:c, i].copy(),
                speeds[:c, i].copy(),
                times[:c, i].copy(),
                bool(stagnated[i]),
            )
        )
    return out


def _check_seed(cell: PeriodicCell, seed):
    seed = np.asarray(seed, dtype=float).reshape(2)
    if not (0.0 <= seed[0] <= cell.L1 and 0.0 <= seed[1] <= cell.L2):
        raise InputError(f"seed {tuple(seed)} lies outside the cell closure")
    return seed


def integrate_streamline(
    q: VectorField,
    seed,
    step: float,
    t_max: float,
    method: str = "spline",
    interp=None,
) -> Streamline:
    """Trace the forward streamline through `seed`.

    `step` is the arc-length increment, `t_max` the total arc budget; the
    integrator stops early when |q| drops below the stagnation threshold.
    """
    if step <= 0:
        raise InputError(f"step must be positive, got {step}")
    if t_max < step:
        raise InputError("t_max must be at least one step")
    seed = _check_seed(q.cell, seed)
    if interp is None:
        interp = build_interpolant(q, method)
    (samples, tangents, speeds, times, stag) = _integrate_batch(interp, seed[None, :], step, t_max)[0]
    return Streamline(
        seed=seed,
        samples=samples,
        unit_tangents=tangents,
        speeds=speeds,
        times=times,
        step=step,
        duration=(len(samples) - 1) * step,
        stopped_on_stagnation=stag,
        seed_index=0,
    )


def integrate_orbit(
    q: VectorField,
    seed,
    step: float,
    t_max: float,
    method: str = "spline",
    interp=None,
) -> Streamline:
    """Trace the full orbit through `seed` (both time directions, stitched)."""
    if step <= 0:
        raise InputError(f"step must be positive, got {step}")
    seed = _check_seed(q.cell, seed)
    if interp is None:
        interp = build_interpolant(q, method)
    fwd, bwd = _integrate_batch(
        interp, np.stack([seed, seed]), step, t_max, direction=np.array([1.0, -1.0])
    )
    return _stitch_orbit(seed, step, fwd, bwd)


def _stitch_orbit(seed, step, fwd, bwd):
    fs, ft, fsp, ftm, fstag = fwd
    bs, bt, bsp, btm, bstag = bwd
    samples = np.concatenate([bs[:0:-1], fs])
    tangents = np.concatenate([bt[:0:-1], ft])
    speeds = np.concatenate([bsp[:0:-1], fsp])
    times = np.concatenate([btm[:0:-1], ftm])
    return Streamline(
        seed=np.asarray(seed, dtype=float),
        samples=samples,
        unit_tangents=tangents,
        speeds=speeds,
        times=times,
        step=step,
        duration=(len(samples) - 1) * step,
        stopped_on_stagnation=fstag or bstag,
        seed_index=len(bs) - 1,
    )


def _hermite_min_dist(p0, p1, u0, u1, ds, target, t0, t1):
    """Closest approach of a cubic Hermite segment to `target`.

    Coarse scan plus Newton polish of |H(sigma) - target|^2 on the cubic, so
    the result is limited only by the Hermite reconstruction error, not the
    scan resolution.  Returns (distance, time) with time interpolated
    linearly in sigma.
    """
    # H(s) = a3 s^3 + a2 s^2 + a1 s + a0 in Hermite form
    a0 = np.asarray(p0, dtype=float)
    a1 = ds * np.asarray(u0, dtype=float)
    d = np.asarray(p1, dtype=float) - a0
    a2 = 3.0 * d - ds * (2.0 * np.asarray(u0) + np.asarray(u1))
    a3 = -2.0 * d + ds * (np.asarray(u0) + np.asarray(u1))

    sig = np.linspace(0.0, 1.0, 17)
    pts = (
        a0[None, :]
        + np.outer(sig, a1)
        + np.outer(sig**2, a2)
        + np.outer(sig**3, a3)
    )
    d2 = np.sum((pts - target) ** 2, axis=1)
    s = float(sig[int(np.argmin(d2))])
    for _ in range(12):
        H = a0 + s * a1 + s * s * a2 + s**3 * a3
        dH = a1 + 2.0 * s * a2 + 3.0 * s * s * a3
        d2H = 2.0 * a2 + 6.0 * s * a3
        r = H - target
        g = 2.0 * float(r @ dH)
        h = 2.0 * float(dH @ dH + r @ d2H)
        if h <= 0:
            break
        s_new = s - g / h
        s_new = min(1.0, max(0.0, s_new))
        if abs(s_new - s) < 1e-14:
            s = s_new
            break
        s = s_new
    H = a0 + s * a1 + s * s * a2 + s**3 * a3
    dist = float(np.hypot(H[0] - target[0], H[1] - target[1]))
    return dist, t0 + s * (t1 - t0)


def classify_streamline(
    s: Streamline,
    cell: PeriodicCell,
    tol: float = None,
    unbounded_span: float = UNBOUNDED_SPAN_PERIODS,
    stag_radius: float = None,
) -> TrajectoryClassification:
    """Classify one streamline: Stagnation, Closed, UnboundedPeriodic(a),
    UnboundedNonPeriodic, or Undetermined.

    Returns within `tol` of a lattice translate of the seed decide the
    periodic tags; a cover span of `unbounded_span` lattice periods without
    any return certifies an unbounded non-periodic trajectory; Undetermined
    is returned rather than guessing when the arc budget expires first.
    """
    if tol is None:
        tol = 1e-6 * min(cell.L1, cell.L2)
    if tol <= 0:
        raise InputError(f"tolerance must be positive, got {tol}")
    if stag_radius is None:
        stag_radius = max(10.0 * tol, 1e-3 * min(cell.L1, cell.L2))

    seed = s.seed
    pts = s.samples
    n = len(pts)
    delta = pts - seed[None, :]

    span_x = float(np.ptp(pts[:, 0])) / cell.L1
    span_y = float(np.ptp(pts[:, 1])) / cell.L2
    span = max(span_x, span_y) if cell.kind == TORUS else span_x
    max_disp = float(np.max(np.hypot(delta[:, 0], delta[:, 1])))
    growth = max_disp / s.duration if s.duration > 0 else 0.0

    # nearest lattice translate per sample
    ax = np.round(delta[:, 0] / cell.L1) * cell.L1
    if cell.kind == TORUS:
        ay = np.round(delta[:, 1] / cell.L2) * cell.L2
    else:
        ay = np.zeros(n)
    res = np.hypot(delta[:, 0] - ax, delta[:, 1] - ay)

    gate = max(50.0 * tol, 2.0 * s.step)
    arc_from_seed = np.abs(np.arange(n) - s.seed_index) * s.step
    nontrivial = (np.abs(ax) > 0) | (np.abs(ay) > 0)
    eligible = (res < gate) & (nontrivial | (arc_from_seed >= 10.0 * gate))

    closest = float(res[eligible].min()) if np.any(eligible) else float("inf")
    returns = []
    for k in np.flatnonzero(eligible):
        target = seed + np.array([ax[k], ay[k]])
        best = (float("inf"), None)
        for k0 in (k - 1, k):
            if 0 <= k0 < n - 1:
                d, t_at = _hermite_min_dist(
                    pts[k0], pts[k0 + 1],
                    s.unit_tangents[k0], s.unit_tangents[k0 + 1],
                    s.step * np.sign(s.times[k0 + 1] - s.times[k0] + 1e-300),
                    target, s.times[k0], s.times[k0 + 1],
                )
                if d < best[0]:
                    best = (d, t_at)
        d, t_at = best
        closest = min(closest, d)
        if d < tol:
            returns.append((np.array([ax[k], ay[k]]), d, t_at))

    zero_returns = [r for r in returns if r[0][0] == 0.0 and r[0][1] == 0.0]
    translates = [r for r in returns if not (r[0][0] == 0.0 and r[0][1] == 0.0)]

    if zero_returns and not translates:
        t_ret = _preferred_time([r[2] for r in zero_returns])
        return TrajectoryClassification(
            TAG_CLOSED, None, t_ret, closest, span, growth
        )
    if translates and not zero_returns:
        verdict = _consistent_period(translates)
        if verdict is not None:
            a, t_at = verdict
            return TrajectoryClassification(
                TAG_UNBOUNDED_PERIODIC, a, t_at, closest, span, growth
            )
        return TrajectoryClassification(TAG_UNDETERMINED, None, None, closest, span, growth)
    if translates and zero_returns:
        # a real orbit cannot both close and translate; numerical wandering
        return TrajectoryClassification(TAG_UNDETERMINED, None, None, closest, span, growth)
    if span >= unbounded_span:
        return TrajectoryClassification(
            TAG_UNBOUNDED_NONPERIODIC, None, None, closest, span, growth
        )
    if s.stopped_on_stagnation and max_disp <= stag_radius:
        return TrajectoryClassification(
            TAG_STAGNATION, None, None, closest, span, growth
        )
    return TrajectoryClassification(TAG_UNDETERMINED, None, None, closest, span, growth)


def _consistent_period(translates):
    """Primitive period vector if >= 2 returns land on integer multiples of it.

    One return is not treated as a certificate: slow numerical wandering along
    stagnation networks can hit a single lattice translate by accident, but it
    does not reproduce the exact integer-multiple return pattern of a genuine
    periodic unbounded trajectory.
    """
    if len(translates) < 2:
        return None
    norms = [float(np.hypot(*r[0])) for r in translates]
    nmin = min(norms)
    base_pool = [r for r, nn in zip(translates, norms) if nn <= nmin * (1 + 1e-12)]
    pos_t = [r for r in base_pool if r[2] > 0]
    pool = pos_t if pos_t else base_pool
    pool = sorted(pool, key=lambda r: (abs(r[2]), -r[0][0], -r[0][1]))
    a0, _, t0 = pool[0]
    n0 = float(np.hypot(*a0))
    for a, _, _ in translates:
        cross = abs(a[0] * a0[1] - a[1] * a0[0])
        if cross > 1e-9 * n0 * float(np.hypot(*a)):
            return None
        ratio = float(np.dot(a, a0)) / n0**2
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) == 0:
            return None
    return a0, t0


def _preferred_time(ts):
    pos = [t for t in ts if t > 0]
    return min(pos) if pos else max(ts)


def survey_seeds(cell: PeriodicCell, n_seeds: int) -> np.ndarray:
    """Uniform sub-lattice of seeds (row-major, includes lattice lines on the torus)."""
    if n_seeds < 4:
        raise InputError(f"need at least 4 seeds, got {n_seeds}")
    m = int(math.ceil(math.sqrt(n_seeds)))
    xs = np.arange(m) * cell.L1 / m
    if cell.kind == TORUS:
        ys = np.arange(m) * cell.L2 / m
    else:
        ys = (np.arange(m) + 1) * cell.L2 / (m + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)[:n_seeds]


def survey_flow(
    q: VectorField,
    n_seeds: int = 16,
    step: float = None,
    t_max: float = None,
    tol: float = None,
    method: str = "spline",
    unbounded_span: float = UNBOUNDED_SPAN_PERIODS,
) -> FlowSurvey:
    """Classify a lattice of seeds and extract the global period vector.

    Raises InconclusiveSurveyError when every seed is Undetermined.  Flags
    (rather than hides) the numerical-failure case of two non-parallel
    period vectors, which admissible flows cannot produce.
    """
    cell = q.cell
    if step is None:
        step = 1e-3 * min(cell.L1, cell.L2)
    if t_max is None:
        t_max = 10.0 * max(cell.L1, cell.L2)
    if tol is None:
        tol = 1e-6 * min(cell.L1, cell.L2)

    seeds = survey_seeds(cell, n_seeds)
    interp = build_interpolant(q, method)

    def run_chunk(chunk):
        both = np.concatenate([chunk, chunk])
        dirs = np.concatenate([np.ones(len(chunk)), -np.ones(len(chunk))])
        traced = _integrate_batch(interp, both, step, t_max, direction=dirs)
        out = []
        for i, seed in enumerate(chunk):
            orbit = _stitch_orbit(seed, step, traced[i], traced[i + len(chunk)])
            out.append(classify_streamline(orbit, cell, tol, unbounded_span=unbounded_span))
        return out

    classifications = map_chunks(run_chunk, seeds)

    counts = {}
    for c in classifications:
        counts[c.tag] = counts.get(c.tag, 0) + 1
    if counts.get(TAG_UNDETERMINED, 0) == len(classifications):
        raise InconclusiveSurveyError(
            "all surveyed seeds came back Undetermined",
            diagnostics={"n_seeds": len(classifications), "step": step, "t_max": t_max},
        )

    period_vectors = [c.period_vector for c in classifications if c.tag == TAG_UNBOUNDED_PERIODIC]
    consistent = True
    global_a = None
    if period_vectors:
        for a in period_vectors[1:]:
            b = period_vectors[0]
            if abs(a[0] * b[1] - a[1] * b[0]) > 1e-9 * np.hypot(*a) * np.hypot(*b):
                consistent = False
        norms = [float(np.hypot(*a)) for a in period_vectors]
        global_a = np.array(period_vectors[int(np.argmin(norms))], dtype=float)
        if global_a[0] < 0 or (global_a[0] == 0 and global_a[1] < 0):
            global_a = -global_a

    return FlowSurvey(
        seeds=seeds,
        classifications=tuple(classifications),
        global_period=global_a,
        parallel_consistent=consistent,
        counts=counts,
    )
