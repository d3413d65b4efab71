"""Zero-set and invariant-set estimation, limit-set diagnostics, and the
epsilon-delta stability and attractivity probes.

Sets are handled as finite point clouds (:class:`SetSample`), never as
manifolds; the invariant-set estimate is an outer filter that can only keep
points whose forward orbit stays inside the generating condition's tube.
Every "stable"/"attractive" verdict is horizon-qualified and carries the
horizon used.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field as dataclass_field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import EmptySampleError, StabcheckError, UnboundedTrajectoryError
from .integrators import (
    HORIZON_REACHED,
    IntegratorConfig,
    Trajectory,
    integrate,
)
from .lyapunov import Certificate
from .sampling import ball_points, sphere_points
from .systems import TimeVaryingField
from .verdicts import FAIL, INCONCLUSIVE, PASS, Verdict

logger = logging.getLogger(__name__)

STABLE = "stable"
UNSTABLE = "unstable"
ATTRACTIVE = "attractive"
NON_ATTRACTIVE = "non_attractive"
INCONCLUSIVE_STATUS = "inconclusive"

_DELTA_RATIO = 2.0 ** -0.25  # geometric delta-search grid ratio


@dataclass(frozen=True, eq=False)
class SetSample:
    """Finite point-cloud approximation of a set.

    ``tolerance`` is the membership slack used to generate the sample (in the
    units of the generating residual, e.g. |W|).  ``membership`` is the
    residual map itself when known, used for tube checks along trajectories.
    """

    points: np.ndarray
    tolerance: float
    label: str = "custom"
    membership: Optional[Callable[[np.ndarray], float]] = None

    @property
    def count(self) -> int:
        return len(self.points)

    def resolution(self) -> float:
        """Geometric scale of the cloud: the largest nearest-neighbour gap."""
        pts = self.points
        if len(pts) < 2:
            return 0.0
        worst = 0.0
        for i in range(len(pts)):
            d = np.linalg.norm(pts - pts[i], axis=1)
            d[i] = math.inf
            worst = max(worst, float(d.min()))
        return worst

    def metadata(self) -> dict:
        return {"label": self.label, "tolerance": self.tolerance, "count": self.count}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = self.points.shape[1] if self.count else 0
            writer.writerow([f"x{i + 1}" for i in range(dim)])
            for p in self.points:
                writer.writerow([repr(float(v)) for v in p])

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _empty_sample(dim: int, tolerance: float, label: str, membership=None) -> SetSample:
    return SetSample(
        points=np.empty((0, dim)), tolerance=tolerance, label=label, membership=membership
    )


def _line_search_min_abs(w, x, axis, radius, iters=56):
    """Golden-section search of |w| along coordinate ``axis`` within the ball."""
    rest = float(np.dot(x, x) - x[axis] * x[axis])
    half = math.sqrt(max(radius * radius - rest, 0.0))
    if half <= 0.0:
        return x
    lo, hi = -half, half
    phi = (math.sqrt(5.0) - 1.0) / 2.0

    def value(pos):
        y = x.copy()
        y[axis] = pos
        return abs(float(w(y)))

    a, b = hi - phi * (hi - lo), lo + phi * (hi - lo)
    fa, fb = value(a), value(b)
    for _ in range(iters):
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - phi * (hi - lo)
            fa = value(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + phi * (hi - lo)
            fb = value(b)
    best = a if fa <= fb else b
    y = x.copy()
    y[axis] = best
    return y


def sample_zero_set(
    w: Callable[[np.ndarray], float],
    radius: float,
    tol: float,
    budget: int = 512,
    *,
    dim: int,
    seed: int = 0,
    sweeps: int = 3,
) -> SetSample:
    """Sample {x : |W(x)| <= tol} inside the ball of the given radius.

    Low-discrepancy seeds are polished by coordinate-wise line searches of
    |W|; seeds that cannot be driven inside the tolerance are dropped.  An
    empty sample is a valid outcome.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be strictly positive")
    seeds = ball_points(budget, dim, radius, seed)
    kept = []
    for p in seeds:
        x = p.copy()
        accepted = abs(float(w(x))) <= tol
        for _ in range(sweeps):
            if accepted:
                break
            for axis in range(dim):
                x = _line_search_min_abs(w, x, axis, radius)
            accepted = abs(float(w(x))) <= tol
        if accepted:
            kept.append(x)
    if not kept:
        return _empty_sample(dim, tol, "E", membership=w)
    return SetSample(points=np.array(kept), tolerance=tol, label="E", membership=w)


def set_distance(p: Sequence[float], s: SetSample) -> float:
    """min over sample points of the Euclidean distance to p."""
    if s.count == 0:
        raise EmptySampleError("set_distance needs a nonempty sample")
    p = np.asarray(p, dtype=float)
    return float(np.min(np.linalg.norm(s.points - p, axis=1)))


def approximate_invariant_set(
    field: TimeVaryingField,
    e_sample: SetSample,
    horizon: float,
    tube_tol: float,
    *,
    cfg: Optional[IntegratorConfig] = None,
    t0: float = 0.0,
    t_grid: Sequence[float] = (0.0, 1.0, 2.0, 3.0),
) -> SetSample:
    """Keep the sample points whose forward orbit stays inside the W-tube.

    Outer-filter approximation: points of the true invariant set are never
    rejected when integration is accurate, but spurious points may survive a
    short horizon.  Integration failures drop the point and are logged.
    """
    from .lyapunov import check_zero_set_time_invariance

    if e_sample.count == 0:
        return _empty_sample(field.dim, e_sample.tolerance, "N", e_sample.membership)
    if not field.autonomous:
        verdict = check_zero_set_time_invariance(field, e_sample, t_grid)
        if not verdict.passed:
            warnings.warn(
                "field is not time-invariant on the sampled zero set; "
                "invariant-set filtering may not be meaningful",
                stacklevel=2,
            )
    membership = e_sample.membership
    if membership is None:
        cloud = e_sample

        def membership(x, _cloud=cloud):
            return set_distance(x, _cloud)

    run_cfg = replace(cfg or IntegratorConfig(), horizon=horizon)
    kept = []
    for p in e_sample.points:
        try:
            traj = integrate(field, t0, p, run_cfg)
        except StabcheckError as exc:
            logger.info("invariant-set filter dropped %s: %s", p.tolist(), exc)
            continue
        if traj.terminated != HORIZON_REACHED:
            logger.info(
                "invariant-set filter dropped %s: trajectory terminated by %s",
                p.tolist(),
                traj.terminated,
            )
            continue
        residual = max(abs(float(membership(x))) for x in traj.xs)
        if residual <= tube_tol:
            kept.append(p)
    if not kept:
        return _empty_sample(field.dim, e_sample.tolerance, "N", e_sample.membership)
    return SetSample(
        points=np.array(kept),
        tolerance=e_sample.tolerance,
        label="N",
        membership=e_sample.membership,
    )


def omega_limit_estimate(
    traj: Trajectory, tail_fraction: float = 0.1, cluster_radius: float = 0.05
) -> SetSample:
    """Greedy radius-clustering of the trajectory tail.

    Centers are actual trajectory states, so they inherit the integration
    accuracy.  Only applies to trajectories that reached their horizon;
    anything that left the domain is rejected as unbounded.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    if cluster_radius <= 0.0:
        raise ValueError("cluster_radius must be strictly positive")
    if traj.terminated != HORIZON_REACHED:
        raise UnboundedTrajectoryError(
            f"limit-set estimate needs a horizon-bounded trajectory, got {traj.terminated}"
        )
    t_cut = traj.ts[0] + (1.0 - tail_fraction) * (traj.ts[-1] - traj.ts[0])
    tail = traj.xs[traj.ts >= t_cut]
    centers: list[np.ndarray] = []
    for x in tail:
        if all(float(np.linalg.norm(x - c)) >= cluster_radius for c in centers):
            centers.append(x)
    return SetSample(points=np.array(centers), tolerance=cluster_radius, label="omega")


def barbalat_diagnostic(
    traj: Trajectory,
    cert: Certificate,
    field: TimeVaryingField,
    convergence_tol: float = 1e-6,
) -> tuple[bool, float]:
    """Tail behaviour of g(t) = grad V(x(t)) . f(t, x(t)) along a trajectory.

    Returns (integral_converged, tail_sup): the running integral's oscillation
    over the last quarter of the horizon compared against ``convergence_tol``,
    and the sup of |g| over the same window.  Supports the expectation that
    tail_sup shrinks as the horizon grows.
    """
    g = np.array([float(np.dot(cert.grad(x), f)) for x, f in zip(traj.xs, traj.fs)])
    ts = traj.ts
    increments = 0.5 * (g[1:] + g[:-1]) * np.diff(ts)
    running = np.concatenate(([0.0], np.cumsum(increments)))
    t_cut = ts[0] + 0.75 * (ts[-1] - ts[0])
    window = ts >= t_cut
    if not np.any(window):
        window = np.ones_like(ts, dtype=bool)
    osc = float(running[window].max() - running[window].min())
    tail_sup = float(np.max(np.abs(g[window])))
    return osc < convergence_tol, tail_sup


@dataclass(frozen=True)
class StabilityVerdict:
    """Horizon-qualified outcome of a stability or attractivity probe."""

    status: str
    epsilon_delta_table: tuple[tuple[float, Optional[float]], ...] = ()
    escape_witness: Optional[dict] = None
    horizon: float = 0.0
    detail: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        if self.status == UNSTABLE and self.escape_witness is None:
            raise ValueError("unstable verdicts must carry an escape witness")
        for eps, delta in self.epsilon_delta_table:
            if delta is not None and delta > eps * (1.0 + 1e-12):
                raise ValueError("epsilon-delta table entries must satisfy delta <= eps")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "epsilon_delta_table": [[eps, delta] for eps, delta in self.epsilon_delta_table],
            "escape_witness": self.escape_witness,
            "horizon": self.horizon,
            "detail": self.detail,
        }


def _delta_grid(top: float, resolution: float, extra: Sequence[float]) -> list[float]:
    values = {round(float(e), 15) for e in extra if resolution <= e <= top * (1.0 + 1e-12)}
    d = top
    while d >= resolution * (1.0 - 1e-12):
        values.add(round(d, 15))
        d *= _DELTA_RATIO
    return sorted(values, reverse=True)


def _restricted_starts(sample: SetSample, radius: float, cap: int) -> list[np.ndarray]:
    pts = [p for p in sample.points if float(np.linalg.norm(p)) <= radius * (1.0 + 1e-12)]
    if len(pts) > cap:
        stride = len(pts) / cap
        pts = [pts[int(i * stride)] for i in range(cap)]
    return pts


class _TubeViolation(Exception):
    pass


def _check_tube(traj: Trajectory, membership, tube_tol: float) -> None:
    worst = max(abs(float(membership(x))) for x in traj.xs)
    if worst > tube_tol:
        raise _TubeViolation(f"trajectory drifted out of the set tube (residual {worst:.3g})")


def uniform_stability_probe(
    field: TimeVaryingField,
    eps_list: Sequence[float],
    t0_grid: Sequence[float] = (0.0,),
    delta_resolution: float = 0.05,
    horizon: float = 100.0,
    *,
    n_directions: int = 16,
    seed: int = 0,
    cfg: Optional[IntegratorConfig] = None,
    restrict_to: Optional[SetSample] = None,
    tube_tol: Optional[float] = None,
    suspicion_fraction: float = 0.9,
) -> StabilityVerdict:
    """Search, for each epsilon, the largest delta whose sphere starts stay
    inside the epsilon ball over the horizon.

    The delta grid is geometric (ratio 2^-1/4) from the largest epsilon down
    to ``delta_resolution``, augmented with the epsilon values themselves, and
    shared across epsilons so the reported table is monotone.  Unstable needs
    a decisive escape; when every observed escape happens within the last
    (1 - suspicion_fraction) of the horizon the verdict is inconclusive
    (horizon-limited).  With ``restrict_to`` the starts are the sampled set
    points inside each delta ball and trajectories are tube-checked.
    """
    eps_values = sorted({float(e) for e in eps_list})
    if not eps_values:
        raise ValueError("eps_list must be nonempty")
    if restrict_to is None and eps_values[-1] > field.domain_radius:
        raise ValueError("epsilon values must lie within the domain radius")
    deltas = _delta_grid(eps_values[-1], delta_resolution, eps_values)
    run_cfg = replace(cfg or IntegratorConfig(), horizon=horizon)
    # Restricted starts sit slightly off the true set, so a hairline crossing
    # is sampling error, not instability: escapes are detected a relative
    # notch above each epsilon in that mode.
    escape_slack = 0.0 if restrict_to is None else 1e-3
    radii = tuple(e * (1.0 + escape_slack) for e in eps_values)
    radius_of = dict(zip(radii, eps_values))
    membership = restrict_to.membership if restrict_to is not None else None
    if restrict_to is not None and membership is None:
        membership = lambda x, _s=restrict_to: set_distance(x, _s)  # noqa: E731
    if restrict_to is not None and tube_tol is None:
        tube_tol = max(10.0 * restrict_to.tolerance, 1e-8)

    cache: dict[float, list[dict]] = {}
    dropped = 0

    def runs_for(delta: float) -> list[dict]:
        nonlocal dropped
        if delta in cache:
            return cache[delta]
        if restrict_to is None:
            starts = list(sphere_points(n_directions, field.dim, delta, seed))
        else:
            starts = _restricted_starts(restrict_to, delta, 2 * n_directions)
        records = []
        for t0 in t0_grid:
            for x0 in starts:
                traj = integrate(field, float(t0), x0, run_cfg, event_radii=radii)
                if membership is not None:
                    try:
                        _check_tube(traj, membership, tube_tol)
                    except _TubeViolation as exc:
                        warnings.warn(f"restricted start {x0.tolist()} dropped: {exc}", stacklevel=2)
                        dropped += 1
                        continue
                first_exit = {}
                for ev in traj.events:
                    eps = radius_of[ev.radius]
                    if ev.direction > 0 and eps not in first_exit:
                        first_exit[eps] = float(ev.t)
                records.append({"t0": float(t0), "x0": x0, "first_exit": first_exit})
        cache[delta] = records
        return records

    table = []
    failed_decisive = []
    failed_suspicious = []
    for eps in eps_values:
        found = None
        escapes_here = []
        for delta in (d for d in deltas if d <= eps * (1.0 + 1e-12)):
            records = runs_for(delta)
            escapes = [
                (rec["first_exit"][eps], rec) for rec in records if eps in rec["first_exit"]
            ]
            if not escapes:
                found = delta
                break
            escapes_here.append((delta, escapes))
        table.append((eps, found))
        if found is None and escapes_here:
            decisive = any(
                t_exit - rec["t0"] <= suspicion_fraction * horizon
                for _, escapes in escapes_here
                for t_exit, rec in escapes
            )
            (failed_decisive if decisive else failed_suspicious).append((eps, escapes_here))

    detail = {"delta_grid": deltas, "dropped_runs": dropped, "t0_grid": [float(t) for t in t0_grid]}
    if failed_decisive:
        eps, escapes_here = failed_decisive[0]
        _, escapes = escapes_here[-1]  # smallest tested delta is the decisive failure
        t_exit, rec = min(escapes, key=lambda item: item[0])
        witness = {
            "t0": rec["t0"],
            "x0": rec["x0"].tolist(),
            "time": t_exit,
            "radius": eps,
        }
        return StabilityVerdict(
            status=UNSTABLE,
            epsilon_delta_table=tuple(table),
            escape_witness=witness,
            horizon=horizon,
            detail=detail,
        )
    if failed_suspicious:
        detail["reason"] = "all observed escapes are close to the horizon"
        return StabilityVerdict(
            status=INCONCLUSIVE_STATUS,
            epsilon_delta_table=tuple(table),
            horizon=horizon,
            detail=detail,
        )
    return StabilityVerdict(
        status=STABLE, epsilon_delta_table=tuple(table), horizon=horizon, detail=detail
    )


def _windowed_max_norms(traj: Trajectory, windows: int) -> np.ndarray:
    norms = traj.norms()
    edges = traj.ts[0] + (traj.ts[-1] - traj.ts[0]) * np.arange(1, windows + 1) / windows
    out = []
    lo = 0
    for edge in edges:
        hi = int(np.searchsorted(traj.ts, edge, side="right"))
        hi = max(hi, lo + 1)
        out.append(float(norms[lo:hi].max()))
        lo = hi - 1  # windows share their boundary knot
    return np.array(out)


def _eventually_decreasing(window_maxima: np.ndarray, floor: float) -> bool:
    half = len(window_maxima) // 2
    head = float(window_maxima[:half].max())
    tail = float(window_maxima[half:].max())
    return tail < floor or tail <= head * (1.0 - 1e-9)


def attractivity_probe(
    field: TimeVaryingField,
    ball_radius: float,
    t0_grid: Sequence[float] = (0.0,),
    horizon: float = 1_000.0,
    target_tol: float = 0.05,
    *,
    n_starts: int = 16,
    seed: int = 0,
    cfg: Optional[IntegratorConfig] = None,
    restrict_to: Optional[SetSample] = None,
    tube_tol: Optional[float] = None,
    windows: int = 8,
) -> StabilityVerdict:
    """All sampled starts in the ball must reach ``target_tol`` by the horizon
    with eventually-decreasing windowed max norms; otherwise non-attractive
    with the worst witness."""
    run_cfg = replace(cfg or IntegratorConfig(), horizon=horizon)
    membership = restrict_to.membership if restrict_to is not None else None
    if restrict_to is not None and membership is None:
        membership = lambda x, _s=restrict_to: set_distance(x, _s)  # noqa: E731
    if restrict_to is not None and tube_tol is None:
        tube_tol = max(10.0 * restrict_to.tolerance, 1e-8)
    if restrict_to is None:
        starts = list(ball_points(n_starts, field.dim, ball_radius, seed))
    else:
        starts = _restricted_starts(restrict_to, ball_radius, 2 * n_starts)

    worst = None  # (final_norm, witness)
    finals = []
    dropped = 0
    for t0 in t0_grid:
        for x0 in starts:
            traj = integrate(field, float(t0), x0, run_cfg)
            if membership is not None:
                try:
                    _check_tube(traj, membership, tube_tol)
                except _TubeViolation as exc:
                    warnings.warn(f"restricted start {x0.tolist()} dropped: {exc}", stacklevel=2)
                    dropped += 1
                    continue
            if traj.terminated != HORIZON_REACHED:
                witness = {
                    "t0": float(t0),
                    "x0": x0.tolist(),
                    "time": traj.final_time,
                    "radius": float(np.linalg.norm(traj.final_state)),
                    "reason": traj.terminated,
                }
                return StabilityVerdict(
                    status=NON_ATTRACTIVE,
                    escape_witness=witness,
                    horizon=horizon,
                    detail={"dropped_runs": dropped},
                )
            final_norm = float(np.linalg.norm(traj.final_state))
            finals.append(final_norm)
            maxima = _windowed_max_norms(traj, windows)
            converged = final_norm < target_tol and _eventually_decreasing(maxima, target_tol)
            if not converged and (worst is None or final_norm > worst[0]):
                worst = (
                    final_norm,
                    {
                        "t0": float(t0),
                        "x0": x0.tolist(),
                        "time": traj.final_time,
                        "radius": final_norm,
                        "reason": "did not converge",
                    },
                )
    detail = {
        "target_tol": target_tol,
        "max_final_norm": max(finals) if finals else None,
        "dropped_runs": dropped,
        "n_runs": len(finals),
    }
    if not finals:
        detail["reason"] = "no admissible starts"
        return StabilityVerdict(status=INCONCLUSIVE_STATUS, horizon=horizon, detail=detail)
    if worst is not None:
        return StabilityVerdict(
            status=NON_ATTRACTIVE, escape_witness=worst[1], horizon=horizon, detail=detail
        )
    return StabilityVerdict(status=ATTRACTIVE, horizon=horizon, detail=detail)


def invariance_principle_check(
    field: TimeVaryingField,
    cert: Certificate,
    n_sample: SetSample,
    initial_points: Sequence[Sequence[float]],
    t0_grid: Sequence[float] = (0.0,),
    horizon: float = 200.0,
    *,
    cfg: Optional[IntegratorConfig] = None,
    windows: int = 8,
    tail_fraction: float = 0.1,
) -> Verdict:
    """Distance decay d(x(t), N) -> 0 for bounded trajectories.

    Pass iff, for every start whose trajectory reaches the horizon inside the
    domain, the median distance to the sampled invariant set over the last
    ``tail_fraction`` of the run is below 10 x (cloud resolution + integration
    tolerance) and the windowed medians over the second half are
    non-increasing up to 10% of that bound.  Trajectories that leave the
    domain fall outside the bounded-trajectory hypothesis; they are excluded
    from the pass decision and reported separately with their own distance
    tails (their distance can stay bounded even when the state does not).
    """
    if n_sample.count == 0:
        raise EmptySampleError("invariance check needs a nonempty invariant-set sample")
    run_cfg = replace(cfg or IntegratorConfig(), horizon=horizon)
    base_tol = 10.0 * (n_sample.resolution() + run_cfg.rel_tol + run_cfg.abs_tol)
    per_start = []
    outside = []
    worst = None
    for t0 in t0_grid:
        for raw in initial_points:
            x0 = np.asarray(raw, dtype=float)
            traj = integrate(field, float(t0), x0, run_cfg)
            dists = np.array([set_distance(x, n_sample) for x in traj.xs])
            t_cut = traj.ts[0] + (1.0 - tail_fraction) * (traj.ts[-1] - traj.ts[0])
            tail = dists[traj.ts >= t_cut]
            tail_median = float(np.median(tail))
            v_values = np.array([float(cert.value(x)) for x in traj.xs])
            record = {
                "t0": float(t0),
                "x0": x0.tolist(),
                "tail_median_distance": tail_median,
                "bound": base_tol,
                "value_monotone": bool(np.all(np.diff(v_values) <= 1e-9)),
            }
            if traj.terminated != HORIZON_REACHED:
                record["terminated"] = traj.terminated
                outside.append(record)
                continue
            half_cut = traj.ts[0] + 0.5 * (traj.ts[-1] - traj.ts[0])
            mask = traj.ts >= half_cut
            med = _windowed_medians(traj.ts[mask], dists[mask], windows)
            monotone = bool(np.all(np.diff(med) <= 0.1 * base_tol))
            ok = tail_median <= base_tol and monotone
            record["windowed_medians_monotone"] = monotone
            record["passed"] = ok
            per_start.append(record)
            if not ok and (worst is None or tail_median > worst["tail_median_distance"]):
                worst = record
    detail = {
        "bound": base_tol,
        "starts": per_start,
        "outside_bounded_hypothesis": outside,
        "horizon": horizon,
    }
    if not per_start:
        return Verdict(
            check="invariance_principle",
            status=INCONCLUSIVE,
            tolerance=base_tol,
            samples=len(outside),
            detail=detail,
        )
    if worst is not None:
        return Verdict(
            check="invariance_principle",
            status=FAIL,
            witness=worst,
            tolerance=base_tol,
            samples=len(per_start),
            detail=detail,
        )
    return Verdict(
        check="invariance_principle",
        status=PASS,
        tolerance=base_tol,
        samples=len(per_start),
        detail=detail,
    )


def _windowed_medians(ts: np.ndarray, values: np.ndarray, windows: int) -> np.ndarray:
    edges = ts[0] + (ts[-1] - ts[0]) * np.arange(1, windows + 1) / windows
    out = []
    lo = 0
    for edge in edges:
        hi = int(np.searchsorted(ts, edge, side="right"))
        hi = max(hi, lo + 1)
        out.append(float(np.median(values[lo:hi])))
        lo = hi - 1
    return np.array(out)
