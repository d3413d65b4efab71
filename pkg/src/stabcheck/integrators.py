"""Adaptive explicit Runge-Kutta integration with dense output and events.

The stepper is an embedded 5(4) pair with PI step-size control.  Knots store
(t, x, f(t, x)), so dense output is piecewise cubic Hermite and reproduces
knot values exactly.  Crossings of origin-centered spheres are located by
bisection on the interpolant to 1e-10 in t.

Termination is one of three normal outcomes: the horizon was reached, the
trajectory left the domain ball, or the step size underflowed (which is how
finite-time blow-up manifests).  Leaving the domain or blowing up is not an
error; several of the bundled systems do both.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, DomainError, FieldEvaluationError
from .sampling import ball_points, halton, interval_points, sphere_points
from .systems import TimeVaryingField

HORIZON_REACHED = "horizon_reached"
LEFT_DOMAIN = "left_domain"
STEP_UNDERFLOW = "step_underflow"

# Dormand-Prince 5(4) tableau (FSAL: stage 7 is the next step's stage 1).
_C2, _C3, _C4, _C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

_EVENT_TIME_TOL = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    horizon: float = 10.0

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise ConfigError("tolerances must be strictly positive")
        if self.rel_tol < 1e-14:
            raise ConfigError("rel_tol below 1e-14 is not resolvable in double precision")
        if not (self.max_step > 0.0 and self.horizon > 0.0):
            raise ConfigError("max_step and horizon must be strictly positive")


@dataclass(frozen=True)
class SphereCrossing:
    t: float
    radius: float
    direction: int  # +1 outward, -1 inward


def _hermite(t, t0, t1, x0, x1, f0, f1):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    a = s2 * (3.0 - 2.0 * s)
    return (1.0 - a) * x0 + a * x1 + (s * (1.0 - s) * (1.0 - s) * h) * f0 + (s2 * (s - 1.0) * h) * f1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense-output numerical solution with sphere-crossing event records."""

    t0: float
    x0: np.ndarray
    ts: np.ndarray
    xs: np.ndarray
    fs: np.ndarray
    events: tuple[SphereCrossing, ...]
    terminated: str
    rel_tol: float
    abs_tol: float

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.ts) - 1

    @property
    def final_time(self) -> float:
        return float(self.ts[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.xs[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.xs, axis=1)

    def state(self, t: float) -> np.ndarray:
        """Interpolated state; exact at knots, cubic Hermite between them."""
        ts = self.ts
        if not (ts[0] - 1e-12 <= t <= ts[-1] + 1e-12):
            raise DomainError(f"time {t} outside trajectory range [{ts[0]}, {ts[-1]}]")
        k = int(np.searchsorted(ts, t, side="right")) - 1
        k = min(max(k, 0), len(ts) - 2)
        if t == ts[k]:
            return self.xs[k].copy()
        if t == ts[k + 1]:
            return self.xs[k + 1].copy()
        return _hermite(t, ts[k], ts[k + 1], self.xs[k], self.xs[k + 1], self.fs[k], self.fs[k + 1])

    def sample(self, times: Sequence[float]) -> np.ndarray:
        return np.array([self.state(t) for t in times])

    def error_scale(self) -> float:
        """Conservative global error scale: per-step tolerance times step count."""
        peak = float(np.max(np.linalg.norm(self.xs, axis=1))) if len(self.ts) else 0.0
        return (self.rel_tol * peak + self.abs_tol) * max(self.n_steps, 1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.dim)])
            for t, x in zip(self.ts, self.xs):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x])

    def write_events_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "radius", "direction"])
            for ev in self.events:
                writer.writerow([repr(ev.t), repr(ev.radius), ev.direction])


def _rms(v: np.ndarray) -> float:
    return float(math.sqrt(float(np.mean(v * v))))


def _checked_eval(field: TimeVaryingField, t: float, x: np.ndarray, radius: float):
    """Evaluate the field; None signals a non-finite value outside the ball."""
    fx = np.asarray(field.eval(t, x), dtype=float)
    if not np.all(np.isfinite(fx)):
        if float(np.linalg.norm(x)) <= radius * (1.0 + 1e-9):
            raise FieldEvaluationError(t, x)
        return None
    return fx


def _initial_step(field, t0, x0, f0, cfg, remaining, radius):
    sc = cfg.abs_tol + cfg.rel_tol * np.abs(x0)
    d0 = _rms(x0 / sc)
    d1 = _rms(f0 / sc)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, remaining, cfg.max_step)
    f1 = _checked_eval(field, t0 + h0, x0 + h0 * f0, radius)
    if f1 is None:
        return max(min(h0 * 1e-3, remaining), 1e-12)
    d2 = _rms((f1 - f0) / sc) / h0
    m = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if m <= 1e-15 else (0.01 / m) ** 0.2
    return min(100.0 * h0, h1, remaining, cfg.max_step)


def _bisect_norm_crossing(t_lo, t_hi, interp, target):
    g_lo = float(np.linalg.norm(interp(t_lo))) - target
    while t_hi - t_lo > _EVENT_TIME_TOL:
        t_mid = 0.5 * (t_lo + t_hi)
        g_mid = float(np.linalg.norm(interp(t_mid))) - target
        if (g_mid > 0.0) == (g_lo > 0.0):
            t_lo, g_lo = t_mid, g_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)


def integrate(
    field: TimeVaryingField,
    t0: float,
    x0: Sequence[float],
    cfg: Optional[IntegratorConfig] = None,
    event_radii: Sequence[float] = (),
) -> Trajectory:
    """Integrate x' = f(t, x) from (t0, x0) over cfg.horizon.

    Crossings of each origin-centered sphere in ``event_radii`` are recorded
    with the crossing time located to 1e-10 by bisection on the interpolant.
    Crossings that enter and leave a sphere within a single accepted step are
    not detected; at the step sizes the error control produces this requires
    a tangency at the resolution of the step.
    """
    cfg = cfg if cfg is not None else IntegratorConfig()
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or x.size != field.dim:
        raise ConfigError(f"initial state must be a vector of length {field.dim}")
    radius = field.domain_radius
    if float(np.linalg.norm(x)) > radius * (1.0 + 1e-12):
        raise DomainError(
            f"initial state norm {float(np.linalg.norm(x)):.6g} exceeds domain radius {radius:.6g}"
        )
    radii = tuple(float(r) for r in event_radii)
    if any(r <= 0.0 for r in radii):
        raise ConfigError("event radii must be strictly positive")

    t = float(t0)
    t_end = t + cfg.horizon
    f = _checked_eval(field, t, x, radius)
    if f is None:
        raise FieldEvaluationError(t, x)

    ts = [t]
    xs = [x.copy()]
    fs = [f.copy()]
    events: list[SphereCrossing] = []
    terminated = HORIZON_REACHED

    safety, fac_min, fac_max, beta = 0.9, 0.2, 10.0, 0.04
    expo = 0.2 - beta * 0.75
    fac_old = 1e-4
    rejected = False
    h = _initial_step(field, t, x, f, cfg, t_end - t, radius)

    while True:
        remaining = t_end - t
        if remaining <= 1e-12 * max(1.0, abs(t_end)):
            terminated = HORIZON_REACHED
            break
        h = min(h, cfg.max_step, remaining)
        if h < 1e-14 * max(1.0, abs(t)):
            terminated = STEP_UNDERFLOW
            break

        k1 = f
        try:
            y = x + (h * _A21) * k1
            k2 = _checked_eval(field, t + _C2 * h, y, radius)
            if k2 is None:
                raise _Shrink
            y = x + h * (_A31 * k1 + _A32 * k2)
            k3 = _checked_eval(field, t + _C3 * h, y, radius)
            if k3 is None:
                raise _Shrink
            y = x + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
            k4 = _checked_eval(field, t + _C4 * h, y, radius)
            if k4 is None:
                raise _Shrink
            y = x + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
            k5 = _checked_eval(field, t + _C5 * h, y, radius)
            if k5 is None:
                raise _Shrink
            y = x + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
            k6 = _checked_eval(field, t + h, y, radius)
            if k6 is None:
                raise _Shrink
            x_new = x + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            if not np.all(np.isfinite(x_new)):
                raise _Shrink
            k7 = _checked_eval(field, t + h, x_new, radius)
            if k7 is None:
                raise _Shrink
        except _Shrink:
            h *= 0.5
            rejected = True
            continue

        err_vec = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err = _rms(err_vec / scale)
        if not math.isfinite(err):
            h *= 0.5
            rejected = True
            continue

        if err > 1.0:
            fac11 = err ** expo
            h = h / min(1.0 / fac_min, fac11 / safety)
            rejected = True
            continue

        # step accepted
        t_new = t_end if h == remaining else t + h
        interp = lambda tau: _hermite(tau, t, t_new, x, x_new, k1, k7)  # noqa: E731

        n_old = float(np.linalg.norm(x))
        n_new = float(np.linalg.norm(x_new))
        step_events = []
        for r in radii:
            g0, g1 = n_old - r, n_new - r
            if g0 * g1 < 0.0:
                t_ev = _bisect_norm_crossing(t, t_new, interp, r)
                step_events.append(SphereCrossing(t=t_ev, radius=r, direction=1 if g1 > g0 else -1))
        step_events.sort(key=lambda ev: ev.t)

        exited = n_new > radius
        if exited:
            t_exit = _bisect_norm_crossing(t, t_new, interp, radius)
            x_exit = interp(t_exit)
            f_exit = _checked_eval(field, t_exit, x_exit, radius)
            if f_exit is None:
                f_exit = k7
            events.extend(ev for ev in step_events if ev.t <= t_exit)
            ts.append(t_exit)
            xs.append(np.asarray(x_exit, dtype=float))
            fs.append(np.asarray(f_exit, dtype=float))
            terminated = LEFT_DOMAIN
            break

        events.extend(step_events)
        ts.append(t_new)
        xs.append(x_new.copy())
        fs.append(k7.copy())

        fac11 = max(err, 1e-16) ** expo
        fac = fac11 / fac_old ** beta
        fac = max(1.0 / fac_max, min(1.0 / fac_min, fac / safety))
        if rejected:
            fac = max(fac, 1.0)
        fac_old = max(err, 1e-4)
        t, x, f = t_new, x_new, k7
        h = h / fac
        rejected = False

    return Trajectory(
        t0=float(t0),
        x0=np.array(x0, dtype=float),
        ts=np.array(ts),
        xs=np.array(xs),
        fs=np.array(fs),
        events=tuple(events),
        terminated=terminated,
        rel_tol=cfg.rel_tol,
        abs_tol=cfg.abs_tol,
    )


class _Shrink(Exception):
    """Internal: a stage left the representable range; retry with half step."""


def sup_norm_bound(
    field: TimeVaryingField,
    radius: float,
    t_range: tuple[float, float] = (0.0, 100.0),
    samples: int = 10_000,
    seed: int = 0,
) -> float:
    """Estimated bound A with max ||f(t, x)|| <= A on the ball of given radius.

    The maximum is taken over a deterministic low-discrepancy sample (half in
    the ball, half on the bounding sphere, where polynomial fields peak) and
    inflated by 1.1.  This is an estimate, not a certified bound.
    """
    if radius > field.domain_radius * (1.0 + 1e-12):
        raise DomainError("requested radius exceeds the field's domain radius")
    n_sphere = samples // 2
    n_ball = samples - n_sphere
    pts = np.vstack(
        (
            ball_points(n_ball, field.dim, radius, seed),
            sphere_points(n_sphere, field.dim, radius, seed),
        )
    )
    times = interval_points(len(pts), t_range[0], t_range[1], seed + 1)
    best = 0.0
    for t, x in zip(times, pts):
        best = max(best, float(np.linalg.norm(field.eval(float(t), x))))
    return 1.1 * best


def flight_time_lower_bound(eps0: float, delta: float, a_bound: float) -> float:
    """Lower bound (eps0 - delta) / A on the transit time between the spheres
    of radius delta and eps0, given a speed bound A on the enclosing ball."""
    if not (eps0 > delta > 0.0):
        raise ValueError(f"need eps0 > delta > 0, got eps0={eps0}, delta={delta}")
    if not a_bound > 0.0:
        raise ValueError("the speed bound must be strictly positive")
    return (eps0 - delta) / a_bound


def estimate_lipschitz(
    field: TimeVaryingField,
    radius: Optional[float] = None,
    t_range: tuple[float, float] = (0.0, 100.0),
    samples: int = 2_000,
    seed: int = 0,
) -> float:
    """Sampled difference-quotient estimate of the Lipschitz constant in x.

    Used when a field carries no ``lipschitz_hint``; reports flag it as an
    estimate.
    """
    radius = field.domain_radius if radius is None else radius
    base = ball_points(samples, field.dim, radius * 0.98, seed)
    dirs = sphere_points(samples, field.dim, 1.0, seed + 3)
    times = interval_points(samples, t_range[0], t_range[1], seed + 4)
    step = 1e-4 * radius
    best = 0.0
    for t, x, d in zip(times, base, dirs):
        fx = field.eval(float(t), x)
        fy = field.eval(float(t), x + step * d)
        best = max(best, float(np.linalg.norm(fy - fx)) / step)
    return best
