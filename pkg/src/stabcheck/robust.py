"""Sector-bounded perturbation families, closed-loop assembly, residuals of
the feedback dissipation identity, and the sampled robustness verdict.

Perturbation classes are infinite-dimensional; the toolkit draws finite,
seeded, deterministic families that satisfy the sector bound strictly and
probes the closed loop member by member.  Robustness over a class is sampled
falsification, never a certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, PerturbationGenerationError
from .integrators import IntegratorConfig, integrate
from .invariance import (
    ATTRACTIVE,
    STABLE,
    StabilityVerdict,
    attractivity_probe,
    uniform_stability_probe,
)
from .lyapunov import Certificate
from .sampling import ball_points
from .systems import AffineControlSystem, TimeVaryingField
from .verdicts import FAIL, PASS, Verdict

TIME_INVARIANT = "time_invariant"
TIME_VARYING = "time_varying"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PerturbationSpec:
    """Parameters of a sector-bounded perturbation family.

    ``family`` selects static perturbations bounded by ``gain_a`` times the
    feedback magnitude, or time-varying ones bounded by
    ``gain_a - margin_eps`` times it.
    """

    family: str
    gain_a: float
    margin_eps: float = 0.0
    family_seed: int = 0
    family_size: int = 8

    def __post_init__(self):
        if self.family not in (TIME_INVARIANT, TIME_VARYING):
            raise ConfigError(f"unknown perturbation family {self.family!r}")
        if not self.gain_a > 0.0:
            raise ConfigError("gain_a must be strictly positive")
        if self.family == TIME_VARYING and not 0.0 < self.margin_eps < self.gain_a:
            raise ConfigError("time-varying families need 0 < margin_eps < gain_a")
        if self.family_size < 1:
            raise ConfigError("family_size must be at least 1")

    @property
    def sector_bound(self) -> float:
        if self.family == TIME_INVARIANT:
            return self.gain_a
        return self.gain_a - self.margin_eps


@dataclass(frozen=True)
class Perturbation:
    """One concrete output perturbation p(y, t) with p(0, t) = 0."""

    pid: str
    family: str
    func: Callable[[float, float], float]
    description: str
    time_varying: bool

    def __call__(self, y: float, t: float = 0.0) -> float:
        return self.func(y, t)


@dataclass(frozen=True)
class ClosedLoop:
    """Closed loop x' = f(x) + g(x) (phi(h(x)) + p(h(x), t))."""

    base: AffineControlSystem
    feedback: Callable[[float], float]
    perturbation: Optional[Perturbation] = None

    def field(self) -> TimeVaryingField:
        base, feedback, pert = self.base, self.feedback, self.perturbation

        def rhs(t, x):
            y = float(base.output(x))
            u = float(feedback(y))
            if pert is not None:
                u += float(pert.func(y, t))
            return np.asarray(base.drift.rhs(t, x), dtype=float) + np.asarray(
                base.input_field(x), dtype=float
            ) * u

        autonomous = base.drift.autonomous and (pert is None or not pert.time_varying)
        name = f"{base.name or 'closed-loop'}"
        if pert is not None:
            name += f"+{pert.pid}"
        return TimeVaryingField(
            dim=base.dim,
            rhs=rhs,
            domain_radius=base.domain_radius,
            autonomous=autonomous,
            name=name,
        )


def validate_sector_bound(
    pert: Callable[[float, float], float],
    feedback: Callable[[float], float],
    bound: float,
    y_range: float = 8.0,
    samples: int = 10_000,
    t_range: tuple[float, float] = (0.0, 40.0),
    margin: float = 1e-9,
    time_varying: bool = True,
) -> tuple[bool, Optional[dict]]:
    """Dense-sample check of the strict sector inequality |p| < bound * |phi|.

    Points where the feedback vanishes exactly are skipped (the inequality is
    vacuous only at y = 0 for the admissible feedbacks).  The margin is
    relative to the bound envelope.
    """
    if time_varying:
        n_y = max(int(math.isqrt(samples)), 2)
        n_t = max(samples // n_y, 1)
    else:
        n_y, n_t = samples, 1
    ys = np.linspace(-y_range, y_range, n_y)
    ts = np.linspace(t_range[0], t_range[1], n_t)
    for y in ys:
        envelope = bound * abs(float(feedback(float(y))))
        if envelope == 0.0:
            if y != 0.0 and any(abs(float(pert(float(y), float(t)))) > 0.0 for t in ts[:3]):
                return False, {"y": float(y), "reason": "perturbation nonzero where feedback is"}
            continue
        for t in ts:
            p_val = abs(float(pert(float(y), float(t))))
            if p_val >= envelope * (1.0 - margin):
                return False, {
                    "y": float(y),
                    "t": float(t),
                    "p": p_val,
                    "envelope": envelope,
                }
    return True, None


_SHAPES = (
    ("flat", lambda y, k: 1.0),
    ("cos", lambda y, k: math.cos(k * y)),
    ("tanh", lambda y, k: math.tanh(k * y)),
    ("sat", lambda y, k: y * k / (1.0 + abs(k * y))),
)
_LEVELS = (0.9, 0.75, 0.5, 0.9375)
_MODULATIONS = (
    ("coswt", lambda t, w: math.cos(w * t)),
    ("decay", lambda t, w: 1.0 / math.sqrt(1.0 + w * t)),
    ("square", lambda t, w: math.tanh(3.0 * math.sin(w * t)) / math.tanh(3.0)),
)


def sample_perturbations(
    spec: PerturbationSpec,
    feedback: Callable[[float], float],
    y_range: float = 8.0,
    validation_samples: int = 10_000,
) -> list[Perturbation]:
    """Deterministic family of in-class perturbations; the first member is
    always the zero perturbation.

    Static members are level * bound * shape(y) * phi(y) with |level| <= 0.9375
    and |shape| <= 1, so the strict sector inequality holds wherever phi does
    not vanish.  Time-varying members add a bounded uniformly-continuous
    modulation.  Every generated member is re-validated by dense sampling; a
    validation failure is an internal bug, not a user error.
    """
    if abs(float(feedback(0.0))) > 0.0:
        raise ConfigError("feedback must vanish at zero")
    bound = spec.sector_bound
    members = [
        Perturbation(
            pid=f"{spec.family}-000-zero",
            family=spec.family,
            func=lambda y, t: 0.0,
            description="zero perturbation",
            time_varying=False,
        )
    ]
    idx = 1
    combo = 0
    while len(members) < spec.family_size:
        level = _LEVELS[combo % len(_LEVELS)]
        shape_name, shape = _SHAPES[(combo + (0 if spec.family == TIME_INVARIANT else 0)) % len(_SHAPES)]
        k = 1.0 + 4.0 * (((combo // len(_SHAPES)) * _GOLDEN + spec.family_seed * _GOLDEN) % 1.0)
        if combo == 0:
            # anchor members: cos shape at level 0.9 for static families,
            # flat shape with a cos(3t) modulation for time-varying ones
            if spec.family == TIME_INVARIANT:
                shape_name, shape, k, level = "cos", _SHAPES[1][1], 1.0, 0.9
            else:
                shape_name, shape, k, level = "flat", _SHAPES[0][1], 1.0, 0.9375
        if spec.family == TIME_INVARIANT:
            def func(y, t, _s=shape, _k=k, _c=level * bound, _phi=feedback):
                return _c * _s(y, _k) * float(_phi(y))

            desc = f"{level:g}*bound*{shape_name}(k={k:.3g})*phi"
            time_varying = False
        else:
            mod_name, mod = _MODULATIONS[combo % len(_MODULATIONS)]
            w = 3.0 if combo == 0 else 0.5 + 4.0 * ((combo * _GOLDEN + spec.family_seed * 0.37) % 1.0)

            def func(y, t, _s=shape, _k=k, _c=level * bound, _m=mod, _w=w, _phi=feedback):
                return _c * _s(y, _k) * _m(t, _w) * float(_phi(y))

            desc = f"{level:g}*bound*{shape_name}(k={k:.3g})*{mod_name}(w={w:.3g})*phi"
            time_varying = True
        members.append(
            Perturbation(
                pid=f"{spec.family}-{idx:03d}-{shape_name}",
                family=spec.family,
                func=func,
                description=desc,
                time_varying=time_varying,
            )
        )
        idx += 1
        combo += 1
    for member in members:
        ok, witness = validate_sector_bound(
            member.func,
            feedback,
            bound,
            y_range=y_range,
            samples=validation_samples,
            time_varying=member.time_varying,
        )
        if not ok:
            raise PerturbationGenerationError(
                f"generated member {member.pid} violates its sector bound: {witness}"
            )
    return members


def hamilton_jacobi_residual(
    cert: Certificate,
    system: AffineControlSystem,
    feedback: Callable[[float], float],
    gain_a: float,
    x: Sequence[float],
) -> float:
    """Residual of grad V.f + (grad V.g / 2 + phi(h))^2 - (1 - a^2) phi(h)^2.

    Zero on the domain means V solves the identity; nonpositive everywhere
    means V satisfies the inequality form.  Either certifies the feedback for
    the sector classes of gain a.
    """
    x = np.asarray(x, dtype=float)
    g_v = cert.grad(x)
    drift = np.asarray(system.drift.eval(0.0, x), dtype=float)
    g_in = np.asarray(system.input_field(x), dtype=float)
    phi_h = float(feedback(float(system.output(x))))
    coupling = 0.5 * float(np.dot(g_v, g_in)) + phi_h
    return float(np.dot(g_v, drift)) + coupling * coupling - (1.0 - gain_a * gain_a) * phi_h * phi_h


def derived_w_bounds(
    feedback: Callable[[float], float],
    output: Callable[[np.ndarray], float],
    gain_a: float,
    margin_eps: float,
    pert: Optional[Callable[[float, float], float]] = None,
):
    """The two decrease bounds implied by the sector classes.

    ``w_static`` is p(h(x))^2 - a^2 phi(h(x))^2 and needs a time-invariant
    perturbation; ``w_margin`` is -(2 a eps - eps^2) phi(h(x))^2 and covers
    the time-varying class with margin eps.  Both are nonpositive on the
    domain by the sector bounds.
    """
    a2 = gain_a * gain_a
    coef = 2.0 * gain_a * margin_eps - margin_eps * margin_eps

    def w_static(x):
        y = float(output(np.asarray(x, dtype=float)))
        phi_h = float(feedback(y))
        p_h = float(pert(y, 0.0)) if pert is not None else 0.0
        return p_h * p_h - a2 * phi_h * phi_h

    def w_margin(x):
        y = float(output(np.asarray(x, dtype=float)))
        phi_h = float(feedback(y))
        return -coef * phi_h * phi_h

    return w_static, w_margin


def _h2_slack_along(traj, cert: Certificate, loop_field: TimeVaryingField, w_bound) -> float:
    worst = -math.inf
    for t, x, f in zip(traj.ts, traj.xs, traj.fs):
        dv = float(np.dot(cert.grad(x), f))
        worst = max(worst, dv - float(w_bound(x)))
    return worst


def robust_verdict(
    system: AffineControlSystem,
    feedback: Callable[[float], float],
    cert: Certificate,
    spec: PerturbationSpec,
    ball_radius: float = 0.5,
    t0_grid: Sequence[float] = (0.0,),
    horizon: float = 1e4,
    tol: float = 0.05,
    *,
    eps_list: Optional[Sequence[float]] = None,
    delta_resolution: float = 0.05,
    stability_horizon: float = 50.0,
    n_starts: int = 12,
    seed: int = 0,
    cfg: Optional[IntegratorConfig] = None,
    extra_perturbations: Sequence[Perturbation] = (),
    y_range: float = 8.0,
) -> Verdict:
    """Per-member closed-loop stability and attractivity over a sampled family.

    Every member (generated plus injected extras) is re-validated against its
    class's sector bound; out-of-class members are excluded and reported.
    Pass iff all in-class members yield stable and attractive closed loops.
    Each record carries the worst slack of the decrease chain
    dV/dt <= W(x) along the attractivity trajectories, with W the bound
    matching the member's class.
    """
    if eps_list is None:
        eps_list = (0.5 * ball_radius, ball_radius)
    members = sample_perturbations(spec, feedback, y_range=y_range)
    members = list(members) + list(extra_perturbations)
    records = []
    all_ok = True
    first_failure = None
    for member in members:
        bound = spec.sector_bound
        ok, witness = validate_sector_bound(
            member.func, feedback, bound, y_range=y_range, time_varying=member.time_varying
        )
        record = {
            "perturbation_id": member.pid,
            "class": member.family,
            "description": member.description,
            "sector_check": "pass" if ok else "out_of_class",
        }
        if not ok:
            record["sector_witness"] = witness
            record["excluded"] = True
            records.append(record)
            continue
        loop = ClosedLoop(base=system, feedback=feedback, perturbation=member)
        loop_field = loop.field()
        loop_t0 = tuple(t0_grid) if member.time_varying else (float(t0_grid[0]),)
        stability = uniform_stability_probe(
            loop_field,
            eps_list=eps_list,
            t0_grid=loop_t0,
            delta_resolution=delta_resolution,
            horizon=stability_horizon,
            n_directions=n_starts,
            seed=seed,
            cfg=cfg,
        )
        attractivity = attractivity_probe(
            loop_field,
            ball_radius=ball_radius,
            t0_grid=loop_t0,
            horizon=horizon,
            target_tol=tol,
            n_starts=n_starts,
            seed=seed,
            cfg=cfg,
        )
        w_static, w_margin = derived_w_bounds(
            feedback, system.output, spec.gain_a, spec.margin_eps, pert=member.func
        )
        w_bound = w_static if not member.time_varying else w_margin
        chain_cfg = replace(cfg or IntegratorConfig(), horizon=min(horizon, 100.0))
        slack = -math.inf
        for x0 in ball_points(max(4, n_starts // 2), system.dim, ball_radius, seed + 5):
            traj = integrate(loop_field, float(loop_t0[0]), x0, chain_cfg)
            slack = max(slack, _h2_slack_along(traj, cert, loop_field, w_bound))
        record["stability"] = stability.to_dict()
        record["attractivity"] = attractivity.to_dict()
        record["worst_h2_slack"] = slack
        record["h2_chain_held"] = bool(slack <= 1e-8)
        member_ok = stability.status == STABLE and attractivity.status == ATTRACTIVE
        record["asymptotically_stable"] = member_ok
        records.append(record)
        if not member_ok and first_failure is None:
            first_failure = record
        all_ok = all_ok and member_ok
    detail = {
        "members": records,
        "family": spec.family,
        "gain_a": spec.gain_a,
        "margin_eps": spec.margin_eps,
        "horizon": horizon,
    }
    if all_ok:
        return Verdict(
            check="robust_stabilization",
            status=PASS,
            tolerance=tol,
            samples=len(records),
            detail=detail,
        )
    return Verdict(
        check="robust_stabilization",
        status=FAIL,
        witness={
            "perturbation_id": first_failure["perturbation_id"],
            "stability": first_failure["stability"]["status"],
            "attractivity": first_failure["attractivity"]["status"],
        },
        tolerance=tol,
        samples=len(records),
        detail=detail,
    )
