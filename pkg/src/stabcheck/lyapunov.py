"""Candidate certificates and the numerical checks on their defining chain.

A :class:`Certificate` bundles a scalar function V, its gradient (supplied or
finite-difference), and a continuous bound W meant to dominate the derivative
of V along the flow.  The three hypothesis checks cover, in order:

* nonnegativity of V on the domain ball with V(0) = 0,
* the decrease chain  grad V . f(t, x) <= W(x) <= 0,
* time-invariance of the field on the zero set of W.

All checks are sampled and deterministic; a pass means "no violation found at
this resolution".  Witness selection is deterministic: the worst violation
wins, ties broken by lowest sample index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import CertificateError, DomainError
from .expressions import parse_state_function
from .sampling import ball_points, interval_points
from .systems import AffineControlSystem, TimeVaryingField
from .verdicts import FAIL, INCONCLUSIVE, PASS, Verdict


@dataclass(frozen=True)
class Certificate:
    """Candidate function V with gradient access and decrease bound W."""

    dim: int
    value: Callable[[np.ndarray], float]
    bound: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain_radius: float = 2.0
    name: str = ""

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            g = np.asarray(self.gradient(x), dtype=float)
        else:
            g = _central_difference(self.value, x)
        if g.shape != (self.dim,) or not np.all(np.isfinite(g)):
            raise CertificateError(f"gradient evaluation failed at x={x.tolist()}")
        return g


def _central_difference(fn, x, scale: float = 1e-6) -> np.ndarray:
    g = np.empty(x.size)
    for i in range(x.size):
        h = scale * (1.0 + abs(x[i]))
        step = np.zeros_like(x)
        step[i] = h
        g[i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return g


def certificate_from_expressions(
    value_src: str,
    bound_src: str,
    dim: int,
    domain_radius: float = 2.0,
    name: str = "",
) -> Certificate:
    """Certificate from V and W expressions; gradient by central differences."""
    v_expr = parse_state_function(value_src, dim)
    w_expr = parse_state_function(bound_src, dim)
    if v_expr.uses_time or w_expr.uses_time:
        raise CertificateError("certificate expressions may not reference t")
    return Certificate(
        dim=dim,
        value=lambda x: float(v_expr.evaluate(x)),
        bound=lambda x: float(w_expr.evaluate(x)),
        domain_radius=domain_radius,
        name=name or f"V={value_src}; W={bound_src}",
    )


def corpus_certificate(name: str, gain: float = 1.0) -> Certificate:
    """Reference certificate for a bundled example system.

    ``gain`` is the coefficient a of the example3 certificate V = a^2 x2^4 / 4
    and is ignored by the others.
    """
    if name == "example1":
        return Certificate(
            dim=2,
            value=lambda x: float(x[1] ** 2),
            bound=lambda x: float(-2.0 * x[1] ** 4),
            gradient=lambda x: np.array((0.0, 2.0 * x[1])),
            name="example1: V=y^2",
        )
    if name == "example2":
        return Certificate(
            dim=2,
            value=lambda x: float(0.5 * x[1] ** 2),
            bound=lambda x: float(-(x[1] ** 4)),
            gradient=lambda x: np.array((0.0, x[1])),
            name="example2: V=x2^2/2",
        )
    if name == "example3":
        a2 = float(gain) * float(gain)
        return Certificate(
            dim=2,
            value=lambda x: float(0.25 * a2 * x[1] ** 4),
            bound=lambda x: float(-a2 * x[1] ** 6),
            gradient=lambda x: np.array((0.0, a2 * x[1] ** 3)),
            name=f"example3: V={gain}^2 x2^4/4",
        )
    raise KeyError(f"no corpus certificate named {name!r}")


def derivative_along_field(
    cert: Certificate, field: TimeVaryingField, t: float, x: Sequence[float]
) -> float:
    """grad V(x) . f(t, x), the derivative of V along the flow."""
    x = np.asarray(x, dtype=float)
    if float(np.linalg.norm(x)) > cert.domain_radius * (1.0 + 1e-9):
        raise DomainError("state outside the certificate's domain ball")
    return float(np.dot(cert.grad(x), field.eval(t, x)))


def check_nonnegative(cert: Certificate, samples: int = 10_000, seed: int = 0) -> Verdict:
    """V >= 0 on a low-discrepancy sample of the ball, and V(0) = 0."""
    origin = float(cert.value(np.zeros(cert.dim)))
    if abs(origin) > 1e-14:
        return Verdict(
            check="certificate_nonnegative",
            status=FAIL,
            witness={"x": [0.0] * cert.dim, "value": origin, "reason": "V(0) != 0"},
            tolerance=1e-12,
            samples=samples,
        )
    pts = ball_points(samples, cert.dim, cert.domain_radius, seed)
    worst_val, worst_idx = 0.0, -1
    for i, x in enumerate(pts):
        v = float(cert.value(x))
        if v < worst_val:
            worst_val, worst_idx = v, i
    if worst_val < -1e-12:
        return Verdict(
            check="certificate_nonnegative",
            status=FAIL,
            witness={"x": pts[worst_idx].tolist(), "value": worst_val},
            tolerance=1e-12,
            samples=samples,
        )
    return Verdict(
        check="certificate_nonnegative",
        status=PASS,
        tolerance=1e-12,
        samples=samples,
        detail={"min_value": worst_val, "origin_value": origin},
    )


def check_decrease_bound(
    cert: Certificate,
    field: TimeVaryingField,
    t_samples: int = 16,
    x_samples: int = 2_000,
    t_range: tuple[float, float] = (0.0, 100.0),
    seed: int = 0,
    slack: float = 1e-10,
) -> Verdict:
    """grad V . f(t, x) <= W(x) and W(x) <= 0 over sampled (t, x) pairs."""
    pts = ball_points(x_samples, cert.dim, cert.domain_radius, seed)
    times = (0.0,) if field.autonomous else tuple(interval_points(t_samples, *t_range, seed + 1))
    worst = (-math.inf, None)  # (violation magnitude, witness)
    idx = 0
    for x in pts:
        g = cert.grad(x)
        w = float(cert.bound(x))
        if w > 1e-12 and w - 1e-12 > worst[0]:
            worst = (w - 1e-12, {"x": x.tolist(), "t": None, "violation": w, "reason": "W > 0"})
        for t in times:
            dv = float(np.dot(g, field.eval(float(t), x)))
            excess = dv - w
            if excess > slack and excess > worst[0]:
                worst = (
                    excess,
                    {"x": x.tolist(), "t": float(t), "violation": excess, "reason": "dV/dt > W"},
                )
            idx += 1
    if worst[1] is not None:
        return Verdict(
            check="derivative_decrease_bound",
            status=FAIL,
            witness=worst[1],
            tolerance=slack,
            samples=x_samples * len(times),
        )
    return Verdict(
        check="derivative_decrease_bound",
        status=PASS,
        tolerance=slack,
        samples=x_samples * len(times),
    )


def check_zero_set_time_invariance(
    field: TimeVaryingField,
    e_sample,
    t_grid: Sequence[float],
    rel_tol: float = 1e-10,
) -> Verdict:
    """f(t, .) restricted to the sampled zero set is independent of t.

    Inconclusive (not a pass) when the sample is empty.
    """
    points = np.asarray(getattr(e_sample, "points", e_sample), dtype=float)
    if len(points) == 0:
        return Verdict(
            check="zero_set_time_invariance",
            status=INCONCLUSIVE,
            tolerance=rel_tol,
            samples=0,
            detail={"reason": "empty zero-set sample"},
        )
    t_grid = [float(t) for t in t_grid]
    worst = (0.0, None)
    for x in points:
        values = [np.asarray(field.eval(t, x), dtype=float) for t in t_grid]
        for i in range(len(t_grid)):
            allowed = rel_tol * (1.0 + float(np.linalg.norm(values[i])))
            for j in range(i + 1, len(t_grid)):
                gap = float(np.linalg.norm(values[i] - values[j]))
                excess = gap - allowed
                if excess > worst[0]:
                    worst = (
                        excess,
                        {"x": x.tolist(), "t_i": t_grid[i], "t_j": t_grid[j], "violation": gap},
                    )
    if worst[1] is not None:
        return Verdict(
            check="zero_set_time_invariance",
            status=FAIL,
            witness=worst[1],
            tolerance=rel_tol,
            samples=len(points) * len(t_grid),
        )
    return Verdict(
        check="zero_set_time_invariance",
        status=PASS,
        tolerance=rel_tol,
        samples=len(points) * len(t_grid),
    )


def lyapunov_residual(
    cert: Certificate, system: AffineControlSystem, q: float, x: Sequence[float]
) -> float:
    """Residual grad V . f(x) + |h(x)|^q of the output-dissipation identity.

    Zero residual on the domain means V solves the identity exactly; residual
    <= 0 everywhere means V satisfies the relaxed inequality form.
    """
    x = np.asarray(x, dtype=float)
    if float(np.linalg.norm(x)) > cert.domain_radius * (1.0 + 1e-9):
        raise DomainError("state outside the certificate's domain ball")
    drift = np.asarray(system.drift.eval(0.0, x), dtype=float)
    return float(np.dot(cert.grad(x), drift) + abs(float(system.output(x))) ** q)


@dataclass(frozen=True)
class HypothesisReport:
    """Verdicts for the three certificate hypotheses plus their witnesses."""

    nonnegative: Verdict
    decrease_bound: Verdict
    zero_set_time_invariance: Verdict

    @property
    def all_passed(self) -> bool:
        return (
            self.nonnegative.passed
            and self.decrease_bound.passed
            and self.zero_set_time_invariance.passed
        )

    def to_dict(self) -> dict:
        return {
            "nonnegative": self.nonnegative.to_dict(),
            "decrease_bound": self.decrease_bound.to_dict(),
            "zero_set_time_invariance": self.zero_set_time_invariance.to_dict(),
        }


def hypothesis_report(
    cert: Certificate,
    field: TimeVaryingField,
    t_grid: Sequence[float] = tuple(float(k) for k in range(10)),
    x_samples: int = 2_000,
    zero_set_budget: int = 256,
    zero_set_tol: float = 1e-10,
    seed: int = 0,
) -> HypothesisReport:
    """Run all three hypothesis checks; the zero set is sampled from W."""
    from .invariance import sample_zero_set  # local import to avoid a cycle

    e_sample = sample_zero_set(
        cert.bound,
        radius=cert.domain_radius,
        tol=zero_set_tol,
        budget=zero_set_budget,
        dim=cert.dim,
        seed=seed,
    )
    return HypothesisReport(
        nonnegative=check_nonnegative(cert, samples=x_samples, seed=seed),
        decrease_bound=check_decrease_bound(cert, field, x_samples=x_samples, seed=seed),
        zero_set_time_invariance=check_zero_set_time_invariance(field, e_sample, t_grid),
    )
